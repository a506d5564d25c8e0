// Copyright 2026 The ffe Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include "ffe/core/frame.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace ffe {

struct Neighbor {
    std::size_t index;
    double distance;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Exact k-nearest-neighbour queries over a fixed point set (kd-tree).
///
/// Results are ordered by (squared distance, index), so equal-distance
/// neighbours always come back lowest index first. The index is immutable
/// once built; concurrent const queries are safe.
class SpatialIndex {
public:
    explicit SpatialIndex(const ParticleFrame& frame);

    std::size_t size() const noexcept { return points_.size(); }

    /// min(k, size()) neighbours of `query`. Throws on k == 0.
    std::vector<Neighbor> knn(const Vec3& query, std::size_t k) const;

    /// Same as knn() but writes into a caller-owned buffer.
    void knn_into(const Vec3& query, std::size_t k, std::vector<Neighbor>& out) const;

    /// Index of the single nearest point (lowest index on ties).
    std::size_t nearest(const Vec3& query) const;

private:
    struct Node {
        // Leaves: [begin, end) into order_. Inner nodes: split on `axis` at `split`.
        std::uint32_t begin = 0, end = 0;
        std::int32_t left = -1, right = -1;
        std::uint8_t axis = 0;
        double split = 0.0;
        Vec3 lo{}, hi{};
    };

    std::int32_t build(std::uint32_t begin, std::uint32_t end);
    template <class Heap>
    void search(std::int32_t node, const Vec3& q, Heap& heap) const;

    std::vector<Vec3> points_;
    std::vector<std::uint32_t> order_;
    std::vector<Node> nodes_;
};

}  // namespace ffe
