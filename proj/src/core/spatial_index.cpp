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

#include "ffe/core/spatial_index.hpp"

#include "ffe/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ffe {

namespace {

constexpr std::uint32_t kLeafSize = 12;

inline double sq_dist(const Vec3& a, const Vec3& b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

inline double box_sq_dist(const Vec3& q, const Vec3& lo, const Vec3& hi) {
    double d = 0.0;
    for (int a = 0; a < 3; ++a) {
        double t = 0.0;
        if (q[a] < lo[a]) t = lo[a] - q[a];
        else if (q[a] > hi[a]) t = q[a] - hi[a];
        d += t * t;
    }
    return d;
}

// Sorted candidate list of at most k entries, ordered by (d2, index).
struct BoundedList {
    struct Entry {
        double d2;
        std::uint32_t index;
        bool operator<(const Entry& o) const { return d2 < o.d2 || (d2 == o.d2 && index < o.index); }
    };
    std::size_t k;
    std::vector<Entry> items;

    bool full() const { return items.size() == k; }
    double worst() const { return full() ? items.back().d2 : std::numeric_limits<double>::infinity(); }

    void offer(double d2, std::uint32_t index) {
        Entry e{d2, index};
        if (full()) {
            if (!(e < items.back())) return;
            items.pop_back();
        }
        items.insert(std::upper_bound(items.begin(), items.end(), e), e);
    }
};

}  // namespace

SpatialIndex::SpatialIndex(const ParticleFrame& frame) {
    if (frame.empty()) fail(ErrorKind::InvalidArgument, "cannot index an empty particle frame");
    points_.assign(frame.positions().begin(), frame.positions().end());
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0u);
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, static_cast<std::uint32_t>(points_.size()));
}

std::int32_t SpatialIndex::build(std::uint32_t begin, std::uint32_t end) {
    Node node;
    node.begin = begin;
    node.end = end;
    node.lo = node.hi = points_[order_[begin]];
    for (std::uint32_t i = begin + 1; i < end; ++i) {
        const Vec3& p = points_[order_[i]];
        for (int a = 0; a < 3; ++a) {
            node.lo[a] = std::min(node.lo[a], p[a]);
            node.hi[a] = std::max(node.hi[a], p[a]);
        }
    }
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= kLeafSize) return id;

    int axis = 0;
    for (int a = 1; a < 3; ++a)
        if (node.hi[a] - node.lo[a] > node.hi[axis] - node.lo[axis]) axis = a;
    if (node.hi[axis] == node.lo[axis]) return id;  // all coincident: keep as a leaf

    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                         const double pa = points_[a][axis], pb = points_[b][axis];
                         return pa < pb || (pa == pb && a < b);
                     });
    const std::int32_t left = build(begin, mid);
    const std::int32_t right = build(mid, end);
    nodes_[id].axis = static_cast<std::uint8_t>(axis);
    nodes_[id].split = points_[order_[mid]][axis];
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

template <class Heap>
void SpatialIndex::search(std::int32_t id, const Vec3& q, Heap& heap) const {
    const Node& node = nodes_[id];
    if (node.left < 0) {
        for (std::uint32_t i = node.begin; i < node.end; ++i) {
            const std::uint32_t p = order_[i];
            heap.offer(sq_dist(q, points_[p]), p);
        }
        return;
    }
    std::int32_t first = node.left, second = node.right;
    if (q[node.axis] >= node.split) std::swap(first, second);
    // Children are visited when their box could hold a point at distance <=
    // the current worst, so equal-distance lower indices are never missed.
    if (box_sq_dist(q, nodes_[first].lo, nodes_[first].hi) <= heap.worst()) search(first, q, heap);
    if (box_sq_dist(q, nodes_[second].lo, nodes_[second].hi) <= heap.worst()) search(second, q, heap);
}

void SpatialIndex::knn_into(const Vec3& query, std::size_t k, std::vector<Neighbor>& out) const {
    require(k >= 1, "knn: k must be positive");
    BoundedList heap{std::min(k, points_.size()), {}};
    heap.items.reserve(heap.k + 1);
    search(0, query, heap);
    out.clear();
    out.reserve(heap.items.size());
    for (const auto& e : heap.items) out.push_back({e.index, std::sqrt(e.d2)});
}

std::vector<Neighbor> SpatialIndex::knn(const Vec3& query, std::size_t k) const {
    std::vector<Neighbor> out;
    knn_into(query, k, out);
    return out;
}

std::size_t SpatialIndex::nearest(const Vec3& query) const {
    BoundedList heap{1, {}};
    heap.items.reserve(2);
    search(0, query, heap);
    return heap.items.front().index;
}

}  // namespace ffe
