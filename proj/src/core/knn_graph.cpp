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

#include "ffe/core/knn_graph.hpp"

#include "ffe/core/spatial_index.hpp"
#include "ffe/error.hpp"
#include "ffe/simd/kernels.hpp"

#include <algorithm>
#include <numeric>

namespace ffe {

using ad::IndexList;
using ad::Matrix;

namespace {

// Drops `self` from a sorted neighbour list of length k+1, or the farthest
// entry if self was displaced by duplicates.
void append_without_self(const std::vector<Neighbor>& nb, std::size_t self, std::size_t k, IndexList& out) {
    std::size_t taken = 0;
    bool skipped = false;
    for (const auto& e : nb) {
        if (taken == k) break;
        if (!skipped && e.index == self) {
            skipped = true;
            continue;
        }
        out.push_back(static_cast<std::uint32_t>(e.index));
        ++taken;
    }
}

KnnGraph empty_graph(std::size_t n, std::size_t k) {
    KnnGraph g;
    g.n = n;
    g.k = n == 1 ? 1 : std::min(k, n - 1);
    g.neighbors.reserve(n * g.k);
    g.centers.reserve(n * g.k);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < g.k; ++j) g.centers.push_back(static_cast<std::uint32_t>(i));
    return g;
}

}  // namespace

KnnGraph position_graph(const ParticleFrame& frame, std::size_t k) {
    require(k >= 1, "position_graph: k must be >= 1");
    const std::size_t n = frame.size();
    KnnGraph g = empty_graph(n, k);
    if (n == 1) {
        g.neighbors.push_back(0);
        return g;
    }
    const SpatialIndex index(frame);
    std::vector<Neighbor> nb;
    for (std::size_t i = 0; i < n; ++i) {
        index.knn_into(frame[i], g.k + 1, nb);
        append_without_self(nb, i, g.k, g.neighbors);
    }
    return g;
}

KnnGraph feature_graph(const Matrix& features, std::size_t k) {
    require(k >= 1, "feature_graph: k must be >= 1");
    const std::size_t n = features.rows, d = features.cols;
    KnnGraph g = empty_graph(n, k);
    if (n == 1) {
        g.neighbors.push_back(0);
        return g;
    }
    const auto& kern = simd::active();
    std::vector<double> dist(n);
    std::vector<std::uint32_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        kern.sq_dists(features.row(i), features.data.data(), n, d, dist.data());
        std::iota(order.begin(), order.end(), 0u);
        dist[i] = -1.0;  // self sorts first and is skipped below
        auto less = [&](std::uint32_t a, std::uint32_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); };
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(g.k + 1), order.end(), less);
        for (std::size_t j = 1; j <= g.k; ++j) g.neighbors.push_back(order[j]);
    }
    return g;
}

}  // namespace ffe
