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

#include "ffe/autodiff/ops.hpp"
#include "ffe/core/frame.hpp"

namespace ffe {

/// Neighbour lists with a fixed degree k = min(k_requested, n - 1).
/// Self is excluded, except for a single point, which is its own neighbour.
struct KnnGraph {
    std::size_t n = 0;
    std::size_t k = 0;
    ad::IndexList neighbors;  // n * k, row i at [i*k, (i+1)*k)
    ad::IndexList centers;    // i repeated k times
};

KnnGraph position_graph(const ParticleFrame& frame, std::size_t k);

/// Exact brute-force k-NN between rows of `features`, ties by lower index.
KnnGraph feature_graph(const ad::Matrix& features, std::size_t k);

}  // namespace ffe
