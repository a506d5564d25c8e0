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

// Test-time refinement: optimize a residual R on top of the initial flow so
// that the warped source lands on the target, weighted by the fixed
// confidences.

#include "ffe/autodiff/tape.hpp"
#include "ffe/core/frame.hpp"
#include "ffe/core/spatial_index.hpp"

#include <span>
#include <vector>

namespace ffe {

struct DveConfig {
    std::size_t steps = 150;
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const;
};

struct RefinementTrace {
    std::vector<double> objective;  // steps + 1 values, [0] is the starting point
    FlowField residual;
    FlowField flow;                 // initial + residual
    std::size_t best_step = 0;      // iterate that was returned
};

/// mean_i p_i min_j |x_i + f_i + r_i - y_j|^2 as a tape node of `residual`.
ad::Var dve_objective(const ad::Var& residual, const ad::Matrix& warped, const ad::Matrix& confidence,
                      const SpatialIndex& target_index, const ParticleFrame& target);

RefinementTrace refine(const ParticleFrame& x, const FlowField& initial, std::span<const double> confidence,
                       const ParticleFrame& y, const DveConfig& cfg = {});

}  // namespace ffe
