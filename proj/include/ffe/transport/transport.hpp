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

// Soft correspondence by unbalanced entropic optimal transport.
//
// The plan minimizes <T, C> + eps * sum T (log T - 1)
//                   + lambda * (KL(T 1 | mu) + KL(T^T 1 | mu)),  mu = 1/n1,
// with C = 1 - cosine similarity of the feature rows. The solver works on the
// log scalings (la, lb), T = exp(-C/eps + la + lb), and is unrolled on the
// autodiff tape so gradients reach the features.

#include "ffe/autodiff/ops.hpp"
#include "ffe/autodiff/tape.hpp"
#include "ffe/core/frame.hpp"

#include <memory>
#include <vector>

namespace ffe {

enum class WeightMode {
    AsWritten,   // W_ij = exp(T_ij) / sum_{k in top-L} exp(T_ik)
    Normalized,  // W_ij = T_ij / sum_{k in top-L} T_ik
};

struct OTConfig {
    double epsilon = 0.03;
    double lambda = 10.0;
    std::size_t train_iterations = 30;
    std::size_t inference_iterations = 100;
    std::size_t top_l = 32;
    WeightMode weight_mode = WeightMode::Normalized;
    /// After each pair of scaling updates, move (la, lb) along the
    /// (+t, -t) direction to the dual optimum. The fixed point is unchanged.
    bool translation_step = true;
    /// Over-relaxation of each dual update, new = (1 - w) old + w update.
    double relaxation = 1.8;

    void validate() const;
};

struct SinkhornStats {
    /// Per iteration: max |change| of the dual potentials eps*la, eps*lb.
    std::vector<double> residuals;
    /// Per iteration: the dual objective (up to a constant). Never decreases.
    std::vector<double> dual;
};

/// S_ij = <fx_i, fy_j> / (|fx_i| |fy_j| + 1e-12)
ad::Var cosine_similarity(const ad::Var& fx, const ad::Var& fy);

/// C = 1 - S
ad::Var transport_cost(const ad::Var& similarity);

/// Unrolled log-domain scaling iterations; returns the n1 x n2 plan.
/// Throws Error(NonFinite) naming the iteration if a dual blows up.
ad::Var solve_transport(const ad::Var& cost, const OTConfig& cfg, std::size_t iterations,
                        SinkhornStats* stats = nullptr);

/// Value-only convenience.
ad::Matrix solve_transport(const ad::Matrix& cost, const OTConfig& cfg, std::size_t iterations,
                           SinkhornStats* stats = nullptr);

/// Column indices of the top-L plan entries per row, largest first, ties by
/// lower index. L is clamped to the column count.
ad::IndexList top_l_support(const ad::Matrix& plan, std::size_t top_l);

/// Tape nodes of the soft correspondence for one frame pair.
struct Correspondence {
    std::size_t top_l = 0;
    ad::IndexList support;   // n1 * top_l
    ad::Var weights;         // n1 x top_l, rows sum to 1
    ad::Var targets;         // n1 x 3, y*
    ad::Var confidence;      // n1 x 1, p
    ad::Var flow;            // n1 x 3, y* - x
};

Correspondence soft_correspondence(const ad::Var& plan, const ad::Var& similarity, const ad::Matrix& source,
                                   std::shared_ptr<const ad::Matrix> target, std::size_t top_l, WeightMode mode);

/// Plain-value result of initial_flow().
struct TransportPlan {
    ad::Matrix plan;           // n1 x n2
    std::size_t top_l = 0;
    ad::IndexList support;     // n1 * top_l
    ad::Matrix weights;        // n1 x top_l, aligned with support
    std::vector<Vec3> targets;
    std::vector<double> confidence;
    FlowField flow;
};

TransportPlan initial_flow(const ad::Matrix& plan, const ad::Matrix& similarity, const ParticleFrame& x,
                           const ParticleFrame& y, std::size_t top_l, WeightMode mode = WeightMode::Normalized);

}  // namespace ffe
