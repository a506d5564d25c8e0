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

// Self-supervised losses: confidence-weighted nearest-neighbour
// reconstruction, L1 neighbour smoothness, and the zero-divergence penalty
// on a splatted lattice.

#include "ffe/autodiff/ops.hpp"
#include "ffe/autodiff/tape.hpp"
#include "ffe/core/frame.hpp"
#include "ffe/core/grid.hpp"
#include "ffe/core/knn_graph.hpp"
#include "ffe/core/spatial_index.hpp"

#include <memory>
#include <span>
#include <vector>

namespace ffe {

enum class SplatMode {
    AsWritten,   // (1/|N|) sum f_i / (d_i^2 + eps)
    Normalized,  // sum w_i f_i / sum w_i, w_i = 1 / (d_i^2 + eps)
};

enum class GridPlacement {
    Interior,   // spacing extent/(G+1): every stencil point stays inside the box
    Enclosing,  // bounding_grid() with the configured margin
};

struct LossWeights {
    double lambda_conf = 0.1;
    double lambda_smooth = 10.0;
    double lambda_div = 0.1;
    std::size_t smooth_k = 32;
    std::size_t div_k = 2;
    double splat_eps = 1e-6;
    std::size_t grid_g = 10;
    double grid_margin = 0.05;
    SplatMode splat_mode = SplatMode::Normalized;
    GridPlacement grid_placement = GridPlacement::Interior;

    void validate() const;
};

/// Lattice on which the divergence is evaluated.
Grid divergence_grid(const ParticleFrame& x, const LossWeights& w);

/// Flow values interpolated onto a lattice.
struct GridField {
    Grid grid;
    std::vector<Vec3> values;  // grid.size(), l fastest
};

/// Linear interpolation operator: row q holds the weights of the div_k
/// particles nearest to points[q].
ad::SparseRows splat_weights(const SpatialIndex& index, const ParticleFrame& x, std::span<const Vec3> points,
                             std::size_t div_k, double eps, SplatMode mode);

std::vector<Vec3> splat_at(const ParticleFrame& x, const FlowField& f, std::span<const Vec3> points,
                           std::size_t div_k, double eps, SplatMode mode);
GridField splat(const ParticleFrame& x, const FlowField& f, const Grid& grid, std::size_t div_k, double eps,
                SplatMode mode);

/// Sparse map from the row-major n x 3 flow to the central-difference
/// divergence at every grid point. Depends on positions only.
std::shared_ptr<const ad::SparseRows> divergence_operator(const ParticleFrame& x, const Grid& grid,
                                                          std::size_t div_k, double eps, SplatMode mode);

// ---------------------------------------------------------------------------
// tape versions
// ---------------------------------------------------------------------------

/// mean_i p_i |y'_i - nn_Y(y'_i)|^2 + lambda_conf * mean_i (1 - p_i).
/// The nearest neighbour is found on the current values and held fixed.
ad::Var reconstruction_loss(const ad::Var& warped, const ad::Var& confidence, const SpatialIndex& target_index,
                            const ParticleFrame& target, double lambda_conf);

/// sum_i sum_{k in N(i)} |f_i - f_k|_1 / (n k). Zero when the graph has no edges.
ad::Var smooth_loss(const ad::Var& flow, const KnnGraph& graph);

/// mean over grid points of |div|.
ad::Var divergence_loss(const ad::Var& flow, std::shared_ptr<const ad::SparseRows> op);

/// Everything about one frame pair that the losses need and that does not
/// change while the flow is being optimized.
struct LossContext {
    ParticleFrame source;
    ParticleFrame target;
    std::shared_ptr<const SpatialIndex> target_index;
    KnnGraph smooth_graph;
    std::shared_ptr<const ad::SparseRows> div_op;  // null when lambda_div == 0

    static LossContext build(const ParticleFrame& source, const ParticleFrame& target, const LossWeights& w);
};

struct TrainLoss {
    ad::Var total;
    ad::Var recon;
    ad::Var smooth;
    ad::Var div;
};

/// L_recon + lambda_smooth * L_smooth + lambda_div * L_div.
TrainLoss train_loss(const LossContext& ctx, const ad::Var& flow, const ad::Var& confidence, const LossWeights& w);

// ---------------------------------------------------------------------------
// value versions
// ---------------------------------------------------------------------------

double reconstruction_loss(const ParticleFrame& warped, const ParticleFrame& target, std::span<const double> p,
                           double lambda_conf);
/// Sets *degenerate when n < 2 (the loss is then 0).
double smooth_loss(const ParticleFrame& x, const FlowField& f, std::size_t smooth_k, bool* degenerate = nullptr);
double divergence_loss(const ParticleFrame& x, const FlowField& f, const LossWeights& w);

struct LossBreakdown {
    double total = 0, recon = 0, smooth = 0, div = 0;
};
LossBreakdown train_loss(const ParticleFrame& x, const ParticleFrame& y, const FlowField& f, std::span<const double> p,
                         const LossWeights& w);

}  // namespace ffe
