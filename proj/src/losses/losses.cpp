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

#include "ffe/losses/losses.hpp"

#include "ffe/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace ffe {

using ad::Matrix;
using ad::SparseRows;
using ad::Tape;
using ad::Var;

void LossWeights::validate() const {
    require(lambda_conf >= 0.0 && lambda_smooth >= 0.0 && lambda_div >= 0.0, "losses: weights must be >= 0");
    require(smooth_k >= 1, "losses: smooth_k must be >= 1");
    require(div_k >= 1, "losses: div_k must be >= 1");
    require(splat_eps > 0.0, "losses: splat_eps must be > 0");
    require(grid_g >= 2, "losses: grid_g must be >= 2");
    require(grid_margin >= 0.0, "losses: grid_margin must be >= 0");
}

Grid divergence_grid(const ParticleFrame& x, const LossWeights& w) {
    return w.grid_placement == GridPlacement::Interior ? interior_grid(x, w.grid_g)
                                                       : bounding_grid(x, w.grid_g, w.grid_margin);
}

// ============================================================================
// splatting
// ============================================================================

SparseRows splat_weights(const SpatialIndex& index, const ParticleFrame& x, std::span<const Vec3> points,
                         std::size_t div_k, double eps, SplatMode mode) {
    require(div_k >= 1, "splat: div_k must be >= 1");
    require(eps > 0.0, "splat: eps must be > 0");
    SparseRows s;
    s.rows = points.size();
    s.cols = x.size();
    s.offsets.reserve(points.size() + 1);
    s.offsets.push_back(0);
    std::vector<Neighbor> nb;
    for (const Vec3& q : points) {
        index.knn_into(q, div_k, nb);
        double total = 0.0;
        const std::size_t first = s.coef.size();
        for (const auto& e : nb) {
            const double w = 1.0 / (squared_distance(x[e.index], q) + eps);
            s.index.push_back(static_cast<std::uint32_t>(e.index));
            s.coef.push_back(w);
            total += w;
        }
        const double norm = mode == SplatMode::Normalized ? total : double(nb.size());
        for (std::size_t e = first; e < s.coef.size(); ++e) s.coef[e] /= norm;
        s.offsets.push_back(static_cast<std::uint32_t>(s.coef.size()));
    }
    return s;
}

std::vector<Vec3> splat_at(const ParticleFrame& x, const FlowField& f, std::span<const Vec3> points, std::size_t div_k,
                           double eps, SplatMode mode) {
    require(f.size() == x.size(), "splat: flow and frame sizes differ");
    const SpatialIndex index(x);
    const SparseRows s = splat_weights(index, x, points, div_k, eps, mode);
    std::vector<Vec3> out(points.size(), Vec3{0, 0, 0});
    for (std::size_t q = 0; q < s.rows; ++q)
        for (std::uint32_t e = s.offsets[q]; e < s.offsets[q + 1]; ++e) out[q] = out[q] + s.coef[e] * f[s.index[e]];
    return out;
}

GridField splat(const ParticleFrame& x, const FlowField& f, const Grid& grid, std::size_t div_k, double eps,
                SplatMode mode) {
    std::vector<Vec3> pts(grid.size());
    for (std::size_t g = 0; g < pts.size(); ++g) pts[g] = grid.point(g);
    return {grid, splat_at(x, f, pts, div_k, eps, mode)};
}

std::shared_ptr<const SparseRows> divergence_operator(const ParticleFrame& x, const Grid& grid, std::size_t div_k,
                                                      double eps, SplatMode mode) {
    const SpatialIndex index(x);
    const double s = grid.spacing;
    // Six stencil points per lattice point: +x, -x, +y, -y, +z, -z.
    std::vector<Vec3> stencil;
    stencil.reserve(grid.size() * 6);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const Vec3 c = grid.point(g);
        for (int a = 0; a < 3; ++a) {
            Vec3 hi = c, lo = c;
            hi[a] += s;
            lo[a] -= s;
            stencil.push_back(hi);
            stencil.push_back(lo);
        }
    }
    const SparseRows w = splat_weights(index, x, stencil, div_k, eps, mode);

    auto op = std::make_shared<SparseRows>();
    op->rows = grid.size();
    op->cols = 3 * x.size();
    op->offsets.push_back(0);
    std::map<std::uint32_t, double> row;
    const double inv = 1.0 / (2.0 * s);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        row.clear();
        for (int a = 0; a < 3; ++a)
            for (int side = 0; side < 2; ++side) {
                const std::size_t q = g * 6 + std::size_t(a) * 2 + std::size_t(side);
                const double sign = side == 0 ? inv : -inv;
                for (std::uint32_t e = w.offsets[q]; e < w.offsets[q + 1]; ++e)
                    row[3 * w.index[e] + std::uint32_t(a)] += sign * w.coef[e];
            }
        for (auto [col, c] : row) {
            op->index.push_back(col);
            op->coef.push_back(c);
        }
        op->offsets.push_back(static_cast<std::uint32_t>(op->index.size()));
    }
    return op;
}

// ============================================================================
// tape losses
// ============================================================================

Var reconstruction_loss(const Var& warped, const Var& confidence, const SpatialIndex& target_index,
                        const ParticleFrame& target, double lambda_conf) {
    const Matrix& w = warped.value();
    require(w.rows >= 1 && w.cols == 3, "reconstruction_loss: warped points must be n x 3 with n >= 1");
    require(confidence.rows() == w.rows && confidence.cols() == 1, "reconstruction_loss: confidence must be n x 1");
    require(target_index.size() == target.size(), "reconstruction_loss: index does not match the target frame");
    Tape& tape = *warped.tape();
    Matrix nearest(w.rows, 3);
    for (std::size_t i = 0; i < w.rows; ++i) {
        const std::size_t j = target_index.nearest({w(i, 0), w(i, 1), w(i, 2)});
        if (tape.tracking_branches()) tape.note_branch(j);
        const Vec3& y = target[j];
        std::copy(y.begin(), y.end(), nearest.row(i));
    }
    const Var d = ad::sub(warped, tape.constant(std::move(nearest)));
    const Var sq = ad::sum_rows(ad::mul(d, d));
    Var loss = ad::mean(ad::mul(confidence, sq));
    if (lambda_conf != 0.0)
        loss = ad::add(loss, ad::scale(ad::mean(ad::add_scalar(ad::scale(confidence, -1.0), 1.0)), lambda_conf));
    return loss;
}

Var smooth_loss(const Var& flow, const KnnGraph& graph) {
    require(flow.rows() == graph.n && flow.cols() == 3, "smooth_loss: flow does not match the graph");
    Tape& tape = *flow.tape();
    if (graph.n < 2) return tape.constant(Matrix(1, 1, 0.0));
    const Var d = ad::sub(ad::gather_rows(flow, graph.neighbors), ad::gather_rows(flow, graph.centers));
    return ad::scale(ad::sum(ad::abs(d)), 1.0 / double(graph.n * graph.k));
}

Var divergence_loss(const Var& flow, std::shared_ptr<const SparseRows> op) {
    require(op != nullptr, "divergence_loss: missing operator");
    return ad::mean(ad::abs(ad::sparse_matvec(std::move(op), flow)));
}

LossContext LossContext::build(const ParticleFrame& source, const ParticleFrame& target, const LossWeights& w) {
    w.validate();
    LossContext c;
    c.source = source;
    c.target = target;
    c.target_index = std::make_shared<const SpatialIndex>(target);
    c.smooth_graph = position_graph(source, w.smooth_k);
    if (w.lambda_div > 0.0)
        c.div_op = divergence_operator(source, divergence_grid(source, w), w.div_k, w.splat_eps, w.splat_mode);
    return c;
}

TrainLoss train_loss(const LossContext& ctx, const Var& flow, const Var& confidence, const LossWeights& w) {
    Tape& tape = *flow.tape();
    const Var warped = ad::add(tape.constant(Matrix(ctx.source.size(), 3, ctx.source.flat())), flow);
    TrainLoss l;
    l.recon = reconstruction_loss(warped, confidence, *ctx.target_index, ctx.target, w.lambda_conf);
    l.smooth = smooth_loss(flow, ctx.smooth_graph);
    l.total = ad::add(l.recon, ad::scale(l.smooth, w.lambda_smooth));
    if (w.lambda_div > 0.0) {
        require(ctx.div_op != nullptr, "train_loss: context was built without a divergence operator");
        l.div = divergence_loss(flow, ctx.div_op);
        l.total = ad::add(l.total, ad::scale(l.div, w.lambda_div));
    } else {
        l.div = tape.constant(Matrix(1, 1, 0.0));
    }
    return l;
}

// ============================================================================
// value wrappers
// ============================================================================

namespace {

Matrix as_matrix(std::span<const Vec3> v) {
    Matrix m(v.size(), 3);
    for (std::size_t i = 0; i < v.size(); ++i) std::copy(v[i].begin(), v[i].end(), m.row(i));
    return m;
}

}  // namespace

double reconstruction_loss(const ParticleFrame& warped, const ParticleFrame& target, std::span<const double> p,
                           double lambda_conf) {
    require(p.size() == warped.size(), "reconstruction_loss: confidence size differs from the warped frame");
    Tape tape;
    const SpatialIndex index(target);
    const Var w = tape.constant(as_matrix(warped.positions()));
    const Var c = tape.constant(Matrix(p.size(), 1, std::vector<double>(p.begin(), p.end())));
    return reconstruction_loss(w, c, index, target, lambda_conf).item();
}

double smooth_loss(const ParticleFrame& x, const FlowField& f, std::size_t smooth_k, bool* degenerate) {
    require(f.size() == x.size(), "smooth_loss: flow and frame sizes differ");
    if (degenerate) *degenerate = x.size() < 2;
    if (x.size() < 2) return 0.0;
    Tape tape;
    return smooth_loss(tape.constant(as_matrix(f.vectors())), position_graph(x, smooth_k)).item();
}

double divergence_loss(const ParticleFrame& x, const FlowField& f, const LossWeights& w) {
    w.validate();
    require(f.size() == x.size(), "divergence_loss: flow and frame sizes differ");
    Tape tape;
    const auto op = divergence_operator(x, divergence_grid(x, w), w.div_k, w.splat_eps, w.splat_mode);
    return divergence_loss(tape.constant(as_matrix(f.vectors())), op).item();
}

LossBreakdown train_loss(const ParticleFrame& x, const ParticleFrame& y, const FlowField& f, std::span<const double> p,
                         const LossWeights& w) {
    require(f.size() == x.size() && p.size() == x.size(), "train_loss: sizes differ");
    const LossContext ctx = LossContext::build(x, y, w);
    Tape tape;
    const Var flow = tape.constant(as_matrix(f.vectors()));
    const Var conf = tape.constant(Matrix(p.size(), 1, std::vector<double>(p.begin(), p.end())));
    const TrainLoss l = train_loss(ctx, flow, conf, w);
    return {l.total.item(), l.recon.item(), l.smooth.item(), l.div.item()};
}

}  // namespace ffe
