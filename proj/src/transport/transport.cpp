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

#include "ffe/transport/transport.hpp"

#include "ffe/error.hpp"
#include "ffe/simd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace ffe {

using ad::IndexList;
using ad::Matrix;
using ad::Tape;
using ad::Var;

void OTConfig::validate() const {
    require(epsilon > 0.0 && std::isfinite(epsilon), "transport: epsilon must be positive");
    require(lambda > 0.0 && std::isfinite(lambda), "transport: lambda must be positive");
    require(train_iterations >= 1 && inference_iterations >= 1, "transport: iteration counts must be >= 1");
    require(top_l >= 1, "transport: top_l must be >= 1");
    require(relaxation > 0.0 && relaxation < 2.0, "transport: relaxation must be in (0, 2)");
}

namespace {

constexpr double kNormGuard = 1e-12;

std::vector<double> row_norms(const Matrix& a) {
    std::vector<double> out(a.rows);
    const auto& k = simd::active();
    for (std::size_t i = 0; i < a.rows; ++i) out[i] = std::sqrt(k.dot(a.row(i), a.row(i), a.cols));
    return out;
}

}  // namespace

Var cosine_similarity(const Var& fx, const Var& fy) {
    const Matrix& X = fx.value();
    const Matrix& Y = fy.value();
    if (X.cols != Y.cols)
        fail(ErrorKind::InvalidArgument, "cosine_similarity: feature widths differ (" + std::to_string(X.cols) +
                                             " vs " + std::to_string(Y.cols) + ")");
    const auto& k = simd::active();
    Matrix dots(X.rows, Y.rows);
    k.gemm_nt(X.rows, Y.rows, X.cols, X.data.data(), Y.data.data(), dots.data.data());
    const auto a = row_norms(X);
    const auto b = row_norms(Y);
    Matrix out(X.rows, Y.rows);
    for (std::size_t i = 0; i < X.rows; ++i)
        for (std::size_t j = 0; j < Y.rows; ++j) out(i, j) = dots(i, j) / (a[i] * b[j] + kNormGuard);

    const std::size_t ix = fx.id(), iy = fy.id();
    return fx.tape()->record(std::move(out), {fx, fy}, [ix, iy, a, b, dots = std::move(dots)](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        const Matrix& X = t.value(ix);
        const Matrix& Y = t.value(iy);
        const std::size_t n1 = X.rows, n2 = Y.rows, d = X.cols;
        // S = D / den, den = a_i b_j + g.  dS/dD = 1/den, dS/da_i = -D b_j / den^2.
        Matrix q(n1, n2);
        std::vector<double> ca(n1, 0.0), cb(n2, 0.0);
        for (std::size_t i = 0; i < n1; ++i)
            for (std::size_t j = 0; j < n2; ++j) {
                const double den = a[i] * b[j] + kNormGuard;
                q(i, j) = G(i, j) / den;
                const double r = G(i, j) * dots(i, j) / (den * den);
                ca[i] += r * b[j];
                cb[j] += r * a[i];
            }
        const auto& k = simd::active();
        if (t.needs_grad(ix)) {
            Matrix& GX = t.grad(ix);
            k.gemm_nn(n1, d, n2, q.data.data(), Y.data.data(), GX.data.data());
            for (std::size_t i = 0; i < n1; ++i)
                if (a[i] > 0.0) k.axpy(-ca[i] / a[i], X.row(i), GX.row(i), d);
        }
        if (t.needs_grad(iy)) {
            Matrix& GY = t.grad(iy);
            k.gemm_tn(n2, d, n1, q.data.data(), X.data.data(), GY.data.data());
            for (std::size_t j = 0; j < n2; ++j)
                if (b[j] > 0.0) k.axpy(-cb[j] / b[j], Y.row(j), GY.row(j), d);
        }
    });
}

Var transport_cost(const Var& similarity) { return ad::add_scalar(ad::scale(similarity, -1.0), 1.0); }

namespace {

double max_abs_diff(const Matrix& a, const Matrix& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

void check_finite(const Matrix& m, const char* name, std::size_t iter) {
    for (double x : m.data)
        if (!std::isfinite(x))
            fail(ErrorKind::NonFinite,
                 std::string("solve_transport: non-finite ") + name + " at iteration " + std::to_string(iter));
}

// With the other block fixed, the dual separates into one concave term per
// coordinate, phi(x) = -lambda mu exp(-r x) - eps exp(x + s), maximized by
// the plain update. A coordinate takes the over-relaxed value only when
// phi still increases there, so every half step raises the dual.
struct DualTerm {
    double lambda_mu, eps, r, omega;
};

double dual_objective(const Matrix& m, const Matrix& la, const Matrix& lb, const DualTerm& d) {
    double mass = 0.0, marg = 0.0;
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) mass += std::exp(m(i, j) + la.data[i] + lb.data[j]);
        marg += std::exp(-d.r * la.data[i]);
    }
    for (double b : lb.data) marg += std::exp(-d.r * b);
    return -d.lambda_mu * marg - d.eps * mass;
}

Var relax(const Var& prev, const Var& next, const Var& lse, const DualTerm& d) {
    if (d.omega == 1.0) return next;
    const Matrix& o = prev.value();
    const Matrix& x = next.value();
    const Matrix& s = lse.value();
    Matrix w(o.rows, o.cols, 1.0);
    Tape& tape = *prev.tape();
    for (std::size_t i = 0; i < o.size(); ++i) {
        const double step = d.omega * (x.data[i] - o.data[i]);
        const double gain = -d.lambda_mu * std::exp(-d.r * o.data[i]) * std::expm1(-d.r * step) -
                            d.eps * std::exp(o.data[i] + s.data[i]) * std::expm1(step);
        if (gain > 0.0) w.data[i] = d.omega;
        if (tape.tracking_branches()) tape.note_branch(gain > 0.0 ? 1 : 2);
    }
    return ad::add(prev, ad::mul(ad::sub(next, prev), tape.constant(std::move(w))));
}

}  // namespace

Var solve_transport(const Var& cost, const OTConfig& cfg, std::size_t iterations, SinkhornStats* stats) {
    cfg.validate();
    require(iterations >= 1, "solve_transport: iterations must be >= 1");
    const Matrix& C = cost.value();
    require(C.rows >= 1 && C.cols >= 1, "solve_transport: empty cost matrix");
    for (std::size_t i = 0; i < C.size(); ++i)
        if (!std::isfinite(C.data[i]))
            fail(ErrorKind::NonFinite, "solve_transport: non-finite cost entry " + std::to_string(i));

    Tape& tape = *cost.tape();
    const std::size_t n1 = C.rows, n2 = C.cols;
    const double eps = cfg.epsilon;
    const double power = cfg.lambda / (cfg.lambda + eps);
    const double log_mu = -std::log(double(n1));  // both marginals carry mass 1/n1

    const Var m = ad::scale(cost, -1.0 / eps);
    Var la = tape.constant(Matrix(n1, 1, log_mu));
    Var lb = tape.constant(Matrix(1, n2, 0.0));
    const Var zeros_col = tape.constant(Matrix(n1, 1, 0.0));
    const Var zeros_row = tape.constant(Matrix(1, n2, 0.0));
    const double r = eps / cfg.lambda;
    const DualTerm dual{cfg.lambda / double(n1), eps, r, cfg.relaxation};

    if (stats) stats->residuals.clear(), stats->dual.clear();
    for (std::size_t it = 1; it <= iterations; ++it) {
        const Matrix la_prev = la.value();
        const Matrix lb_prev = lb.value();

        const Var sb = ad::lse_cols_plus(m, la);
        lb = relax(lb, ad::scale(ad::add_scalar(sb, -log_mu), -power), sb, dual);
        const Var sa = ad::lse_rows_plus(m, lb);
        la = relax(la, ad::scale(ad::add_scalar(sa, -log_mu), -power), sa, dual);

        if (cfg.translation_step) {
            // argmax_t of the dual along (la + t, lb - t): the log(mu) terms
            // cancel because both marginals are equal.
            const Var lse_a = ad::lse_cols_plus(ad::scale(la, -r), zeros_col);
            const Var lse_b = ad::lse_rows_plus(ad::scale(lb, -r), zeros_row);
            const Var shift = ad::scale(ad::sub(lse_a, lse_b), 0.5 / r);
            la = ad::add_row(la, shift);
            lb = ad::add_col(lb, ad::scale(shift, -1.0));
        }
        check_finite(la.value(), "source dual", it);
        check_finite(lb.value(), "target dual", it);
        if (stats) {
            stats->residuals.push_back(eps *
                                       std::max(max_abs_diff(la.value(), la_prev), max_abs_diff(lb.value(), lb_prev)));
            stats->dual.push_back(dual_objective(m.value(), la.value(), lb.value(), dual));
        }
    }
    const Var plan = ad::exp_outer(m, la, lb);
    check_finite(plan.value(), "plan", iterations);
    return plan;
}

Matrix solve_transport(const Matrix& cost, const OTConfig& cfg, std::size_t iterations, SinkhornStats* stats) {
    Tape tape;
    return solve_transport(tape.constant(cost), cfg, iterations, stats).value();
}

IndexList top_l_support(const Matrix& plan, std::size_t top_l) {
    require(top_l >= 1, "top_l_support: top_l must be >= 1");
    const std::size_t L = std::min(top_l, plan.cols);
    IndexList out;
    out.reserve(plan.rows * L);
    std::vector<std::uint32_t> order(plan.cols);
    for (std::size_t i = 0; i < plan.rows; ++i) {
        const double* row = plan.row(i);
        std::iota(order.begin(), order.end(), 0u);
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(L), order.end(),
                          [row](std::uint32_t a, std::uint32_t b) { return row[a] > row[b] || (row[a] == row[b] && a < b); });
        out.insert(out.end(), order.begin(), order.begin() + static_cast<std::ptrdiff_t>(L));
    }
    return out;
}

Correspondence soft_correspondence(const Var& plan, const Var& similarity, const Matrix& source,
                                   std::shared_ptr<const Matrix> target, std::size_t top_l, WeightMode mode) {
    const Matrix& T = plan.value();
    if (similarity.rows() != T.rows || similarity.cols() != T.cols)
        fail(ErrorKind::InvalidArgument, "soft_correspondence: plan and similarity shapes differ");
    if (source.rows != T.rows || source.cols != 3 || target->rows != T.cols || target->cols != 3)
        fail(ErrorKind::InvalidArgument, "soft_correspondence: frame sizes do not match the plan");

    Correspondence c;
    c.support = top_l_support(T, top_l);
    c.top_l = c.support.size() / T.rows;
    const Var picked = ad::gather_elems(plan, c.support, c.top_l);
    if (mode == WeightMode::AsWritten) {
        c.weights = ad::softmax_rows(picked);
    } else {
        c.weights = ad::div_col(picked, ad::sum_rows(picked));
    }
    c.targets = ad::weighted_gather(c.weights, c.support, std::move(target));
    const Var s = ad::gather_elems(similarity, c.support, c.top_l);
    c.confidence = ad::clamp_min(ad::sum_rows(ad::mul(c.weights, s)), 0.0);
    c.flow = ad::sub(c.targets, plan.tape()->constant(source));
    return c;
}

TransportPlan initial_flow(const Matrix& plan, const Matrix& similarity, const ParticleFrame& x,
                           const ParticleFrame& y, std::size_t top_l, WeightMode mode) {
    Tape tape;
    const Matrix src(x.size(), 3, x.flat());
    auto tgt = std::make_shared<const Matrix>(y.size(), 3, y.flat());
    const Correspondence c = soft_correspondence(tape.constant(plan), tape.constant(similarity), src, tgt, top_l, mode);

    TransportPlan out;
    out.plan = plan;
    out.top_l = c.top_l;
    out.support = c.support;
    out.weights = c.weights.value();
    const Matrix& t = c.targets.value();
    const Matrix& f = c.flow.value();
    std::vector<Vec3> flow(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out.targets.push_back({t(i, 0), t(i, 1), t(i, 2)});
        flow[i] = {f(i, 0), f(i, 1), f(i, 2)};
    }
    out.confidence = c.confidence.value().data;
    out.flow = FlowField(std::move(flow));
    return out;
}

}  // namespace ffe
