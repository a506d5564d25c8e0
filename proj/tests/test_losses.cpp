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

#include <doctest.h>

#include "ffe/autodiff/gradcheck.hpp"
#include "ffe/error.hpp"
#include "ffe/losses/losses.hpp"
#include "support/oracles.hpp"

#include <cmath>
#include <numbers>

using namespace ffe;
using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

double oracle_recon(const std::vector<Vec3>& yp, const std::vector<Vec3>& y, const std::vector<double>& p,
                    double lambda_conf) {
    double fit = 0, pen = 0;
    for (std::size_t i = 0; i < yp.size(); ++i) {
        double best = INFINITY;
        for (const auto& q : y) best = std::min(best, squared_distance(yp[i], q));
        fit += p[i] * best;
        pen += 1.0 - p[i];
    }
    return (fit + lambda_conf * pen) / double(yp.size());
}

// Self is dropped from the k+1 nearest; random points have no ties.
double oracle_smooth(const std::vector<Vec3>& x, const std::vector<Vec3>& f, std::size_t k) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        std::size_t used = 0;
        for (const auto& nb : testing::brute_knn(x, x[i], k + 1)) {
            if (nb.index == i || used == k) continue;
            ++used;
            for (int a = 0; a < 3; ++a) s += std::fabs(f[i][a] - f[nb.index][a]);
        }
    }
    return s / double(x.size() * k);
}

Vec3 oracle_splat(const std::vector<Vec3>& x, const std::vector<Vec3>& f, const Vec3& q, std::size_t k, double eps,
                  bool normalized) {
    Vec3 num{0, 0, 0};
    double den = 0;
    const auto nbs = testing::brute_knn(x, q, k);
    for (const auto& nb : nbs) {
        const double w = 1.0 / (nb.distance * nb.distance + eps);
        num = num + w * f[nb.index];
        den += w;
    }
    return normalized ? (1.0 / den) * num : (1.0 / double(nbs.size())) * num;
}

// Interior lattice: cubic spacing extent/(G+1), centred on the bounding box.
double oracle_div(const std::vector<Vec3>& x, const std::vector<Vec3>& f, std::size_t g, std::size_t k, double eps) {
    Vec3 lo = x[0], hi = x[0];
    for (const auto& p : x)
        for (int a = 0; a < 3; ++a) lo[a] = std::min(lo[a], p[a]), hi[a] = std::max(hi[a], p[a]);
    const double ext = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]});
    const double s = ext / double(g + 1);
    const Vec3 c = 0.5 * (lo + hi);
    double total = 0;
    for (std::size_t j = 0; j < g; ++j)
        for (std::size_t kk = 0; kk < g; ++kk)
            for (std::size_t l = 0; l < g; ++l) {
                const double idx[3] = {double(j), double(kk), double(l)};
                Vec3 p;
                for (int a = 0; a < 3; ++a) p[a] = c[a] + s * (idx[a] - 0.5 * double(g - 1));
                double div = 0;
                for (int a = 0; a < 3; ++a) {
                    Vec3 up = p, dn = p;
                    up[a] += s;
                    dn[a] -= s;
                    div += (oracle_splat(x, f, up, k, eps, true)[a] - oracle_splat(x, f, dn, k, eps, true)[a]) / (2 * s);
                }
                total += std::fabs(div);
            }
    return total / double(g * g * g);
}

// Ethier-Steinman velocity written out independently of the synth module.
Vec3 beltrami(const Vec3& p) {
    const double a = std::numbers::pi / 4, d = std::numbers::pi / 2;
    const double x = p[0], y = p[1], z = p[2];
    return {-a * (std::exp(a * x) * std::sin(a * y + d * z) + std::exp(a * z) * std::cos(a * x + d * y)),
            -a * (std::exp(a * y) * std::sin(a * z + d * x) + std::exp(a * x) * std::cos(a * y + d * z)),
            -a * (std::exp(a * z) * std::sin(a * x + d * y) + std::exp(a * y) * std::cos(a * z + d * x))};
}

Matrix as_matrix(const std::vector<Vec3>& v) {
    Matrix m(v.size(), 3);
    for (std::size_t i = 0; i < v.size(); ++i)
        for (int a = 0; a < 3; ++a) m(i, a) = v[i][a];
    return m;
}

}  // namespace

TEST_CASE("reconstruction loss") {
    const auto y = testing::random_points(30, 1);
    const std::vector<double> ones(30, 1.0), zeros(30, 0.0);
    CHECK(reconstruction_loss(ParticleFrame(y), ParticleFrame(y), ones, 0.1) == 0.0);
    CHECK(reconstruction_loss(ParticleFrame(testing::random_points(30, 2)), ParticleFrame(y), zeros, 0.1) == 0.1);

    // Three well separated points, each warped 0.1 along x.
    const std::vector<Vec3> t3 = {{0, 0, 0}, {1, 0, 0}, {0, 5, 0}};
    std::vector<Vec3> w3 = t3;
    for (auto& p : w3) p[0] += 0.1;
    CHECK(reconstruction_loss(ParticleFrame(w3), ParticleFrame(t3), std::vector<double>(3, 1.0), 0.1) ==
          doctest::Approx(0.01).epsilon(1e-14));

    const auto yp = testing::random_points(40, 3);
    std::vector<double> p(40);
    for (std::size_t i = 0; i < 40; ++i) p[i] = double(i % 7) / 7.0;
    CHECK(reconstruction_loss(ParticleFrame(yp), ParticleFrame(y), p, 0.3) ==
          doctest::Approx(oracle_recon(yp, y, p, 0.3)).epsilon(1e-13));
    CHECK_THROWS_AS(reconstruction_loss(ParticleFrame(yp), ParticleFrame(y), zeros, 0.1), Error);
}

TEST_CASE("smooth loss") {
    const std::vector<Vec3> two = {{0, 0, 0}, {1, 0, 0}};
    CHECK(smooth_loss(ParticleFrame(two), FlowField({{0, 0, 0}, {1, 2, 3}}), 1) == 6.0);

    const auto x = testing::random_points(50, 4);
    const auto f = testing::random_vectors(50, 5, 1.0);
    for (std::size_t k : {1u, 5u, 32u})
        CHECK(smooth_loss(ParticleFrame(x), FlowField(f), k) == doctest::Approx(oracle_smooth(x, f, k)).epsilon(1e-13));

    std::vector<Vec3> g = f;
    for (auto& v : g) v = -2.5 * v;
    CHECK(smooth_loss(ParticleFrame(x), FlowField(g), 8) ==
          doctest::Approx(2.5 * smooth_loss(ParticleFrame(x), FlowField(f), 8)).epsilon(1e-13));
    CHECK(smooth_loss(ParticleFrame(x), FlowField(std::vector<Vec3>(50, Vec3{1, 2, 3})), 8) == 0.0);

    bool degenerate = false;
    CHECK(smooth_loss(ParticleFrame(std::vector<Vec3>{{0, 0, 0}}), FlowField({{1, 1, 1}}), 4, &degenerate) == 0.0);
    CHECK(degenerate);
    smooth_loss(ParticleFrame(x), FlowField(f), 4, &degenerate);
    CHECK(!degenerate);
}

TEST_CASE("splat modes") {
    const auto x = testing::random_points(40, 6);
    const auto f = testing::random_vectors(40, 7, 1.0);
    const auto q = testing::random_points(25, 8, -0.2, 1.2);
    for (bool normalized : {false, true}) {
        const auto mode = normalized ? SplatMode::Normalized : SplatMode::AsWritten;
        const auto v = splat_at(ParticleFrame(x), FlowField(f), q, 4, 1e-3, mode);
        for (std::size_t i = 0; i < q.size(); ++i) {
            const Vec3 e = oracle_splat(x, f, q[i], 4, 1e-3, normalized);
            for (int a = 0; a < 3; ++a) CHECK(v[i][a] == doctest::Approx(e[a]).epsilon(1e-13));
        }
    }

    // Constant flow is reproduced exactly by the normalized form.
    const Vec3 c{0.3, -1.7, 2.2};
    for (const auto& v : splat_at(ParticleFrame(x), FlowField(std::vector<Vec3>(40, c)), q, 5, 1e-6, SplatMode::Normalized))
        for (int a = 0; a < 3; ++a) CHECK(v[a] == doctest::Approx(c[a]).epsilon(1e-14));

    // Single particle sitting on a lattice point.
    Grid grid;
    grid.nx = grid.ny = grid.nz = 2;
    const auto one = splat(ParticleFrame(std::vector<Vec3>{{0, 0, 0}}), FlowField({{1, 2, 2}}), grid, 1, 1e-6,
                           SplatMode::AsWritten);
    CHECK(one.values.size() == 8);
    CHECK(one.values[0][0] == doctest::Approx(1e6).epsilon(1e-14));
    CHECK(norm(one.values[0]) == doctest::Approx(3e6).epsilon(1e-14));

    // Two particles equidistant from the query point.
    const std::vector<Vec3> pair = {{-1, 0, 0}, {1, 0, 0}};
    const auto mid = splat_at(ParticleFrame(pair), FlowField({{1, 0, 4}, {3, 2, 0}}), std::vector<Vec3>{{0, 0, 0}}, 2,
                              1e-6, SplatMode::Normalized);
    CHECK(mid[0][0] == doctest::Approx(2.0));
    CHECK(mid[0][1] == doctest::Approx(1.0));
    CHECK(mid[0][2] == doctest::Approx(2.0));
}

TEST_CASE("divergence loss matches an independent stencil") {
    const auto x = testing::random_points(64, 9);
    const auto f = testing::random_vectors(64, 10, 1.0);
    LossWeights w;
    w.div_k = 3;
    w.grid_g = 5;
    CHECK(divergence_loss(ParticleFrame(x), FlowField(f), w) ==
          doctest::Approx(oracle_div(x, f, 5, 3, w.splat_eps)).epsilon(1e-12));
}

TEST_CASE("divergence of constant and linear fields") {
    const auto lat = testing::lattice(16, -1.0, 1.0);
    REQUIRE(lat.size() == 4096);
    const ParticleFrame x(lat);
    const LossWeights w;
    CHECK(divergence_loss(x, FlowField(std::vector<Vec3>(lat.size(), Vec3{0.4, -1, 3})), w) < 1e-12);
    CHECK(divergence_loss(ParticleFrame(testing::random_points(300, 11)),
                          FlowField(std::vector<Vec3>(300, Vec3{2, 2, 2})), w) < 1e-12);

    const double div3 = divergence_loss(x, FlowField(lat), w);
    CHECK(div3 >= 2.85);
    CHECK(div3 <= 3.15);

    // Trace zero: a shear plus a traceless diagonal.
    std::vector<Vec3> shear(lat.size());
    for (std::size_t i = 0; i < lat.size(); ++i) shear[i] = {lat[i][0] + lat[i][1], -lat[i][1], lat[i][0]};
    CHECK(divergence_loss(x, FlowField(shear), w) < 0.15);
}

TEST_CASE("divergence separates a solenoidal field from its sign-flipped control") {
    const auto lat = testing::lattice(16, -1.0, 1.0);
    std::vector<Vec3> u(lat.size()), flipped(lat.size());
    for (std::size_t i = 0; i < lat.size(); ++i) {
        u[i] = beltrami(lat[i]);
        flipped[i] = {u[i][0], u[i][1], -u[i][2]};
    }
    const LossWeights w;
    const double free = divergence_loss(ParticleFrame(lat), FlowField(u), w);
    const double control = divergence_loss(ParticleFrame(lat), FlowField(flipped), w);
    CHECK(control >= 5.0 * free);
}

TEST_CASE("translation leaves smooth and divergence losses unchanged") {
    const auto x = testing::random_points(60, 12);
    const auto f = testing::random_vectors(60, 13, 0.5);
    std::vector<Vec3> moved = x;
    for (auto& p : moved) p = p + Vec3{3.0, -2.0, 0.5};
    const LossWeights w;
    CHECK(smooth_loss(ParticleFrame(moved), FlowField(f), 8) ==
          doctest::Approx(smooth_loss(ParticleFrame(x), FlowField(f), 8)).epsilon(1e-12));
    CHECK(divergence_loss(ParticleFrame(moved), FlowField(f), w) ==
          doctest::Approx(divergence_loss(ParticleFrame(x), FlowField(f), w)).epsilon(1e-9));
}

TEST_CASE("train loss is the weighted sum of its terms") {
    const auto x = testing::random_points(64, 14);
    const auto y = testing::random_points(64, 15);
    const auto f = testing::random_vectors(64, 16, 0.1);
    std::vector<double> p(64);
    for (std::size_t i = 0; i < 64; ++i) p[i] = 0.5 + 0.5 * std::sin(double(i));
    const LossWeights w;
    std::vector<Vec3> warped(64);
    for (std::size_t i = 0; i < 64; ++i) warped[i] = x[i] + f[i];
    const auto b = train_loss(ParticleFrame(x), ParticleFrame(y), FlowField(f), p, w);
    const double recon = oracle_recon(warped, y, p, w.lambda_conf);
    const double smooth = oracle_smooth(x, f, w.smooth_k);
    const double div = oracle_div(x, f, w.grid_g, w.div_k, w.splat_eps);
    CHECK(b.recon == doctest::Approx(recon).epsilon(1e-12));
    CHECK(b.smooth == doctest::Approx(smooth).epsilon(1e-12));
    CHECK(b.div == doctest::Approx(div).epsilon(1e-12));
    CHECK(std::fabs(b.total - (recon + w.lambda_smooth * smooth + w.lambda_div * div)) < 1e-12);

    LossWeights r = w;
    r.lambda_smooth = r.lambda_div = 0;
    CHECK(train_loss(ParticleFrame(x), ParticleFrame(y), FlowField(f), p, r).total ==
          reconstruction_loss(ParticleFrame(warped), ParticleFrame(y), p, w.lambda_conf));

    const auto zero = train_loss(ParticleFrame(x), ParticleFrame(x), FlowField::zeros(64), std::vector<double>(64, 1.0), w);
    CHECK(zero.total == 0.0);

    // Tape and value versions agree.
    const LossContext ctx = LossContext::build(ParticleFrame(x), ParticleFrame(y), w);
    Tape t;
    Matrix pm(64, 1);
    for (std::size_t i = 0; i < 64; ++i) pm(i, 0) = p[i];
    const TrainLoss tl = train_loss(ctx, t.constant(as_matrix(f)), t.constant(pm), w);
    CHECK(tl.total.value()(0, 0) == doctest::Approx(b.total).epsilon(1e-13));
}

TEST_CASE("loss gradients pass the finite-difference check") {
    const LossWeights w;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const std::size_t n = 24 + 8 * seed;
        const auto x = testing::random_points(n, 100 + seed);
        const auto y = testing::random_points(n, 200 + seed);
        const LossContext ctx = LossContext::build(ParticleFrame(x), ParticleFrame(y), w);
        const Matrix f = as_matrix(testing::random_vectors(n, 300 + seed, 0.1));
        Matrix p(n, 1);
        for (std::size_t i = 0; i < n; ++i) p(i, 0) = 0.2 + 0.6 * double(i % 5) / 4.0;

        const auto check = [&](auto term) {
            const auto loss = [&](Tape& t, std::span<const Var> v) {
                return term(train_loss(ctx, v[0], v[1], w), t);
            };
            const auto r = ad::finite_diff_check(loss, {f, p});
            CHECK(r.checked > n);
            CHECK(r.max_relative_error < 1e-4);
        };
        check([](const TrainLoss& l, Tape&) { return l.recon; });
        check([](const TrainLoss& l, Tape&) { return l.smooth; });
        check([](const TrainLoss& l, Tape&) { return l.div; });
        check([](const TrainLoss& l, Tape&) { return l.total; });
    }
}

TEST_CASE("loss argument errors") {
    LossWeights w;
    w.div_k = 0;
    CHECK_THROWS_AS(w.validate(), Error);
    w = LossWeights{};
    w.splat_eps = 0;
    CHECK_THROWS_AS(w.validate(), Error);
    w = LossWeights{};
    w.lambda_div = -1;
    CHECK_THROWS_AS(w.validate(), Error);
    const auto x = testing::random_points(5, 1);
    CHECK_THROWS_AS(smooth_loss(ParticleFrame(x), FlowField::zeros(4), 2), Error);
    CHECK_THROWS_AS(divergence_loss(ParticleFrame(x), FlowField::zeros(4), LossWeights{}), Error);
}
