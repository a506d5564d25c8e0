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
#include "ffe/transport/transport.hpp"
#include "support/oracles.hpp"

#include <cmath>
#include <limits>
#include <random>

using namespace ffe;
using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

Matrix random_cost(std::size_t r, std::size_t c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    Matrix m(r, c);
    for (auto& x : m.data) x = u(rng);
    return m;
}

Matrix randn(std::size_t r, std::size_t c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix m(r, c);
    for (auto& x : m.data) x = g(rng);
    return m;
}

double max_rel(const std::vector<double>& a, const std::vector<double>& ref) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - ref[i]) / std::fabs(ref[i]));
    return m;
}

}  // namespace

TEST_CASE("cosine similarity matches a direct computation") {
    const Matrix a = randn(5, 7, 1), b = randn(4, 7, 2);
    Tape t;
    const Matrix s = cosine_similarity(t.constant(a), t.constant(b)).value();
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            double d = 0, na = 0, nb = 0;
            for (std::size_t c = 0; c < 7; ++c) d += a(i, c) * b(j, c), na += a(i, c) * a(i, c), nb += b(j, c) * b(j, c);
            CHECK(s(i, j) == doctest::Approx(d / (std::sqrt(na) * std::sqrt(nb) + 1e-12)).epsilon(1e-14));
        }
    // A zero row gives zero similarity instead of NaN.
    Matrix z = a;
    for (std::size_t c = 0; c < 7; ++c) z(0, c) = 0.0;
    const Matrix sz = cosine_similarity(t.constant(z), t.constant(b)).value();
    for (std::size_t j = 0; j < 4; ++j) CHECK(sz(0, j) == 0.0);
    CHECK_THROWS_AS(cosine_similarity(t.constant(a), t.constant(randn(4, 6, 3))), Error);
}

TEST_CASE("plan agrees with an independent reference solver") {
    OTConfig cfg;
    for (std::size_t n : {2u, 8u}) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const Matrix c = random_cost(n, n, 100 * n + seed);
            const Matrix plan = solve_transport(c, cfg, 500);
            const auto ref = testing::reference_unbalanced_plan(c.data, n, n, cfg.epsilon, cfg.lambda);
            CHECK(max_rel(plan.data, ref) < 1e-6);
        }
    }
    // Rectangular and a different lambda: the marginals are both 1/n1.
    cfg.lambda = 1.0;
    const Matrix c = random_cost(3, 6, 7);
    const auto ref = testing::reference_unbalanced_plan(c.data, 3, 6, cfg.epsilon, cfg.lambda);
    CHECK(max_rel(solve_transport(c, cfg, 500).data, ref) < 1e-6);
}

TEST_CASE("translation step and relaxation keep the fixed point") {
    const Matrix c = random_cost(6, 6, 3);
    const Matrix base = solve_transport(c, OTConfig{}, 1000);
    for (bool ti : {false, true})
        for (double w : {1.0, 1.5}) {
            OTConfig cfg;
            cfg.translation_step = ti;
            cfg.relaxation = w;
            CHECK(max_rel(solve_transport(c, cfg, 20000).data, base.data) < 1e-8);
        }
}

TEST_CASE("dual never decreases and the residual converges") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        SinkhornStats stats;
        solve_transport(random_cost(32, 32, 11 + seed), OTConfig{}, 100, &stats);
        REQUIRE(stats.residuals.size() == 100);
        REQUIRE(stats.dual.size() == 100);
        for (std::size_t i = 1; i < 100; ++i) CHECK(stats.dual[i] >= stats.dual[i - 1] - 1e-12 * std::fabs(stats.dual[i]));
        CHECK(stats.residuals.back() < 1e-6);
    }
}

TEST_CASE("plain iteration has a monotone residual after burn-in") {
    OTConfig cfg;
    cfg.relaxation = 1.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        SinkhornStats stats;
        solve_transport(random_cost(32, 32, 50 + seed), cfg, 100, &stats);
        for (std::size_t i = 6; i < 100; ++i) CHECK(stats.residuals[i] <= stats.residuals[i - 1]);
    }
}

TEST_CASE("constant cost gives the uniform plan") {
    const Matrix p = solve_transport(Matrix(4, 4, 0.7), OTConfig{}, 3);
    for (double v : p.data) CHECK(v == doctest::Approx(p.data[0]).epsilon(1e-14));
}

TEST_CASE("solver errors") {
    OTConfig cfg;
    Matrix c = random_cost(3, 3, 1);
    CHECK_THROWS_AS(solve_transport(c, cfg, 0), Error);
    c(1, 2) = std::numeric_limits<double>::quiet_NaN();
    try {
        solve_transport(c, cfg, 10);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NonFinite);
        CHECK(std::string(e.what()).find("entry 5") != std::string::npos);
    }
    cfg.epsilon = 0.0;
    CHECK_THROWS_AS(solve_transport(random_cost(2, 2, 1), cfg, 10), Error);
    cfg = OTConfig{};
    cfg.relaxation = 2.0;
    CHECK_THROWS_AS(solve_transport(random_cost(2, 2, 1), cfg, 10), Error);
}

TEST_CASE("top-L support ordering and ties") {
    Matrix p(2, 5, {0.1, 0.5, 0.5, 0.2, 0.0, 3, 2, 1, 0, -1});
    CHECK(top_l_support(p, 3) == ad::IndexList{1, 2, 3, 0, 1, 2});
    CHECK(top_l_support(p, 9) == ad::IndexList{1, 2, 3, 0, 4, 0, 1, 2, 3, 4});
    CHECK_THROWS_AS(top_l_support(p, 0), Error);
}

TEST_CASE("weights are row-stochastic and confidence is the weighted similarity") {
    const std::size_t n = 20;
    const auto xs = testing::random_points(n, 1), ys = testing::random_points(n, 2);
    const ParticleFrame x(xs), y(ys);
    const Matrix s = randn(n, n, 3);
    Matrix cost = s;
    for (auto& v : cost.data) v = 1.0 - v;
    const Matrix plan = solve_transport(cost, OTConfig{}, 50);
    for (WeightMode mode : {WeightMode::AsWritten, WeightMode::Normalized}) {
        const TransportPlan tp = initial_flow(plan, s, x, y, 6, mode);
        REQUIRE(tp.top_l == 6);
        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0, conf = 0, psum = 0;
            Vec3 target{0, 0, 0};
            for (std::size_t l = 0; l < 6; ++l) psum += plan(i, tp.support[i * 6 + l]);
            for (std::size_t l = 0; l < 6; ++l) {
                const std::size_t j = tp.support[i * 6 + l];
                const double w = tp.weights(i, l);
                sum += w;
                conf += w * s(i, j);
                target = target + w * ys[j];
                // Oracle for each mode, from the selected plan entries.
                double expect = plan(i, j) / psum;
                if (mode == WeightMode::AsWritten) {
                    double z = 0;
                    for (std::size_t m = 0; m < 6; ++m) z += std::exp(plan(i, tp.support[i * 6 + m]));
                    expect = std::exp(plan(i, j)) / z;
                }
                CHECK(w == doctest::Approx(expect).epsilon(1e-12));
            }
            CHECK(std::fabs(sum - 1.0) < 1e-12);
            CHECK(tp.confidence[i] == doctest::Approx(std::max(conf, 0.0)).epsilon(1e-12));
            for (int a = 0; a < 3; ++a) {
                CHECK(tp.targets[i][a] == doctest::Approx(target[a]).epsilon(1e-12));
                CHECK(tp.flow[i][a] == doctest::Approx(target[a] - xs[i][a]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("gradient through the unrolled solver") {
    const Matrix fx = randn(5, 4, 1), fy = randn(6, 4, 2);
    const auto y = std::make_shared<const Matrix>(6, 3, ParticleFrame(testing::random_points(6, 3)).flat());
    const Matrix x(5, 3, ParticleFrame(testing::random_points(5, 4)).flat());
    for (WeightMode mode : {WeightMode::AsWritten, WeightMode::Normalized}) {
        const auto loss = [&](Tape& t, std::span<const Var> p) {
            const Var s = cosine_similarity(p[0], p[1]);
            OTConfig cfg;
            cfg.epsilon = 0.1;
            const Var plan = solve_transport(transport_cost(s), cfg, 10);
            const Correspondence c = soft_correspondence(plan, s, x, y, 3, mode);
            return ad::add(ad::sum(ad::mul(c.flow, c.flow)), ad::sum(c.confidence));
        };
        ad::GradCheckOptions o;
        o.kink_radius = 10.0;
        const auto r = ad::finite_diff_check(loss, {fx, fy}, o);
        CHECK(r.checked > 30);
        CHECK(r.max_relative_error < 1e-6);
    }
}

TEST_CASE("similarity of orthonormal and antiparallel rows") {
    Matrix e(4, 4, 0.0);
    for (std::size_t i = 0; i < 4; ++i) e(i, i) = 1.0;
    Tape t;
    const Matrix s = cosine_similarity(t.constant(e), t.constant(e)).value();
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) CHECK(s(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-11));
    Matrix b = randn(3, 5, 4);
    for (std::size_t c = 0; c < 5; ++c) b(2, c) = -b(0, c);
    CHECK(cosine_similarity(t.constant(b), t.constant(b)).value()(0, 2) == doctest::Approx(-1.0).epsilon(1e-11));
}

TEST_CASE("2x2 swap cost at the default 100 iterations") {
    const Matrix c(2, 2, {0, 1, 1, 0});
    const Matrix plan = solve_transport(c, OTConfig{}, 100);
    CHECK(plan(0, 0) > 1e3 * plan(0, 1));
    CHECK(max_rel(plan.data, testing::reference_unbalanced_plan(c.data, 2, 2, 0.03, 10.0)) < 1e-6);
}

TEST_CASE("large epsilon approaches the uniform plan") {
    OTConfig cfg;
    cfg.epsilon = 100.0;
    const Matrix plan = solve_transport(random_cost(8, 8, 21), cfg, 100);
    double total = 0;
    for (double v : plan.data) total += v;
    // The relaxed marginals let the mass grow; the pattern is what flattens.
    for (double v : plan.data) CHECK(std::fabs(v / total - 1.0 / 64.0) < 1e-3);
}

TEST_CASE("identical frames with a sharp plan give zero initial flow") {
    const std::size_t n = 16;
    const auto pts = testing::random_points(n, 5);
    const ParticleFrame x(pts);
    Tape t;
    const Matrix f = randn(n, 12, 6);
    const Matrix s = cosine_similarity(t.constant(f), t.constant(f)).value();
    Matrix cost = s;
    for (auto& v : cost.data) v = 1.0 - v;
    const TransportPlan tp = initial_flow(solve_transport(cost, OTConfig{}, 100), s, x, x, 1);
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(tp.support[i] == i);
        CHECK(tp.weights(i, 0) == 1.0);
        CHECK(norm(tp.flow[i]) < 1e-6);
        CHECK(tp.confidence[i] == doctest::Approx(1.0).epsilon(1e-11));
    }
}

TEST_CASE("uniform plan with full support targets the centroid") {
    const auto xs = testing::random_points(5, 7), ys = testing::random_points(7, 8);
    Vec3 c{0, 0, 0};
    for (const auto& y : ys) c = c + (1.0 / 7.0) * y;
    for (WeightMode mode : {WeightMode::AsWritten, WeightMode::Normalized}) {
        const TransportPlan tp = initial_flow(Matrix(5, 7, 0.02), Matrix(5, 7, 0.5), ParticleFrame(xs), ParticleFrame(ys), 7, mode);
        for (std::size_t i = 0; i < 5; ++i)
            for (int a = 0; a < 3; ++a) CHECK(tp.targets[i][a] == doctest::Approx(c[a]).epsilon(1e-13));
    }
}

TEST_CASE("negative weighted similarity clamps confidence to zero") {
    const ParticleFrame x(testing::random_points(2, 9)), y(testing::random_points(3, 10));
    const Matrix plan(2, 3, {0.5, 0.3, 0.2, 0.1, 0.2, 0.7});
    const Matrix s(2, 3, {-0.9, -0.5, 0.1, 0.4, 0.2, 0.3});
    const TransportPlan tp = initial_flow(plan, s, x, y, 2);
    CHECK(tp.confidence[0] == 0.0);
    CHECK(tp.confidence[1] > 0.0);
}

TEST_CASE("cost gradient through 10 unrolled iterations on 8x8") {
    const auto loss = [](Tape&, std::span<const Var> p) {
        const Var plan = solve_transport(p[0], OTConfig{}, 10);
        return ad::sum(ad::mul(plan, plan));
    };
    const auto r = ad::finite_diff_check(loss, {random_cost(8, 8, 31)});
    CHECK(r.checked == 64);
    CHECK(r.max_relative_error < 1e-4);
}
