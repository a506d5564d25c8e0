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
#include "ffe/dve/dve.hpp"
#include "ffe/error.hpp"
#include "ffe/metrics/metrics.hpp"
#include "support/oracles.hpp"

#include <cmath>
#include <cstring>

using namespace ffe;
using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

double mean_norm(const FlowField& f) {
    double s = 0;
    for (const auto& v : f.vectors()) s += norm(v);
    return s / double(f.size());
}

}  // namespace

TEST_CASE("exact initial flow stays put") {
    const auto xs = testing::random_points(100, 1);
    const auto fs = testing::random_vectors(100, 2, 0.05);
    std::vector<Vec3> ys(100);
    for (std::size_t i = 0; i < 100; ++i) ys[i] = xs[i] + fs[i];
    const RefinementTrace t = refine(ParticleFrame(xs), FlowField(fs), std::vector<double>(100, 1.0), ParticleFrame(ys));
    CHECK(t.objective.size() == 151);
    CHECK(t.objective[0] < 1e-28);
    CHECK(t.best_step == 0);
    CHECK(mean_norm(t.residual) == 0.0);
    CHECK(evaluate(t.flow, FlowField(fs)).epe < 1e-15);
}

TEST_CASE("identical frames with noisy initial flow converge") {
    const auto xs = testing::random_points(500, 3);
    const FlowField noise(testing::random_vectors(500, 4, 0.01));
    const ParticleFrame x(xs);
    const FlowField before = noise;
    const RefinementTrace t = refine(x, noise, std::vector<double>(500, 1.0), x);
    CHECK(evaluate(t.flow, FlowField::zeros(500)).epe < 1e-3);
    CHECK(t.objective.back() <= t.objective.front());
    // The input is left untouched.
    CHECK(std::memcmp(noise.vectors().data(), before.vectors().data(), 500 * sizeof(Vec3)) == 0);
}

TEST_CASE("zero confidence gives a flat objective") {
    const ParticleFrame x(testing::random_points(50, 5)), y(testing::random_points(50, 6));
    const FlowField f(testing::random_vectors(50, 7, 0.1));
    const RefinementTrace t = refine(x, f, std::vector<double>(50, 0.0), y);
    for (double v : t.objective) CHECK(v == 0.0);
    CHECK(mean_norm(t.residual) == 0.0);
}

TEST_CASE("returned iterate is the best one seen") {
    const ParticleFrame x(testing::random_points(200, 8)), y(testing::random_points(200, 9));
    std::vector<double> p(200);
    for (std::size_t i = 0; i < 200; ++i) p[i] = double(i % 10) / 9.0;
    DveConfig cfg;
    cfg.steps = 60;
    cfg.learning_rate = 0.05;
    const FlowField init(testing::random_vectors(200, 10, 0.1));
    const RefinementTrace t = refine(x, init, p, y, cfg);
    REQUIRE(t.objective.size() == 61);
    double best = t.objective[0];
    for (double v : t.objective) best = std::min(best, v);
    CHECK(t.objective[t.best_step] == best);
    CHECK(t.objective[t.best_step] <= t.objective[0]);

    // Objective of the returned flow, recomputed independently.
    double obj = 0;
    for (std::size_t i = 0; i < 200; ++i) {
        const Vec3 q = x[i] + t.flow[i];
        double d = INFINITY;
        for (std::size_t j = 0; j < 200; ++j) d = std::min(d, squared_distance(q, y[j]));
        obj += p[i] * d;
    }
    CHECK(obj / 200.0 == doctest::Approx(best).epsilon(1e-12));
    for (std::size_t i = 0; i < 200; ++i)
        for (int a = 0; a < 3; ++a) CHECK(t.flow[i][a] == doctest::Approx(init[i][a] + t.residual[i][a]).epsilon(1e-15));
}

TEST_CASE("objective gradient") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const std::size_t n = 32;
        const auto ys = testing::random_points(n, 20 + seed);
        const SpatialIndex index{ParticleFrame(ys)};
        const ParticleFrame y(ys);
        Matrix warped(n, 3, ParticleFrame(testing::random_points(n, 30 + seed)).flat()), p(n, 1);
        for (std::size_t i = 0; i < n; ++i) p(i, 0) = 0.1 + 0.9 * double(i) / double(n);
        Matrix r(n, 3);
        for (std::size_t i = 0; i < r.size(); ++i) r.data[i] = 0.01 * std::sin(double(i + seed));
        const auto loss = [&](Tape&, std::span<const Var> v) { return dve_objective(v[0], warped, p, index, y); };
        const auto rep = ad::finite_diff_check(loss, {r});
        CHECK(rep.checked > 60);
        CHECK(rep.max_relative_error < 1e-4);
    }
}

TEST_CASE("dve config and size errors") {
    DveConfig c;
    c.steps = 0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = DveConfig{};
    c.learning_rate = 0;
    CHECK_THROWS_AS(c.validate(), Error);
    const ParticleFrame x(testing::random_points(5, 1));
    CHECK_THROWS_AS(refine(x, FlowField::zeros(4), std::vector<double>(5, 1.0), x), Error);
    CHECK_THROWS_AS(refine(x, FlowField::zeros(5), std::vector<double>(4, 1.0), x), Error);
}
