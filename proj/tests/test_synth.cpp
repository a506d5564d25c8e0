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

#include "ffe/core/spatial_index.hpp"
#include "ffe/error.hpp"
#include "ffe/metrics/metrics.hpp"
#include "ffe/synth/synth.hpp"
#include "support/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

using namespace ffe;

namespace {

// Sum of the analytic diagonal partials of the closed form.
double analytic_divergence(const Vec3& p, const BeltramiParams& b) {
    const double a = b.a, d = b.d, x = p[0], y = p[1], z = p[2];
    const double ux = -a * (a * std::exp(a * x) * std::sin(a * y + d * z) - a * std::exp(a * z) * std::sin(a * x + d * y));
    const double vy = -a * (a * std::exp(a * y) * std::sin(a * z + d * x) - a * std::exp(a * x) * std::sin(a * y + d * z));
    const double wz = -a * (a * std::exp(a * z) * std::sin(a * x + d * y) - a * std::exp(a * y) * std::sin(a * z + d * x));
    return ux + vy + wz;
}

std::vector<Vec3> sorted(std::span<const Vec3> v) {
    std::vector<Vec3> s(v.begin(), v.end());
    std::sort(s.begin(), s.end());
    return s;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

}  // namespace

TEST_CASE("uniform case") {
    FlowCase c;
    c.velocity = {0.2, -0.1, 0.05};
    c.dt = 0.5;
    c.n = 77;
    const SyntheticPair p = generate_pair(c);
    for (const auto& f : p.flow.vectors()) {
        CHECK(f[0] == 0.1);
        CHECK(f[1] == -0.05);
        CHECK(f[2] == 0.025);
    }
    CHECK(evaluate(p.flow, p.flow).epe == 0.0);
}

TEST_CASE("quarter turn about z") {
    FlowCase c;
    c.kind = FlowKind::RigidRotation;
    c.omega = 2.0;
    c.dt = std::numbers::pi / 4.0;
    const SyntheticPair p = generate_pair(c, ParticleFrame(std::vector<Vec3>{{1, 0, 0}, {0, 0, 3}}));
    CHECK(p.flow[0][0] == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(p.flow[0][1] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::fabs(p.flow[0][2]) < 1e-15);
    // On the axis nothing moves.
    CHECK(norm(p.flow[1]) < 1e-15);

    // An arbitrary axis and centre preserve the distance to the axis.
    c.axis = {1, 2, -1};
    c.center = {0.3, 0.1, 0.2};
    c.dt = 0.4;
    c.n = 50;
    const SyntheticPair q = generate_pair(c);
    const Vec3 k = (1.0 / norm(c.axis)) * c.axis;
    for (std::size_t i = 0; i < 50; ++i) {
        const Vec3 v = q.source[i] - c.center, w = q.source[i] + q.flow[i] - c.center;
        CHECK(dot(w, k) == doctest::Approx(dot(v, k)).epsilon(1e-13));
        CHECK(norm(w) == doctest::Approx(norm(v)).epsilon(1e-13));
    }
}

TEST_CASE("Beltrami velocity") {
    // At the origin, t = 0: every component is -a (sin 0 + cos 0) = -a.
    const Vec3 u0 = beltrami_velocity({0, 0, 0}, 0.0);
    for (int a = 0; a < 3; ++a) CHECK(u0[a] == doctest::Approx(-std::numbers::pi / 4).epsilon(1e-15));
    // Off-axis point, evaluated separately in double precision.
    const Vec3 u1 = beltrami_velocity({0.3, -0.2, 0.5}, 0.0);
    CHECK(u1[0] == doctest::Approx(-1.743868822394398).epsilon(1e-14));
    CHECK(u1[1] == doctest::Approx(-1.3146285851234762).epsilon(1e-14));
    CHECK(u1[2] == doctest::Approx(-0.34466876792597184).epsilon(1e-14));

    const BeltramiParams b;
    for (const auto& x : testing::random_points(20, 1, -1.0, 1.0)) {
        const double t = 0.7;
        CHECK(norm(beltrami_velocity(x, t)) ==
              doctest::Approx(norm(beltrami_velocity(x, 0.0)) * std::exp(-b.nu * b.d * b.d * t)).epsilon(1e-14));
    }

    const double h = 1e-5;
    for (const auto& x : testing::random_points(100, 2, -1.0, 1.0)) {
        CHECK(std::fabs(analytic_divergence(x, b)) < 1e-12);
        double div = 0;
        for (int a = 0; a < 3; ++a) {
            Vec3 up = x, dn = x;
            up[a] += h;
            dn[a] -= h;
            div += (beltrami_velocity(up, 0.0)[a] - beltrami_velocity(dn, 0.0)[a]) / (2 * h);
        }
        CHECK(std::fabs(div) < 1e-6);
    }
}

TEST_CASE("Beltrami displacement converges under step halving") {
    FlowCase c;
    c.kind = FlowKind::Beltrami;
    c.n = 200;
    const SyntheticPair p = generate_pair(c);
    for (std::size_t i = 0; i < 200; ++i) {
        const Vec3 fine = displacement(c, p.source[i], p.dt, 32);
        CHECK(norm(fine - p.flow[i]) < 1e-9);
    }
}

TEST_CASE("automatic dt hits twice the median spacing") {
    for (FlowKind kind : {FlowKind::Uniform, FlowKind::RigidRotation, FlowKind::Beltrami}) {
        FlowCase c;
        c.kind = kind;
        c.n = 512;
        c.seed = 3;
        const SyntheticPair p = generate_pair(c);
        const SpatialIndex index(p.source);
        std::vector<double> spacing, speed;
        for (std::size_t i = 0; i < 512; ++i) {
            spacing.push_back(index.knn(p.source[i], 2)[1].distance);
            speed.push_back(p.dt * norm(case_velocity(c, p.source[i], 0.0)));
        }
        CHECK(median(speed) == doctest::Approx(2.0 * median(spacing)).epsilon(1e-12));
    }
}

TEST_CASE("target is a seeded permutation of the advected source") {
    FlowCase c;
    c.kind = FlowKind::Beltrami;
    c.n = 300;
    c.seed = 11;
    const SyntheticPair p = generate_pair(c);
    std::vector<Vec3> moved(300);
    for (std::size_t i = 0; i < 300; ++i) moved[i] = p.source[i] + p.flow[i];
    CHECK(sorted(moved) == sorted(p.target.positions()));
    std::size_t same = 0;
    for (std::size_t i = 0; i < 300; ++i) same += moved[i] == p.target[i];
    CHECK(same < 10);
    for (const auto& q : p.source.positions())
        for (int a = 0; a < 3; ++a) {
            CHECK(q[a] >= 0.0);
            CHECK(q[a] < 1.0);
        }
}

TEST_CASE("generation is deterministic in the seed") {
    for (FlowKind kind : {FlowKind::Uniform, FlowKind::RigidRotation, FlowKind::Beltrami}) {
        FlowCase c;
        c.kind = kind;
        c.n = 128;
        c.seed = 5;
        const SyntheticPair a = generate_pair(c), b = generate_pair(c);
        CHECK(std::memcmp(a.source.positions().data(), b.source.positions().data(), 128 * sizeof(Vec3)) == 0);
        CHECK(std::memcmp(a.target.positions().data(), b.target.positions().data(), 128 * sizeof(Vec3)) == 0);
        CHECK(std::memcmp(a.flow.vectors().data(), b.flow.vectors().data(), 128 * sizeof(Vec3)) == 0);
        CHECK(a.dt == b.dt);
        c.seed = 6;
        const SyntheticPair d = generate_pair(c);
        CHECK(std::memcmp(a.source.positions().data(), d.source.positions().data(), 128 * sizeof(Vec3)) != 0);
    }
    // Frozen first particle: the sampler does not depend on the standard library.
    FlowCase c;
    c.seed = 0;
    c.n = 1;
    const Vec3 q = generate_pair(c).source[0];
    CHECK(q[0] == 0.15979336337046079);
    CHECK(q[1] == 0.99214520962982877);
    CHECK(q[2] == 0.039569025844865657);
}

TEST_CASE("case validation and names") {
    FlowCase c;
    c.n = 0;
    CHECK_THROWS_AS(generate_pair(c), Error);
    c = FlowCase{};
    c.box_hi = {1, 0, 1};
    CHECK_THROWS_AS(generate_pair(c), Error);
    c = FlowCase{};
    c.kind = FlowKind::RigidRotation;
    c.axis = {0, 0, 0};
    CHECK_THROWS_AS(generate_pair(c), Error);
    c = FlowCase{};
    c.kind = FlowKind::Beltrami;
    c.beltrami.a = 0;
    CHECK_THROWS_AS(generate_pair(c), Error);
    for (FlowKind k : {FlowKind::Uniform, FlowKind::RigidRotation, FlowKind::Beltrami})
        CHECK(parse_flow_kind(to_string(k)) == k);
    CHECK_THROWS_AS(parse_flow_kind("vortex"), Error);
}
