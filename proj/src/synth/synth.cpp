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

#include "ffe/synth/synth.hpp"

#include "ffe/core/random.hpp"
#include "ffe/core/spatial_index.hpp"
#include "ffe/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace ffe {

std::string to_string(FlowKind kind) {
    switch (kind) {
        case FlowKind::Uniform: return "uniform";
        case FlowKind::RigidRotation: return "rotation";
        case FlowKind::Beltrami: return "beltrami";
    }
    return "unknown";
}

FlowKind parse_flow_kind(const std::string& name) {
    if (name == "uniform") return FlowKind::Uniform;
    if (name == "rotation" || name == "rigid_rotation") return FlowKind::RigidRotation;
    if (name == "beltrami") return FlowKind::Beltrami;
    fail(ErrorKind::InvalidArgument, "unknown flow case '" + name + "' (expected uniform, rotation or beltrami)");
}

Vec3 beltrami_velocity(const Vec3& p, double t, const BeltramiParams& b) {
    const double a = b.a, d = b.d;
    const double x = p[0], y = p[1], z = p[2];
    const double decay = std::exp(-b.nu * d * d * t);
    const double ex = std::exp(a * x), ey = std::exp(a * y), ez = std::exp(a * z);
    return {-a * (ex * std::sin(a * y + d * z) + ez * std::cos(a * x + d * y)) * decay,
            -a * (ey * std::sin(a * z + d * x) + ex * std::cos(a * y + d * z)) * decay,
            -a * (ez * std::sin(a * x + d * y) + ey * std::cos(a * z + d * x)) * decay};
}

void FlowCase::validate() const {
    require(n >= 1, "synth: n must be >= 1");
    for (int i = 0; i < 3; ++i) require(box_hi[i] > box_lo[i], "synth: box must have positive extent");
    if (kind == FlowKind::RigidRotation) require(norm(axis) > 0.0, "synth: rotation axis must be nonzero");
    if (kind == FlowKind::Beltrami) require(beltrami.a > 0.0 && beltrami.d > 0.0, "synth: Beltrami a and d must be > 0");
    require(std::isfinite(dt), "synth: dt must be finite");
}

namespace {

Vec3 unit(const Vec3& v) { return (1.0 / norm(v)) * v; }

Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double median(std::vector<double> v) {
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2) return *mid;
    const double hi = *mid;
    const double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

double auto_dt(const FlowCase& c, const ParticleFrame& x) {
    if (x.size() < 2) return 1.0;
    const SpatialIndex index(x);
    std::vector<double> spacing(x.size()), speed(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        spacing[i] = index.knn(x[i], 2)[1].distance;
        speed[i] = norm(case_velocity(c, x[i], c.t0));
    }
    const double s = median(spacing), v = median(speed);
    return v > 0.0 && s > 0.0 ? 2.0 * s / v : 1.0;
}

}  // namespace

Vec3 case_velocity(const FlowCase& c, const Vec3& x, double t) {
    switch (c.kind) {
        case FlowKind::Uniform: return c.velocity;
        case FlowKind::RigidRotation: {
            const Vec3 k = unit(c.axis);
            return c.omega * cross(k, x - c.center);
        }
        case FlowKind::Beltrami: return beltrami_velocity(x, t, c.beltrami);
    }
    return {0, 0, 0};
}

Vec3 displacement(const FlowCase& c, const Vec3& x, double dt, std::size_t substeps) {
    switch (c.kind) {
        case FlowKind::Uniform: return dt * c.velocity;
        case FlowKind::RigidRotation: {
            // Rodrigues rotation of the offset from the centre.
            const Vec3 k = unit(c.axis);
            const Vec3 o = c.center;
            const Vec3 v = x - o;
            const double th = c.omega * dt, ct = std::cos(th), st = std::sin(th);
            const Vec3 r = ct * v + st * cross(k, v) + ((1.0 - ct) * dot(k, v)) * k;
            return r - v;
        }
        case FlowKind::Beltrami: {
            require(substeps >= 1, "displacement: substeps must be >= 1");
            const double h = dt / double(substeps);
            Vec3 p = x;
            double t = c.t0;
            for (std::size_t s = 0; s < substeps; ++s) {
                const Vec3 k1 = beltrami_velocity(p, t, c.beltrami);
                const Vec3 k2 = beltrami_velocity(p + (0.5 * h) * k1, t + 0.5 * h, c.beltrami);
                const Vec3 k3 = beltrami_velocity(p + (0.5 * h) * k2, t + 0.5 * h, c.beltrami);
                const Vec3 k4 = beltrami_velocity(p + h * k3, t + h, c.beltrami);
                p = p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                t += h;
            }
            return p - x;
        }
    }
    return {0, 0, 0};
}

SyntheticPair generate_pair(const FlowCase& c) {
    c.validate();
    std::mt19937_64 rng(c.seed);
    std::vector<Vec3> pts(c.n);
    for (auto& p : pts)
        for (int a = 0; a < 3; ++a) p[a] = c.box_lo[a] + (c.box_hi[a] - c.box_lo[a]) * unit_uniform(rng);
    return generate_pair(c, ParticleFrame(std::move(pts)));
}

SyntheticPair generate_pair(const FlowCase& c, const ParticleFrame& source) {
    c.validate();
    SyntheticPair out;
    out.source = source;
    out.dt = c.dt > 0.0 ? c.dt : auto_dt(c, source);
    std::vector<Vec3> flow(source.size());
    for (std::size_t i = 0; i < source.size(); ++i) flow[i] = displacement(c, source[i], out.dt);

    std::vector<std::size_t> perm(source.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    // Separate stream from the position sampler so permutation and positions
    // stay independent when a source frame is supplied.
    std::mt19937_64 rng(c.seed ^ 0x9e3779b97f4a7c15ull);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng() % i]);
    std::vector<Vec3> target(source.size());
    for (std::size_t i = 0; i < source.size(); ++i) target[i] = source[perm[i]] + flow[perm[i]];

    out.flow = FlowField(std::move(flow));
    out.target = ParticleFrame(std::move(target));
    return out;
}

}  // namespace ffe
