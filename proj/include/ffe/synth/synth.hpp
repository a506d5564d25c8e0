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

// Analytic flows for building labelled frame pairs.

#include "ffe/core/frame.hpp"

#include <cstdint>
#include <numbers>
#include <string>

namespace ffe {

enum class FlowKind { Uniform, RigidRotation, Beltrami };

std::string to_string(FlowKind kind);
FlowKind parse_flow_kind(const std::string& name);

/// Ethier-Steinman exact Navier-Stokes solution.
struct BeltramiParams {
    double a = std::numbers::pi / 4.0;
    double d = std::numbers::pi / 2.0;
    double nu = 0.1;
};

/// u(x, t); divergence-free for any a, d.
Vec3 beltrami_velocity(const Vec3& x, double t, const BeltramiParams& p = {});

struct FlowCase {
    FlowKind kind = FlowKind::Uniform;
    Vec3 velocity{1.0, 0.5, -0.25};  // uniform
    Vec3 axis{0.0, 0.0, 1.0};        // rotation axis direction
    Vec3 center{0.0, 0.0, 0.0};      // point on the rotation axis
    double omega = 1.0;              // rad per unit time
    BeltramiParams beltrami;
    double t0 = 0.0;
    /// <= 0 picks dt so the median displacement is about twice the median
    /// nearest-neighbour spacing of the source frame.
    double dt = 0.0;
    std::size_t n = 512;
    std::uint64_t seed = 0;
    Vec3 box_lo{0.0, 0.0, 0.0};
    Vec3 box_hi{1.0, 1.0, 1.0};

    void validate() const;
};

struct SyntheticPair {
    ParticleFrame source;
    ParticleFrame target;  // advected source, then shuffled
    FlowField flow;        // row-aligned with source
    double dt = 0.0;
};

/// Velocity of the case at a point.
Vec3 case_velocity(const FlowCase& c, const Vec3& x, double t);

/// Displacement of one particle over dt. Uniform and rotation are exact;
/// Beltrami uses RK4 with `substeps` steps.
Vec3 displacement(const FlowCase& c, const Vec3& x, double dt, std::size_t substeps = 16);

SyntheticPair generate_pair(const FlowCase& c);

/// Same source frame and dt, arbitrary externally provided source.
SyntheticPair generate_pair(const FlowCase& c, const ParticleFrame& source);

}  // namespace ffe
