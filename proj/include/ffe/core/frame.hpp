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

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace ffe {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double squared_norm(const Vec3& a) { return dot(a, a); }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline double squared_distance(const Vec3& a, const Vec3& b) { return squared_norm(a - b); }

/// An unordered set of particle positions observed at one time instant.
/// Non-empty and finite; the index order is whatever the producer chose and
/// never changes afterwards.
class ParticleFrame {
public:
    ParticleFrame() = default;
    explicit ParticleFrame(std::vector<Vec3> positions);

    std::size_t size() const noexcept { return positions_.size(); }
    bool empty() const noexcept { return positions_.empty(); }
    const Vec3& operator[](std::size_t i) const { return positions_[i]; }
    std::span<const Vec3> positions() const noexcept { return positions_; }

    /// Row-major n x 3 copy.
    std::vector<double> flat() const;

private:
    std::vector<Vec3> positions_;
};

/// Per-particle displacement, row-aligned with a source frame.
class FlowField {
public:
    FlowField() = default;
    explicit FlowField(std::vector<Vec3> vectors);
    static FlowField zeros(std::size_t n) { return FlowField(std::vector<Vec3>(n, Vec3{0, 0, 0})); }
    static FlowField from_flat(std::span<const double> rowmajor);

    std::size_t size() const noexcept { return vectors_.size(); }
    const Vec3& operator[](std::size_t i) const { return vectors_[i]; }
    Vec3& operator[](std::size_t i) { return vectors_[i]; }
    std::span<const Vec3> vectors() const noexcept { return vectors_; }
    std::vector<double> flat() const;

private:
    std::vector<Vec3> vectors_;
};

/// positions[i] + flow[i] for every particle.
ParticleFrame advect(const ParticleFrame& frame, const FlowField& flow);

}  // namespace ffe
