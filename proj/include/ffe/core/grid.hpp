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

#include "ffe/core/frame.hpp"

#include <cstddef>

namespace ffe {

/// Cubic lattice: point (j,k,l) sits at origin + spacing * (j,k,l).
struct Grid {
    Vec3 origin{0, 0, 0};
    double spacing = 1.0;
    std::size_t nx = 1, ny = 1, nz = 1;

    std::size_t size() const noexcept { return nx * ny * nz; }
    Vec3 point(std::size_t j, std::size_t k, std::size_t l) const {
        return {origin[0] + spacing * double(j), origin[1] + spacing * double(k), origin[2] + spacing * double(l)};
    }
    /// Point by flat index, l fastest.
    Vec3 point(std::size_t flat) const { return point(flat / (ny * nz), (flat / nz) % ny, flat % nz); }
};

inline constexpr double kDefaultMinSpacing = 1e-6;

/// G^3 lattice enclosing the frame's bounding box grown by `margin_fraction`
/// of its extent on every side. Spacing is the largest grown extent over
/// (G - 1); the lattice is centred on the grown box. Coincident points fall
/// back to `min_spacing`.
Grid bounding_grid(const ParticleFrame& frame, std::size_t points_per_axis, double margin_fraction,
                   double min_spacing = kDefaultMinSpacing);

/// G^3 lattice whose +-spacing stencil stays inside the bounding box:
/// spacing = largest extent / (G + 1), centred on the box.
Grid interior_grid(const ParticleFrame& frame, std::size_t points_per_axis,
                   double min_spacing = kDefaultMinSpacing);

}  // namespace ffe
