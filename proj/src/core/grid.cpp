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

#include "ffe/core/grid.hpp"

#include "ffe/error.hpp"

#include <algorithm>

namespace ffe {

namespace {

struct Box {
    Vec3 lo, hi;
};

Box bounds(const ParticleFrame& frame) {
    require(!frame.empty(), "grid: empty frame");
    Box b{frame[0], frame[0]};
    for (const auto& p : frame.positions()) {
        for (int a = 0; a < 3; ++a) {
            b.lo[a] = std::min(b.lo[a], p[a]);
            b.hi[a] = std::max(b.hi[a], p[a]);
        }
    }
    return b;
}

Grid centred(const Box& box, std::size_t g, double spacing) {
    Grid grid;
    grid.spacing = spacing;
    grid.nx = grid.ny = grid.nz = g;
    const double half_span = 0.5 * spacing * double(g - 1);
    for (int a = 0; a < 3; ++a) grid.origin[a] = 0.5 * (box.lo[a] + box.hi[a]) - half_span;
    return grid;
}

double max_extent(const Box& b) {
    return std::max({b.hi[0] - b.lo[0], b.hi[1] - b.lo[1], b.hi[2] - b.lo[2]});
}

}  // namespace

Grid bounding_grid(const ParticleFrame& frame, std::size_t points_per_axis, double margin_fraction,
                   double min_spacing) {
    require(points_per_axis >= 2, "bounding_grid: need at least 2 points per axis");
    require(margin_fraction >= 0.0, "bounding_grid: margin fraction must be non-negative");
    require(min_spacing > 0.0, "bounding_grid: minimum spacing must be positive");
    Box box = bounds(frame);
    for (int a = 0; a < 3; ++a) {
        const double grow = margin_fraction * (box.hi[a] - box.lo[a]);
        box.lo[a] -= grow;
        box.hi[a] += grow;
    }
    const double extent = max_extent(box);
    const double spacing = extent > 0.0 ? extent / double(points_per_axis - 1) : min_spacing;
    return centred(box, points_per_axis, std::max(spacing, min_spacing));
}

Grid interior_grid(const ParticleFrame& frame, std::size_t points_per_axis, double min_spacing) {
    require(points_per_axis >= 1, "interior_grid: need at least 1 point per axis");
    require(min_spacing > 0.0, "interior_grid: minimum spacing must be positive");
    const Box box = bounds(frame);
    const double extent = max_extent(box);
    const double spacing = extent > 0.0 ? extent / double(points_per_axis + 1) : min_spacing;
    return centred(box, points_per_axis, std::max(spacing, min_spacing));
}

}  // namespace ffe
