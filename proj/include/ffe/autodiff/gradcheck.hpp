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

#include "ffe/autodiff/tape.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace ffe::ad {

/// Builds a scalar loss on `tape` from leaf nodes holding the parameters.
using LossBuilder = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradCheckOptions {
    double step = 1e-5;
    /// Entries whose +-(kink_radius * step) perturbation changes any branch
    /// decision on the tape (abs sign, max-pool winner, selected index...)
    /// are skipped. Set to 0 to check everything.
    double kink_radius = 10.0;
    /// 0 checks every entry; otherwise a seeded sample of this many entries.
    std::size_t max_entries = 0;
    std::uint64_t seed = 0;
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    /// max |analytic - numeric| and max |analytic| over checked entries.
    double max_abs_error = 0.0;
    double max_abs_gradient = 0.0;
    std::size_t checked = 0;
    std::size_t excluded = 0;
};

/// Compares reverse-mode gradients against central differences:
/// max over entries of |analytic - numeric| / (|analytic| + |numeric|). Entries
/// whose difference is below the central-difference noise,
/// 100 * eps_mach * max(|loss|, 1) / step, count as exact.
/// Throws Error(NonFinite) if the loss is not finite at a perturbed point.
GradCheckReport finite_diff_check(const LossBuilder& loss, const std::vector<Matrix>& params,
                                  const GradCheckOptions& options = {});

}  // namespace ffe::ad
