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

#include "ffe/autodiff/gradcheck.hpp"

#include "ffe/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

namespace ffe::ad {

namespace {

struct Eval {
    double value;
    std::uint64_t signature;
};

Eval evaluate(const LossBuilder& loss, const std::vector<Matrix>& params, bool track) {
    Tape tape;
    tape.set_track_branches(track);
    std::vector<Var> leaves;
    leaves.reserve(params.size());
    for (const auto& p : params) leaves.push_back(tape.leaf(p, false));
    const Var out = loss(tape, leaves);
    return {out.item(), tape.branch_signature()};
}

}  // namespace

GradCheckReport finite_diff_check(const LossBuilder& loss, const std::vector<Matrix>& params,
                                  const GradCheckOptions& options) {
    require(options.step > 0.0, "finite_diff_check: step must be positive");

    // Analytic pass.
    std::vector<Matrix> analytic;
    std::uint64_t base_signature = 0;
    double base_value = 0.0;
    {
        Tape tape;
        tape.set_track_branches(true);
        std::vector<Var> leaves;
        for (const auto& p : params) leaves.push_back(tape.leaf(p, true));
        const Var out = loss(tape, leaves);
        if (!std::isfinite(out.item())) fail(ErrorKind::NonFinite, "finite_diff_check: loss is not finite at the base point");
        base_signature = tape.branch_signature();
        base_value = out.item();
        tape.backward(out);
        for (const Var& l : leaves) analytic.push_back(l.grad());
    }

    // (tensor, entry) pairs to visit.
    std::vector<std::pair<std::size_t, std::size_t>> entries;
    for (std::size_t t = 0; t < params.size(); ++t)
        for (std::size_t e = 0; e < params[t].size(); ++e) entries.emplace_back(t, e);
    if (options.max_entries > 0 && options.max_entries < entries.size()) {
        std::mt19937_64 rng(options.seed);
        std::shuffle(entries.begin(), entries.end(), rng);
        entries.resize(options.max_entries);
        std::sort(entries.begin(), entries.end());
    }

    // Central differences cannot resolve gradient errors below the
    // cancellation noise, of order eps_mach * |loss| / h.
    const double noise = 1e2 * std::numeric_limits<double>::epsilon() * std::max(std::fabs(base_value), 1.0) / options.step;

    GradCheckReport report;
    std::vector<Matrix> work = params;
    const double h = options.step;
    for (const auto& [t, e] : entries) {
        double& x = work[t].data[e];
        const double x0 = x;

        if (options.kink_radius > 0.0) {
            const double r = options.kink_radius * h;
            x = x0 + r;
            const auto hi = evaluate(loss, work, true).signature;
            x = x0 - r;
            const auto lo = evaluate(loss, work, true).signature;
            x = x0;
            if (hi != base_signature || lo != base_signature) {
                ++report.excluded;
                continue;
            }
        }

        x = x0 + h;
        const double fp = evaluate(loss, work, false).value;
        x = x0 - h;
        const double fm = evaluate(loss, work, false).value;
        x = x0;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            fail(ErrorKind::NonFinite, "finite_diff_check: loss not finite when perturbing tensor " + std::to_string(t) +
                                           " entry " + std::to_string(e));

        const double numeric = (fp - fm) / (2.0 * h);
        const double a = analytic[t].data[e];
        const double diff = std::fabs(a - numeric);
        const double rel = diff <= noise ? 0.0 : diff / (std::fabs(a) + std::fabs(numeric));
        report.max_relative_error = std::max(report.max_relative_error, rel);
        report.max_abs_error = std::max(report.max_abs_error, diff);
        report.max_abs_gradient = std::max(report.max_abs_gradient, std::fabs(a));
        ++report.checked;
    }
    return report;
}

}  // namespace ffe::ad
