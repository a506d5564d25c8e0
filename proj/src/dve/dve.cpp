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

#include "ffe/dve/dve.hpp"

#include "ffe/autodiff/adam.hpp"
#include "ffe/autodiff/ops.hpp"
#include "ffe/error.hpp"
#include "ffe/losses/losses.hpp"

#include <cmath>
#include <string>

namespace ffe {

using ad::Matrix;
using ad::Tape;
using ad::Var;

void DveConfig::validate() const {
    require(steps >= 1, "dve: steps must be >= 1");
    require(learning_rate > 0.0, "dve: learning_rate must be > 0");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "dve: betas must be in [0, 1)");
    require(epsilon > 0.0, "dve: epsilon must be > 0");
}

Var dve_objective(const Var& residual, const Matrix& warped, const Matrix& confidence, const SpatialIndex& target_index,
                  const ParticleFrame& target) {
    Tape& tape = *residual.tape();
    const Var moved = ad::add(tape.constant(warped), residual);
    return reconstruction_loss(moved, tape.constant(confidence), target_index, target, 0.0);
}

namespace {

FlowField to_flow(const Matrix& m) { return FlowField::from_flat(m.data); }

}  // namespace

RefinementTrace refine(const ParticleFrame& x, const FlowField& initial, std::span<const double> confidence,
                       const ParticleFrame& y, const DveConfig& cfg) {
    cfg.validate();
    const std::size_t n = x.size();
    require(initial.size() == n && confidence.size() == n, "refine: flow/confidence sizes differ from the source frame");

    const SpatialIndex index(y);
    Matrix warped(n, 3);
    for (std::size_t i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a) warped(i, a) = x[i][a] + initial[i][a];
    const Matrix p(n, 1, std::vector<double>(confidence.begin(), confidence.end()));

    std::vector<Matrix> r{Matrix(n, 3, 0.0)};
    ad::Adam opt({cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon}, r);

    RefinementTrace trace;
    trace.objective.reserve(cfg.steps + 1);
    Matrix best = r[0];
    double best_obj = 0.0;

    for (std::size_t step = 0; step <= cfg.steps; ++step) {
        Tape tape;
        const Var rv = tape.leaf(r[0]);
        const Var obj = dve_objective(rv, warped, p, index, y);
        const double value = obj.item();
        if (!std::isfinite(value)) fail(ErrorKind::NonFinite, "refine: objective is not finite at step " + std::to_string(step));
        trace.objective.push_back(value);
        if (step == 0 || value < best_obj) {
            best_obj = value;
            best = r[0];
            trace.best_step = step;
        }
        if (step == cfg.steps) break;
        tape.backward(obj);
        opt.step(r, {rv.grad()});
    }

    trace.residual = to_flow(best);
    Matrix total = best;
    for (std::size_t i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a) total(i, a) += initial[i][a];
    trace.flow = to_flow(total);
    return trace;
}

}  // namespace ffe
