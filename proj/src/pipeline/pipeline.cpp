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

#include "ffe/pipeline/pipeline.hpp"

namespace ffe {

using ad::Matrix;
using ad::Tape;
using ad::Var;

PairInputs PairInputs::build(const ParticleFrame& x, const ParticleFrame& y, const ModelConfig& model) {
    PairInputs p;
    p.source = prepare_frame(x, model);
    p.target = prepare_frame(y, model);
    p.target_positions = std::make_shared<const Matrix>(p.target.positions);
    return p;
}

ForwardResult forward_pair(Tape& tape, const PairInputs& inputs, const ModelConfig& model,
                           std::span<const Var> params, const OTConfig& ot, std::size_t iterations,
                           const ForwardOptions& options) {
    const Var fx = extract_features(tape, inputs.source, model, params, options);
    const Var fy = extract_features(tape, inputs.target, model, params, options);
    ForwardResult r;
    r.similarity = cosine_similarity(fx, fy);
    r.plan = solve_transport(transport_cost(r.similarity), ot, iterations);
    r.correspondence = soft_correspondence(r.plan, r.similarity, inputs.source.positions, inputs.target_positions,
                                           ot.top_l, ot.weight_mode);
    return r;
}

Estimate estimate_flow(const ParticleFrame& x, const ParticleFrame& y, const ModelParams& params, const OTConfig& ot,
                       const std::optional<DveConfig>& dve) {
    ot.validate();
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(params.tensors.size());
    for (const auto& t : params.tensors) vars.push_back(tape.constant(t));
    const PairInputs in = PairInputs::build(x, y, params.config);
    const ForwardResult fwd = forward_pair(tape, in, params.config, vars, ot, ot.inference_iterations);

    Estimate e;
    e.initial = FlowField::from_flat(fwd.correspondence.flow.value().data);
    e.confidence = fwd.correspondence.confidence.value().data;
    if (dve) {
        e.trace = refine(x, e.initial, e.confidence, y, *dve);
        e.flow = e.trace->flow;
    } else {
        e.flow = e.initial;
    }
    return e;
}

}  // namespace ffe
