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

// features -> cosine cost -> unbalanced OT -> soft correspondence, and the
// inference entry point that adds test-time refinement.

#include "ffe/dve/dve.hpp"
#include "ffe/features/model.hpp"
#include "ffe/transport/transport.hpp"

#include <memory>
#include <optional>
#include <span>

namespace ffe {

/// Parameter-independent inputs of one frame pair.
struct PairInputs {
    FrameInputs source;
    FrameInputs target;
    std::shared_ptr<const ad::Matrix> target_positions;

    static PairInputs build(const ParticleFrame& x, const ParticleFrame& y, const ModelConfig& model);
};

struct ForwardResult {
    ad::Var similarity;
    ad::Var plan;
    Correspondence correspondence;
};

ForwardResult forward_pair(ad::Tape& tape, const PairInputs& inputs, const ModelConfig& model,
                           std::span<const ad::Var> params, const OTConfig& ot, std::size_t iterations,
                           const ForwardOptions& options = {});

struct Estimate {
    FlowField initial;
    std::vector<double> confidence;
    FlowField flow;  // refined when DVE ran, otherwise == initial
    std::optional<RefinementTrace> trace;
};

/// Inference: inference_iterations of OT, then DVE unless `dve` is empty.
Estimate estimate_flow(const ParticleFrame& x, const ParticleFrame& y, const ModelParams& params, const OTConfig& ot,
                       const std::optional<DveConfig>& dve);

}  // namespace ffe
