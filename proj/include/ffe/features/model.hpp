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

// Graph feature extractor: a stack of static-graph set convolutions over the
// position k-NN graph, one dynamic edge convolution over a k-NN graph rebuilt
// in feature space, and a linear head over the concatenated hierarchy.

#include "ffe/autodiff/ops.hpp"
#include "ffe/autodiff/tape.hpp"
#include "ffe/core/frame.hpp"
#include "ffe/core/knn_graph.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

namespace ffe {

struct ModelConfig {
    std::size_t k = 32;
    std::vector<std::size_t> static_widths{32, 64, 64};
    std::size_t edge_width = 64;  // 0 disables the dynamic layer
    std::size_t embed_dim = 128;
    double leaky_slope = 0.1;
    /// Feed the 6-channel descriptor into every static layer. Off gives a
    /// translation-invariant extractor (only coordinate differences remain).
    bool use_descriptor = true;
    /// Applied to the concatenated hierarchy during training only.
    double dropout = 0.0;

    void validate() const;
};

/// Per-row (x, y, z, r, azimuth, polar). Angles are 0 at the origin.
ad::Matrix geometric_descriptor(const ParticleFrame& frame);

/// Weights of one two-layer edge perceptron applied to (c_i, F_j - F_i).
struct EdgeLayer {
    ad::Var w_center;  // c x h (may be invalid when the center input is off)
    ad::Var w_diff;    // d x h
    ad::Var b1;        // 1 x h
    ad::Var w2;        // h x out
    ad::Var b2;        // 1 x out
};

/// F_i' = max_{j in N(i)} mlp(c_i, F_j - F_i).
ad::Var edge_aggregate(const ad::Var& center, const ad::Var& features, const KnnGraph& graph, const EdgeLayer& layer,
                       double slope);

/// Static-graph layer: the center input is the geometric descriptor.
ad::Var geoset_conv(const ad::Var& features, const ad::Var& descriptor, const KnnGraph& graph,
                    const EdgeLayer& layer, double slope);

/// Dynamic layer: the graph is rebuilt from `features`, the center input is
/// the feature row itself.
ad::Var edge_conv(const ad::Var& features, std::size_t k, const EdgeLayer& layer, double slope);

/// Learnable tensors plus the architecture they belong to.
struct ModelParams {
    ModelConfig config;
    std::vector<ad::Matrix> tensors;

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
    static ModelParams initialize(const ModelConfig& config, std::uint64_t seed);

    /// Expected (rows, cols) of every tensor, in storage order.
    static std::vector<std::pair<std::size_t, std::size_t>> layout(const ModelConfig& config);

    void save(const std::filesystem::path& path) const;
    static ModelParams load(const std::filesystem::path& path);
};

/// Precomputed per-frame inputs that do not depend on the parameters.
struct FrameInputs {
    ad::Matrix positions;   // n x 3
    ad::Matrix descriptor;  // n x 6
    KnnGraph graph;
};

FrameInputs prepare_frame(const ParticleFrame& frame, const ModelConfig& config);

/// Options for a forward pass. A non-null rng enables dropout.
struct ForwardOptions {
    std::mt19937_64* dropout_rng = nullptr;
};

/// Forward pass on `tape`; `params` are the tape nodes for ModelParams::tensors.
ad::Var extract_features(ad::Tape& tape, const FrameInputs& inputs, const ModelConfig& config,
                         std::span<const ad::Var> params, const ForwardOptions& options = {});

/// Inference convenience: n x embed_dim features with no gradient tracking.
ad::Matrix extract_features(const ParticleFrame& frame, const ModelParams& params);

}  // namespace ffe
