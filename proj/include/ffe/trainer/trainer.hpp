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

#include "ffe/features/model.hpp"
#include "ffe/losses/losses.hpp"
#include "ffe/transport/transport.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ffe {

/// A training example is the two frames only; there is no slot for labels.
struct TrainingPair {
    ParticleFrame source;
    ParticleFrame target;
};

struct TrainConfig {
    std::size_t batch_size = 4;
    std::size_t epochs = 100;
    double learning_rate = 1e-3;
    double data_fraction = 1.0;
    std::uint64_t seed = 0;
    /// Worker threads for the samples of a batch; 0 means FFE_THREADS, or 1.
    /// FFE_THREADS also caps an explicit count.
    std::size_t threads = 0;
    /// Abort when a sample loss exceeds this or is not finite.
    double divergence_limit = 1e6;
    ModelConfig model;
    LossWeights loss;
    OTConfig ot;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double loss = 0, recon = 0, smooth = 0, div = 0;

    std::string to_json() const;
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochRecord> history;
};

/// floor(fraction * n) distinct indices in increasing order; all of 0..n-1
/// when fraction == 1. Throws if the result would be empty.
std::vector<std::size_t> sample_subset(std::size_t n, double fraction, std::uint64_t seed);

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(std::span<const TrainingPair> data, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Resolves TrainConfig::threads against FFE_THREADS.
std::size_t worker_threads(std::size_t requested);

}  // namespace ffe
