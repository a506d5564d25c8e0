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

// Whole-pipeline runs over synthetic cases, and the gradient-check suite.

#include "ffe/dve/dve.hpp"
#include "ffe/metrics/metrics.hpp"
#include "ffe/synth/synth.hpp"
#include "ffe/trainer/trainer.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ffe {

struct BenchmarkConfig {
    std::vector<FlowKind> cases{FlowKind::Uniform, FlowKind::RigidRotation, FlowKind::Beltrami};
    std::size_t train_pairs = 20;
    std::size_t test_pairs = 10;
    std::size_t n = 512;
    /// Replaces TrainConfig::epochs for every case.
    std::size_t epochs = 40;

    void validate() const;
};

/// Seed of the i-th training or held-out pair of a case. Held-out seeds never
/// collide with training seeds.
std::uint64_t pair_seed(std::uint64_t run_seed, FlowKind kind, std::size_t index, bool held_out);

struct CaseResult {
    FlowKind kind = FlowKind::Uniform;
    /// Median ground-truth displacement over all held-out particles.
    double median_gt = 0.0;
    /// Field-wise means over held-out pairs.
    MetricsReport without_dve, with_dve;
    std::vector<double> epe_without_dve, epe_with_dve;
    std::vector<EpochRecord> history;
    ModelParams params;

    /// Held-out pairs where refinement lowered the EPE.
    std::size_t dve_wins() const;
};

struct BenchmarkResult {
    std::vector<CaseResult> cases;

    /// Fixed-width table, one row per case and variant.
    std::string table() const;
    std::string to_json() const;
};

using BenchmarkProgress = std::function<void(const std::string&)>;

/// For each case: synthesize pairs, train label-free, estimate with and
/// without refinement, evaluate against ground truth. Deterministic in
/// train.seed.
BenchmarkResult run_benchmark(const BenchmarkConfig& bench, const TrainConfig& train, const DveConfig& dve,
                              const BenchmarkProgress& progress = {});

struct GradCheckSuiteConfig {
    std::size_t instances = 20;
    std::size_t min_n = 16, max_n = 64;
    std::size_t grid_g = 5;
    /// Sampled parameter entries per end-to-end instance.
    std::size_t model_entries = 60;
    std::uint64_t seed = 0;
};

struct GradCheckLine {
    std::string target;
    std::size_t instances = 0;
    std::size_t checked = 0, excluded = 0;
    double worst = 0.0;
    double max_abs_error = 0.0, max_abs_gradient = 0.0;
};

/// Finite-difference checks of the training losses, the refinement objective
/// and the parameter gradient through features and transport, on random
/// synthetic instances.
std::vector<GradCheckLine> run_grad_checks(const GradCheckSuiteConfig& cfg, const TrainConfig& train);

}  // namespace ffe
