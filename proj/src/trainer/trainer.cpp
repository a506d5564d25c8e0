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

#include "ffe/trainer/trainer.hpp"

#include "ffe/autodiff/adam.hpp"
#include "ffe/error.hpp"
#include "ffe/pipeline/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <numeric>
#include <random>
#include <thread>

namespace ffe {

using ad::Matrix;
using ad::Tape;
using ad::Var;

void TrainConfig::validate() const {
    require(batch_size >= 1, "train: batch_size must be >= 1");
    require(epochs >= 1, "train: epochs must be >= 1");
    require(learning_rate > 0.0, "train: learning_rate must be > 0");
    require(data_fraction > 0.0 && data_fraction <= 1.0, "train: data_fraction must be in (0, 1]");
    require(divergence_limit > 0.0, "train: divergence_limit must be > 0");
    model.validate();
    loss.validate();
    ot.validate();
}

std::string EpochRecord::to_json() const {
    return nlohmann::json{{"epoch", epoch}, {"loss", loss}, {"recon", recon}, {"smooth", smooth}, {"div", div}}.dump();
}

std::vector<std::size_t> sample_subset(std::size_t n, double fraction, std::uint64_t seed) {
    require(fraction > 0.0 && fraction <= 1.0, "sample_subset: fraction must be in (0, 1]");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (fraction == 1.0) {
        if (n == 0) fail(ErrorKind::InvalidArgument, "sample_subset: empty dataset");
        return idx;
    }
    const auto m = static_cast<std::size_t>(std::floor(fraction * double(n)));
    if (m == 0)
        fail(ErrorKind::InvalidArgument, "sample_subset: fraction " + std::to_string(fraction) + " of " +
                                             std::to_string(n) + " samples selects nothing");
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates with an explicit draw so the result does not
    // depend on the standard library's shuffle.
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng() % (n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(m);
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::size_t worker_threads(std::size_t requested) {
    std::size_t cap = 0;
    if (const char* env = std::getenv("FFE_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) cap = static_cast<std::size_t>(v);
    }
    if (requested == 0) return cap > 0 ? cap : 1;
    return cap > 0 ? std::min(requested, cap) : requested;
}

namespace {

struct SampleCache {
    PairInputs inputs;
    LossContext losses;
};

struct SampleResult {
    std::vector<Matrix> grads;
    double loss = 0, recon = 0, smooth = 0, div = 0;
};

SampleResult run_sample(const SampleCache& cache, const TrainConfig& cfg, const std::vector<Matrix>& params,
                        std::uint64_t dropout_seed) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const auto& p : params) vars.push_back(tape.leaf(p));
    std::mt19937_64 rng(dropout_seed);
    ForwardOptions opt;
    if (cfg.model.dropout > 0.0) opt.dropout_rng = &rng;
    const ForwardResult fwd =
        forward_pair(tape, cache.inputs, cfg.model, vars, cfg.ot, cfg.ot.train_iterations, opt);
    const TrainLoss l = train_loss(cache.losses, fwd.correspondence.flow, fwd.correspondence.confidence, cfg.loss);

    SampleResult r;
    r.loss = l.total.item();
    r.recon = l.recon.item();
    r.smooth = l.smooth.item();
    r.div = l.div.item();
    if (!std::isfinite(r.loss) || r.loss > cfg.divergence_limit) return r;
    tape.backward(l.total);
    for (const Var& v : vars) r.grads.push_back(v.grad());
    return r;
}

}  // namespace

TrainResult train(std::span<const TrainingPair> data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    const auto subset = sample_subset(data.size(), cfg.data_fraction, cfg.seed);

    // Static graphs, target indices and divergence operators depend only on
    // positions, so they are built once per sample.
    std::vector<SampleCache> cache;
    cache.reserve(subset.size());
    for (std::size_t i : subset)
        cache.push_back({PairInputs::build(data[i].source, data[i].target, cfg.model),
                         LossContext::build(data[i].source, data[i].target, cfg.loss)});

    TrainResult result;
    result.params = ModelParams::initialize(cfg.model, cfg.seed);
    std::vector<Matrix>& params = result.params.tensors;
    ad::Adam opt({cfg.learning_rate, 0.9, 0.999, 1e-8}, params);

    const std::size_t threads = worker_threads(cfg.threads);
    std::mt19937_64 shuffle_rng(cfg.seed + 1);
    std::vector<std::size_t> order(cache.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng() % i]);
        EpochRecord rec;
        rec.epoch = epoch;

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, order.size() - start);
            std::vector<SampleResult> out(count);
            auto work = [&](std::size_t b) {
                const std::size_t s = order[start + b];
                out[b] = run_sample(cache[s], cfg, params, cfg.seed ^ (epoch * 1000003ull + s));
            };
            if (threads <= 1 || count == 1) {
                for (std::size_t b = 0; b < count; ++b) work(b);
            } else {
                std::vector<std::exception_ptr> errors(count);
                for (std::size_t b0 = 0; b0 < count; b0 += threads) {
                    std::vector<std::thread> pool;
                    for (std::size_t b = b0; b < std::min(count, b0 + threads); ++b)
                        pool.emplace_back([&, b] {
                            try {
                                work(b);
                            } catch (...) {
                                errors[b] = std::current_exception();
                            }
                        });
                    for (auto& t : pool) t.join();
                }
                for (auto& e : errors)
                    if (e) std::rethrow_exception(e);
            }

            // Batch-mean gradient, summed in sample order.
            std::vector<Matrix> grads;
            for (std::size_t b = 0; b < count; ++b) {
                const SampleResult& r = out[b];
                if (r.grads.empty())
                    fail(ErrorKind::Diverged, "train: loss " + std::to_string(r.loss) + " at epoch " +
                                                  std::to_string(epoch) + " on sample " +
                                                  std::to_string(subset[order[start + b]]) + " (recon " +
                                                  std::to_string(r.recon) + ", smooth " + std::to_string(r.smooth) +
                                                  ", div " + std::to_string(r.div) + ")");
                if (grads.empty()) {
                    grads = r.grads;
                } else {
                    for (std::size_t p = 0; p < grads.size(); ++p)
                        for (std::size_t e = 0; e < grads[p].size(); ++e) grads[p].data[e] += r.grads[p].data[e];
                }
                rec.loss += r.loss;
                rec.recon += r.recon;
                rec.smooth += r.smooth;
                rec.div += r.div;
            }
            for (auto& g : grads)
                for (auto& x : g.data) x /= double(count);
            opt.step(params, grads);
        }
        const double n = double(order.size());
        rec.loss /= n;
        rec.recon /= n;
        rec.smooth /= n;
        rec.div /= n;
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return result;
}

}  // namespace ffe
