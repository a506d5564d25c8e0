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

#include "ffe/bench/bench.hpp"

#include "ffe/autodiff/gradcheck.hpp"
#include "ffe/core/random.hpp"
#include "ffe/error.hpp"
#include "ffe/losses/losses.hpp"
#include "ffe/pipeline/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

namespace ffe {

void BenchmarkConfig::validate() const {
    require(!cases.empty(), "benchmark: no cases");
    require(train_pairs >= 1 && test_pairs >= 1, "benchmark: needs at least one training and one held-out pair");
    require(n >= 2, "benchmark: n must be >= 2");
    require(epochs >= 1, "benchmark: epochs must be >= 1");
}

std::uint64_t pair_seed(std::uint64_t run_seed, FlowKind kind, std::size_t index, bool held_out) {
    return run_seed * 1000003ull + static_cast<std::uint64_t>(kind) * 100000ull + (held_out ? 50000ull : 0ull) +
           index;
}

std::size_t CaseResult::dve_wins() const {
    std::size_t w = 0;
    for (std::size_t i = 0; i < epe_with_dve.size(); ++i) w += epe_with_dve[i] < epe_without_dve[i];
    return w;
}

namespace {

MetricsReport mean_report(const std::vector<MetricsReport>& rs) {
    MetricsReport m;
    const double inv = 1.0 / double(rs.size());
    for (const auto& r : rs) {
        m.n += r.n;
        m.zero_gt += r.zero_gt;
        m.epe += r.epe * inv;
        m.nepe += r.nepe * inv;
        m.acc_strict += r.acc_strict * inv;
        m.acc_relax += r.acc_relax * inv;
        m.outliers += r.outliers * inv;
    }
    return m;
}

double median(std::vector<double> v) {
    const std::size_t h = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + h, v.end());
    if (v.size() % 2) return v[h];
    const double hi = v[h];
    return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + h));
}

nlohmann::json report_json(const MetricsReport& r) { return nlohmann::json::parse(r.to_json()); }

}  // namespace

BenchmarkResult run_benchmark(const BenchmarkConfig& bench, const TrainConfig& train_cfg, const DveConfig& dve,
                              const BenchmarkProgress& progress) {
    bench.validate();
    dve.validate();
    TrainConfig cfg = train_cfg;
    cfg.epochs = bench.epochs;
    cfg.validate();
    const auto say = [&](const std::string& s) {
        if (progress) progress(s);
    };

    BenchmarkResult out;
    for (const FlowKind kind : bench.cases) {
        FlowCase fc;
        fc.kind = kind;
        fc.n = bench.n;
        std::vector<TrainingPair> data;
        for (std::size_t i = 0; i < bench.train_pairs; ++i) {
            fc.seed = pair_seed(cfg.seed, kind, i, false);
            SyntheticPair p = generate_pair(fc);
            data.push_back({std::move(p.source), std::move(p.target)});
        }
        say(to_string(kind) + ": training on " + std::to_string(data.size()) + " pairs");
        TrainResult tr = train(data, cfg, [&](const EpochRecord& r) {
            if (r.epoch % 10 == 0 || r.epoch == cfg.epochs) say(to_string(kind) + ": " + r.to_json());
        });

        CaseResult c;
        c.kind = kind;
        c.history = std::move(tr.history);
        c.params = std::move(tr.params);
        std::vector<MetricsReport> off, on;
        std::vector<double> gt_norms;
        for (std::size_t i = 0; i < bench.test_pairs; ++i) {
            fc.seed = pair_seed(cfg.seed, kind, i, true);
            const SyntheticPair p = generate_pair(fc);
            for (const Vec3& v : p.flow.vectors()) gt_norms.push_back(norm(v));
            const Estimate e = estimate_flow(p.source, p.target, c.params, cfg.ot, dve);
            off.push_back(evaluate(e.initial, p.flow));
            on.push_back(evaluate(e.flow, p.flow));
            c.epe_without_dve.push_back(off.back().epe);
            c.epe_with_dve.push_back(on.back().epe);
        }
        c.without_dve = mean_report(off);
        c.with_dve = mean_report(on);
        c.median_gt = median(std::move(gt_norms));
        say(to_string(kind) + ": held-out epe " + std::to_string(c.with_dve.epe) + " (no refinement " +
            std::to_string(c.without_dve.epe) + ")");
        out.cases.push_back(std::move(c));
    }
    return out;
}

std::string BenchmarkResult::table() const {
    std::string s;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-10s %-8s %6s %12s %12s %10s %10s %10s %10s\n", "case", "variant", "pairs", "epe",
                  "nepe", "acc_strict", "acc_relax", "outliers", "epe/med");
    s += buf;
    for (const auto& c : cases) {
        for (int v = 0; v < 2; ++v) {
            const MetricsReport& r = v ? c.with_dve : c.without_dve;
            std::snprintf(buf, sizeof buf, "%-10s %-8s %6zu %12.6e %12.6e %10.4f %10.4f %10.4f %10.4f\n",
                          to_string(c.kind).c_str(), v ? "dve" : "no-dve", c.epe_with_dve.size(), r.epe, r.nepe,
                          r.acc_strict, r.acc_relax, r.outliers, r.epe / c.median_gt);
            s += buf;
        }
    }
    return s;
}

std::string BenchmarkResult::to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& c : cases) {
        nlohmann::json h = nlohmann::json::array();
        for (const auto& r : c.history) h.push_back(nlohmann::json::parse(r.to_json()));
        j.push_back({{"case", to_string(c.kind)},
                     {"median_gt", c.median_gt},
                     {"without_dve", report_json(c.without_dve)},
                     {"with_dve", report_json(c.with_dve)},
                     {"epe_without_dve", c.epe_without_dve},
                     {"epe_with_dve", c.epe_with_dve},
                     {"dve_wins", c.dve_wins()},
                     {"history", h}});
    }
    return j.dump(2);
}

std::vector<GradCheckLine> run_grad_checks(const GradCheckSuiteConfig& cfg, const TrainConfig& train_cfg) {
    require(cfg.instances >= 1, "grad-check: instances must be >= 1");
    require(cfg.min_n >= 4 && cfg.min_n <= cfg.max_n, "grad-check: need 4 <= min_n <= max_n");
    require(cfg.grid_g >= 2, "grad-check: grid_g must be >= 2");
    train_cfg.validate();
    LossWeights w = train_cfg.loss;
    w.grid_g = cfg.grid_g;
    ModelConfig model = train_cfg.model;
    const OTConfig& ot = train_cfg.ot;

    using ad::Matrix;
    using ad::Tape;
    using ad::Var;
    std::vector<GradCheckLine> lines;
    for (const char* name : {"recon", "smooth", "div", "train", "dve", "end_to_end"})
        lines.push_back({name, 0, 0, 0, 0.0, 0.0, 0.0});
    const auto add = [&](std::size_t which, const ad::GradCheckReport& r) {
        GradCheckLine& l = lines[which];
        ++l.instances;
        l.checked += r.checked;
        l.excluded += r.excluded;
        l.worst = std::max(l.worst, r.max_relative_error);
        l.max_abs_error = std::max(l.max_abs_error, r.max_abs_error);
        l.max_abs_gradient = std::max(l.max_abs_gradient, r.max_abs_gradient);
    };

    std::mt19937_64 rng(cfg.seed);
    const FlowKind kinds[] = {FlowKind::Uniform, FlowKind::RigidRotation, FlowKind::Beltrami};
    for (std::size_t inst = 0; inst < cfg.instances; ++inst) {
        FlowCase fc;
        fc.kind = kinds[inst % 3];
        fc.n = cfg.min_n + static_cast<std::size_t>(rng() % (cfg.max_n - cfg.min_n + 1));
        fc.seed = rng();
        const SyntheticPair s = generate_pair(fc);
        const std::size_t n = fc.n;
        Matrix f(n, 3), p(n, 1), r(n, 3);
        double scale = 0.0;
        for (const Vec3& v : s.flow.vectors()) scale = std::max(scale, norm(v));
        for (std::size_t i = 0; i < n; ++i) {
            for (int a = 0; a < 3; ++a) {
                f(i, a) = s.flow[i][a] + 0.2 * scale * (2.0 * unit_uniform(rng) - 1.0);
                r(i, a) = 0.05 * scale * (2.0 * unit_uniform(rng) - 1.0);
            }
            p(i, 0) = 0.1 + 0.8 * unit_uniform(rng);
        }

        const LossContext ctx = LossContext::build(s.source, s.target, w);
        const auto term = [&](std::size_t which) {
            return [&, which](Tape&, std::span<const Var> v) {
                const TrainLoss l = train_loss(ctx, v[0], v[1], w);
                return which == 0 ? l.recon : which == 1 ? l.smooth : which == 2 ? l.div : l.total;
            };
        };
        for (std::size_t t = 0; t < 4; ++t) add(t, ad::finite_diff_check(term(t), {f, p}));

        Matrix warped(n, 3);
        for (std::size_t i = 0; i < n; ++i)
            for (int a = 0; a < 3; ++a) warped(i, a) = s.source[i][a] + f(i, a);
        Matrix conf(n, 1);
        conf.data = p.data;
        const auto dve = [&](Tape&, std::span<const Var> v) {
            return dve_objective(v[0], warped, conf, *ctx.target_index, s.target);
        };
        add(4, ad::finite_diff_check(dve, {r}));

        const ModelParams params = ModelParams::initialize(model, rng());
        const PairInputs in = PairInputs::build(s.source, s.target, model);
        const auto e2e = [&](Tape& t, std::span<const Var> v) {
            const ForwardResult fwd = forward_pair(t, in, model, v, ot, ot.train_iterations);
            return train_loss(ctx, fwd.correspondence.flow, fwd.correspondence.confidence, w).total;
        };
        ad::GradCheckOptions o;
        o.max_entries = cfg.model_entries;
        o.seed = rng();
        add(5, ad::finite_diff_check(e2e, params.tensors, o));
    }
    return lines;
}

}  // namespace ffe
