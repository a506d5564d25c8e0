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

// ffe: synth / train / estimate / eval / grad-check / benchmark.
//
// Every command reads and validates all of its inputs before it computes
// anything, and creates the output directory only once the results exist.
// Exit status: 0 success, 1 runtime failure, 2 usage or input error.

#include "ffe/bench/bench.hpp"
#include "ffe/error.hpp"
#include "ffe/io/io.hpp"
#include "ffe/metrics/metrics.hpp"
#include "ffe/pipeline/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace ffe;

namespace {

// Errors raised while reading inputs are usage errors (exit 2); anything
// after that is a runtime failure (exit 1).
bool g_reading_inputs = true;

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out;
};

void add_config_options(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "key=value config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", c.sets, "override one value, section.key=value (repeatable)");
}

io::RunConfig resolve_config(const Common& c) {
    io::RunConfig cfg = c.config.empty() ? io::RunConfig{} : io::load_config(c.config);
    for (const auto& s : c.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) fail(ErrorKind::InvalidArgument, "--set expects section.key=value, got '" + s + "'");
        io::set_option(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    if (c.seed_given) cfg.train.seed = c.seed;
    cfg.train.validate();
    cfg.dve.validate();
    cfg.bench.validate();
    return cfg;
}

/// Deferred writes, all relative to one directory.
class Outputs {
public:
    explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

    void text(const std::string& name, std::string content) {
        writers_.push_back([name, content = std::move(content)](const fs::path& dir) {
            std::ofstream f(dir / name, std::ios::binary);
            f << content;
            if (!f) fail(ErrorKind::Io, "cannot write " + (dir / name).string());
        });
    }
    void custom(std::function<void(const fs::path&)> w) { writers_.push_back(std::move(w)); }

    void commit() const {
        if (writers_.empty()) return;
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) fail(ErrorKind::Io, "cannot create " + dir_.string() + ": " + ec.message());
        for (const auto& w : writers_) w(dir_);
    }

private:
    fs::path dir_;
    std::vector<std::function<void(const fs::path&)>> writers_;
};

void require_file(const std::string& path, const char* what) {
    if (!fs::is_regular_file(path)) fail(ErrorKind::Io, std::string(what) + " not found: " + path);
}

std::vector<fs::path> expand_pairs(const std::vector<std::string>& args) {
    std::vector<fs::path> files;
    for (const auto& a : args) {
        if (fs::is_directory(a)) {
            std::vector<fs::path> in_dir;
            for (const auto& e : fs::directory_iterator(a)) {
                const auto ext = e.path().extension();
                if (e.is_regular_file() && (ext == ".ffp" || ext == ".ffpb")) in_dir.push_back(e.path());
            }
            std::sort(in_dir.begin(), in_dir.end());
            files.insert(files.end(), in_dir.begin(), in_dir.end());
        } else {
            require_file(a, "pair file");
            files.emplace_back(a);
        }
    }
    if (files.empty()) fail(ErrorKind::InvalidArgument, "no pair files given");
    return files;
}

std::string json_line(const nlohmann::json& j) { return j.dump() + "\n"; }

// --- synth ---

struct SynthArgs {
    std::string kind = "beltrami";
    std::size_t n = 512, count = 1;
    double dt = 0.0;
    bool binary = false;
};

int cmd_synth(const Common& c, const SynthArgs& a) {
    FlowCase fc;
    fc.kind = parse_flow_kind(a.kind);
    fc.n = a.n;
    fc.dt = a.dt;
    fc.validate();
    if (a.count == 0) fail(ErrorKind::InvalidArgument, "--count must be >= 1");
    g_reading_inputs = false;

    Outputs out(c.out);
    for (std::size_t i = 0; i < a.count; ++i) {
        fc.seed = c.seed + i;
        SyntheticPair s = generate_pair(fc);
        io::FramePairRecord r{std::move(s.source), std::move(s.target), std::move(s.flow),
                              {to_string(fc.kind), fc.seed, "m"}};
        const std::string name = to_string(fc.kind) + "_" + std::to_string(fc.seed) + (a.binary ? ".ffpb" : ".ffp");
        out.custom([r = std::move(r), name](const fs::path& dir) { io::save_pair(r, dir / name); });
        std::cout << name << "\n";
    }
    out.commit();
    return 0;
}

// --- train ---

int cmd_train(const Common& c, const std::vector<std::string>& data_args) {
    const io::RunConfig cfg = resolve_config(c);
    std::vector<TrainingPair> data;
    for (const auto& f : expand_pairs(data_args)) {
        io::FramePairRecord r = io::load_pair(f);
        // Ground truth stays in the loader.
        data.push_back({std::move(r.source), std::move(r.target)});
    }
    g_reading_inputs = false;

    std::string history;
    const TrainResult tr = train(data, cfg.train, [&](const EpochRecord& e) {
        history += e.to_json() + "\n";
        std::cerr << e.to_json() << "\n";
    });
    Outputs out(c.out);
    out.custom([&](const fs::path& dir) { tr.params.save(dir / "model.ffe"); });
    out.text("history.jsonl", history);
    out.text("config.ini", io::to_config_text(cfg));
    out.commit();
    return 0;
}

// --- estimate ---

struct EstimateArgs {
    std::string model, pair;
    bool no_dve = false, trace = false;
};

int cmd_estimate(const Common& c, const EstimateArgs& a) {
    const io::RunConfig cfg = resolve_config(c);
    require_file(a.model, "checkpoint");
    require_file(a.pair, "pair file");
    const ModelParams params = ModelParams::load(a.model);
    const io::FramePairRecord pair = io::load_pair(a.pair);
    g_reading_inputs = false;

    const Estimate e =
        estimate_flow(pair.source, pair.target, params, cfg.train.ot, a.no_dve ? std::nullopt : std::optional(cfg.dve));
    Outputs out(c.out);
    out.custom([&](const fs::path& dir) { io::save_frame({pair.source, e.flow}, dir / "flow.ffp"); });
    std::string conf;
    for (double p : e.confidence) conf += std::to_string(p) + "\n";
    out.text("confidence.txt", conf);
    if (pair.flow) {
        const MetricsReport m = evaluate(e.flow, *pair.flow);
        std::cout << m.to_key_value() << "\n";
        out.text("metrics.json", m.to_json() + "\n");
    }
    if (a.trace && e.trace)
        out.text("trace.json", json_line({{"objective", e.trace->objective}, {"best_step", e.trace->best_step}}));
    out.commit();
    return 0;
}

// --- eval ---

struct EvalArgs {
    std::string pred, gt;
    std::size_t nds_k = 8;
};

int cmd_eval(const Common& c, const EvalArgs& a) {
    require_file(a.pred, "prediction");
    require_file(a.gt, "ground-truth pair");
    const io::FrameRecord pred = io::load_frame(a.pred);
    const io::FramePairRecord gt = io::load_pair(a.gt);
    if (!pred.flow) fail(ErrorKind::Format, a.pred + ": no flow columns");
    if (!gt.flow) fail(ErrorKind::Format, a.gt + ": no ground-truth flow");
    if (pred.flow->size() != gt.flow->size())
        fail(ErrorKind::InvalidArgument, "prediction has " + std::to_string(pred.flow->size()) + " rows, ground truth " +
                                             std::to_string(gt.flow->size()));
    g_reading_inputs = false;

    const MetricsReport m = evaluate(*pred.flow, *gt.flow);
    const NdsResult d = nds(gt.source, *pred.flow, a.nds_k);
    char buf[64];
    std::snprintf(buf, sizeof buf, " mnds=%.17g", d.mean);
    std::cout << m.to_key_value() << buf << "\n";
    if (!c.out.empty()) {
        Outputs out(c.out);
        auto j = nlohmann::json::parse(m.to_json());
        j["mnds"] = d.mean;
        out.text("metrics.json", json_line(j));
        out.commit();
    }
    return 0;
}

// --- grad-check ---

int cmd_grad_check(const Common& c, GradCheckSuiteConfig g) {
    const io::RunConfig cfg = resolve_config(c);
    g.seed = c.seed;
    g_reading_inputs = false;

    const auto lines = run_grad_checks(g, cfg.train);
    bool ok = true;
    nlohmann::json j = nlohmann::json::array();
    for (const auto& l : lines) {
        const bool pass = l.worst < 1e-4;
        ok = ok && pass;
        std::printf("%-10s instances=%zu checked=%zu excluded=%zu max_rel=%.3e max_abs=%.3e max_grad=%.3e %s\n",
                    l.target.c_str(), l.instances, l.checked, l.excluded, l.worst, l.max_abs_error, l.max_abs_gradient,
                    pass ? "ok" : "FAIL");
        j.push_back({{"target", l.target},
                     {"instances", l.instances},
                     {"checked", l.checked},
                     {"excluded", l.excluded},
                     {"max_rel", l.worst},
                     {"max_abs", l.max_abs_error},
                     {"max_grad", l.max_abs_gradient}});
    }
    if (!c.out.empty()) {
        Outputs out(c.out);
        out.text("gradcheck.json", j.dump(2) + "\n");
        out.commit();
    }
    return ok ? 0 : 1;
}

// --- benchmark ---

int cmd_benchmark(const Common& c) {
    const io::RunConfig cfg = resolve_config(c);
    g_reading_inputs = false;

    const BenchmarkResult r =
        run_benchmark(cfg.bench, cfg.train, cfg.dve, [](const std::string& s) { std::cerr << s << "\n"; });
    const std::string table = r.table();
    std::cout << table;
    Outputs out(c.out);
    out.text("metrics_table.txt", table);
    out.text("metrics.json", r.to_json() + "\n");
    out.text("config.ini", io::to_config_text(cfg));
    for (const auto& cr : r.cases)
        out.custom([&cr](const fs::path& dir) { cr.params.save(dir / ("model_" + to_string(cr.kind) + ".ffe")); });
    out.commit();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-supervised dual-frame 3D particle motion estimation"};
    app.require_subcommand(1);
    Common common;

    const auto seed_option = [&](CLI::App* cmd) {
        cmd->add_option_function<std::uint64_t>(
            "--seed",
            [&](const std::uint64_t& s) {
                common.seed = s;
                common.seed_given = true;
            },
            "random seed");
    };
    const auto out_option = [&](CLI::App* cmd, bool required) {
        auto* o = cmd->add_option("--out", common.out, "output directory");
        if (required) o->required();
    };

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "write labelled synthetic frame pairs");
    synth->add_option("--case", synth_args.kind, "uniform, rotation or beltrami");
    synth->add_option("--n", synth_args.n, "particles per frame");
    synth->add_option("--count", synth_args.count, "pairs, seeds seed..seed+count-1");
    synth->add_option("--dt", synth_args.dt, "time step (0 picks one from the particle spacing)");
    synth->add_flag("--binary", synth_args.binary, "write .ffpb instead of .ffp");
    seed_option(synth);
    out_option(synth, true);

    std::vector<std::string> train_data;
    auto* train_cmd = app.add_subcommand("train", "train the feature extractor without labels");
    train_cmd->add_option("data", train_data, "pair files or directories of them")->required();
    add_config_options(train_cmd, common);
    seed_option(train_cmd);
    out_option(train_cmd, true);

    EstimateArgs est;
    auto* estimate = app.add_subcommand("estimate", "estimate the flow of one frame pair");
    estimate->add_option("--model", est.model, "checkpoint")->required();
    estimate->add_option("--pair", est.pair, "frame pair")->required();
    estimate->add_flag("--no-dve", est.no_dve, "skip test-time refinement");
    estimate->add_flag("--trace", est.trace, "write the refinement objective trace");
    add_config_options(estimate, common);
    seed_option(estimate);
    out_option(estimate, true);

    EvalArgs ev;
    auto* eval = app.add_subcommand("eval", "compare a predicted flow with ground truth");
    eval->add_option("--pred", ev.pred, "flow file written by estimate")->required();
    eval->add_option("--gt", ev.gt, "pair file with ground truth")->required();
    eval->add_option("--nds-k", ev.nds_k, "neighbours for the distance score");
    out_option(eval, false);

    GradCheckSuiteConfig gc;
    auto* grad = app.add_subcommand("grad-check", "finite-difference check of every gradient");
    grad->add_option("--instances", gc.instances, "random instances");
    grad->add_option("--min-n", gc.min_n, "smallest particle count");
    grad->add_option("--max-n", gc.max_n, "largest particle count");
    grad->add_option("--grid", gc.grid_g, "divergence grid size");
    grad->add_option("--entries", gc.model_entries, "sampled model entries per instance");
    add_config_options(grad, common);
    seed_option(grad);
    out_option(grad, false);

    auto* bench = app.add_subcommand("benchmark", "synth, train, estimate and eval over the case matrix");
    add_config_options(bench, common);
    seed_option(bench);
    out_option(bench, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*synth) return cmd_synth(common, synth_args);
        if (*train_cmd) return cmd_train(common, train_data);
        if (*estimate) return cmd_estimate(common, est);
        if (*eval) return cmd_eval(common, ev);
        if (*grad) return cmd_grad_check(common, gc);
        if (*bench) return cmd_benchmark(common);
    } catch (const Error& e) {
        std::cerr << "ffe: " << e.what() << "\n";
        return g_reading_inputs ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "ffe: " << e.what() << "\n";
        return g_reading_inputs ? 2 : 1;
    }
    return 2;
}
