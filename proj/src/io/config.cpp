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

#include "ffe/io/io.hpp"

#include "ffe/error.hpp"

#include <charconv>
#include <concepts>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string_view>
#include <vector>

namespace ffe::io {

namespace {

// Parsers return false on malformed input; the caller adds the line number.
bool parse(std::string_view s, double& out) {
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && p == s.data() + s.size();
}

template <std::unsigned_integral T>
bool parse(std::string_view s, T& out) {
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && p == s.data() + s.size();
}

bool parse(std::string_view s, bool& out) {
    if (s == "true" || s == "1") return out = true, true;
    if (s == "false" || s == "0") return out = false, true;
    return false;
}

bool parse(std::string_view s, std::vector<std::size_t>& out) {
    std::vector<std::size_t> v;
    std::size_t i = 0;
    while (i <= s.size()) {
        const std::size_t j = std::min(s.find(',', i), s.size());
        std::size_t x = 0;
        if (!parse<std::size_t>(s.substr(i, j - i), x)) return false;
        v.push_back(x);
        i = j + 1;
    }
    out = std::move(v);
    return true;
}

bool parse(std::string_view s, WeightMode& out) {
    if (s == "as_written") return out = WeightMode::AsWritten, true;
    if (s == "normalized") return out = WeightMode::Normalized, true;
    return false;
}

bool parse(std::string_view s, SplatMode& out) {
    if (s == "as_written") return out = SplatMode::AsWritten, true;
    if (s == "normalized") return out = SplatMode::Normalized, true;
    return false;
}

bool parse(std::string_view s, GridPlacement& out) {
    if (s == "interior") return out = GridPlacement::Interior, true;
    if (s == "enclosing") return out = GridPlacement::Enclosing, true;
    return false;
}

bool parse(std::string_view s, std::vector<FlowKind>& out) {
    std::vector<FlowKind> v;
    std::size_t i = 0;
    while (i <= s.size()) {
        const std::size_t j = std::min(s.find(',', i), s.size());
        try {
            v.push_back(parse_flow_kind(std::string(s.substr(i, j - i))));
        } catch (const Error&) {
            return false;
        }
        i = j + 1;
    }
    out = std::move(v);
    return true;
}

std::string show(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
std::string show(bool v) { return v ? "true" : "false"; }
template <std::unsigned_integral T>
std::string show(T v) { return std::to_string(v); }
std::string show(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}
std::string show(const std::vector<FlowKind>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + to_string(v[i]);
    return s;
}
std::string show(WeightMode m) { return m == WeightMode::AsWritten ? "as_written" : "normalized"; }
std::string show(SplatMode m) { return m == SplatMode::AsWritten ? "as_written" : "normalized"; }
std::string show(GridPlacement g) { return g == GridPlacement::Interior ? "interior" : "enclosing"; }

struct Option {
    std::string section, key;
    std::function<bool(RunConfig&, std::string_view)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <class Field>
Option option(std::string section, std::string key, Field field) {
    return {std::move(section), std::move(key),
            [field](RunConfig& c, std::string_view v) { return parse(v, field(c)); },
            [field](const RunConfig& c) {
                RunConfig copy = c;
                return show(field(copy));
            }};
}

#define FFE_OPT(sec, path, name) option(sec, #name, [](RunConfig& c) -> auto& { return c.path.name; })

const std::vector<Option>& options() {
    static const std::vector<Option> table = {
        FFE_OPT("model", train.model, k),
        FFE_OPT("model", train.model, static_widths),
        FFE_OPT("model", train.model, edge_width),
        FFE_OPT("model", train.model, embed_dim),
        FFE_OPT("model", train.model, leaky_slope),
        FFE_OPT("model", train.model, use_descriptor),
        FFE_OPT("model", train.model, dropout),
        FFE_OPT("loss", train.loss, lambda_conf),
        FFE_OPT("loss", train.loss, lambda_smooth),
        FFE_OPT("loss", train.loss, lambda_div),
        FFE_OPT("loss", train.loss, smooth_k),
        FFE_OPT("loss", train.loss, div_k),
        FFE_OPT("loss", train.loss, splat_eps),
        FFE_OPT("loss", train.loss, grid_g),
        FFE_OPT("loss", train.loss, grid_margin),
        FFE_OPT("loss", train.loss, splat_mode),
        FFE_OPT("loss", train.loss, grid_placement),
        FFE_OPT("ot", train.ot, epsilon),
        FFE_OPT("ot", train.ot, lambda),
        FFE_OPT("ot", train.ot, train_iterations),
        FFE_OPT("ot", train.ot, inference_iterations),
        FFE_OPT("ot", train.ot, top_l),
        FFE_OPT("ot", train.ot, weight_mode),
        FFE_OPT("ot", train.ot, translation_step),
        FFE_OPT("train", train, batch_size),
        FFE_OPT("train", train, epochs),
        FFE_OPT("train", train, learning_rate),
        FFE_OPT("train", train, data_fraction),
        FFE_OPT("train", train, seed),
        FFE_OPT("train", train, threads),
        FFE_OPT("train", train, divergence_limit),
        FFE_OPT("dve", dve, steps),
        FFE_OPT("dve", dve, learning_rate),
        FFE_OPT("dve", dve, beta1),
        FFE_OPT("dve", dve, beta2),
        FFE_OPT("dve", dve, epsilon),
        FFE_OPT("bench", bench, cases),
        FFE_OPT("bench", bench, train_pairs),
        FFE_OPT("bench", bench, test_pairs),
        FFE_OPT("bench", bench, n),
        FFE_OPT("bench", bench, epochs),
    };
    return table;
}

#undef FFE_OPT

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

const Option* find(std::string_view section, std::string_view key) {
    for (const auto& o : options())
        if (o.section == section && o.key == key) return &o;
    return nullptr;
}

}  // namespace

void apply_config(RunConfig& cfg, std::istream& in, const std::string& name) {
    std::string line, section;
    std::size_t line_no = 0;
    const auto error = [&](const std::string& what) {
        fail(ErrorKind::Format, name + ": line " + std::to_string(line_no) + ": " + what);
    };
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view s = line;
        if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
        s = trim(s);
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') error("unterminated section header");
            section = std::string(trim(s.substr(1, s.size() - 2)));
            bool known = false;
            for (const auto& o : options()) known = known || o.section == section;
            if (!known) error("unknown section [" + section + "]");
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string_view::npos) error("expected key = value");
        if (section.empty()) error("key outside a section");
        const auto key = trim(s.substr(0, eq)), value = trim(s.substr(eq + 1));
        const Option* o = find(section, key);
        if (!o) error("unknown key '" + std::string(key) + "' in [" + section + "]");
        if (!o->set(cfg, value)) error("bad value '" + std::string(value) + "' for " + section + "." + std::string(key));
    }
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
    RunConfig cfg;
    apply_config(cfg, in, path.string());
    return cfg;
}

void set_option(RunConfig& cfg, const std::string& dotted_key, const std::string& value) {
    const auto dot = dotted_key.find('.');
    if (dot == std::string::npos) fail(ErrorKind::InvalidArgument, "option '" + dotted_key + "' must be section.key");
    const Option* o = find(std::string_view(dotted_key).substr(0, dot), std::string_view(dotted_key).substr(dot + 1));
    if (!o) fail(ErrorKind::InvalidArgument, "unknown option '" + dotted_key + "'");
    if (!o->set(cfg, trim(value))) fail(ErrorKind::InvalidArgument, "bad value '" + value + "' for " + dotted_key);
}

std::string to_config_text(const RunConfig& cfg) {
    std::ostringstream out;
    std::string section;
    for (const auto& o : options()) {
        if (o.section != section) {
            out << (section.empty() ? "" : "\n") << "[" << o.section << "]\n";
            section = o.section;
        }
        out << o.key << " = " << o.get(cfg) << "\n";
    }
    return out.str();
}

}  // namespace ffe::io
