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

#include "ffe/features/model.hpp"

#include "ffe/core/random.hpp"
#include "ffe/core/spatial_index.hpp"
#include "ffe/error.hpp"
#include "ffe/simd/kernels.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <string>

namespace ffe {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

using ad::IndexList;
using ad::Matrix;
using ad::Tape;
using ad::Var;

void ModelConfig::validate() const {
    require(k >= 1, "model: k must be >= 1");
    require(!static_widths.empty(), "model: at least one static layer is required");
    for (std::size_t w : static_widths) require(w >= 1, "model: layer widths must be >= 1");
    require(embed_dim >= 1, "model: embed_dim must be >= 1");
    require(std::isfinite(leaky_slope), "model: leaky_slope must be finite");
    require(dropout >= 0.0 && dropout < 1.0, "model: dropout must be in [0, 1)");
}

Matrix geometric_descriptor(const ParticleFrame& frame) {
    Matrix d(frame.size(), 6);
    for (std::size_t i = 0; i < frame.size(); ++i) {
        const Vec3& p = frame[i];
        const double r = norm(p);
        double* row = d.row(i);
        row[0] = p[0];
        row[1] = p[1];
        row[2] = p[2];
        row[3] = r;
        if (r > 0.0) {
            row[4] = std::atan2(p[1], p[0]);
            row[5] = std::acos(std::clamp(p[2] / r, -1.0, 1.0));
        }
        // atan2 returns -pi for (-x, -0.0); fold it onto the half-open range.
        if (row[4] == -std::numbers::pi) row[4] = std::numbers::pi;
    }
    return d;
}

Var edge_aggregate(const Var& center, const Var& features, const KnnGraph& graph, const EdgeLayer& layer,
                   double slope) {
    if (features.rows() != graph.n)
        fail(ErrorKind::InvalidArgument, "edge_aggregate: features have " + std::to_string(features.rows()) +
                                             " rows, graph has " + std::to_string(graph.n));
    if (features.cols() != layer.w_diff.rows())
        fail(ErrorKind::InvalidArgument, "edge_aggregate: feature width " + std::to_string(features.cols()) +
                                             " does not match layer input " + std::to_string(layer.w_diff.rows()));
    // mlp first layer on (c_i, F_j - F_i) splits into A_i + B_j - B_i.
    const Var b = ad::matmul(features, layer.w_diff);
    Var p = ad::scale(b, -1.0);
    if (layer.w_center.valid()) {
        if (!center.valid() || center.cols() != layer.w_center.rows() || center.rows() != graph.n)
            fail(ErrorKind::InvalidArgument, "edge_aggregate: center input does not match layer");
        p = ad::add(ad::matmul(center, layer.w_center), p);
    }
    p = ad::add_row(p, layer.b1);
    return ad::edge_mlp_max(b, p, graph.neighbors, graph.k, layer.w2, layer.b2, slope);
}

Var geoset_conv(const Var& features, const Var& descriptor, const KnnGraph& graph, const EdgeLayer& layer,
                double slope) {
    return edge_aggregate(descriptor, features, graph, layer, slope);
}

Var edge_conv(const Var& features, std::size_t k, const EdgeLayer& layer, double slope) {
    const KnnGraph graph = feature_graph(features.value(), k);
    return edge_aggregate(features, features, graph, layer, slope);
}

// ============================================================================
// parameters
// ============================================================================

std::vector<std::pair<std::size_t, std::size_t>> ModelParams::layout(const ModelConfig& c) {
    c.validate();
    std::vector<std::pair<std::size_t, std::size_t>> shapes;
    std::size_t in = 3, concat = 0;
    for (std::size_t w : c.static_widths) {
        if (c.use_descriptor) shapes.emplace_back(6, w);
        shapes.emplace_back(in, w);
        shapes.emplace_back(1, w);
        shapes.emplace_back(w, w);
        shapes.emplace_back(1, w);
        in = w;
        concat += w;
    }
    if (c.edge_width > 0) {
        shapes.emplace_back(in, c.edge_width);
        shapes.emplace_back(in, c.edge_width);
        shapes.emplace_back(1, c.edge_width);
        shapes.emplace_back(c.edge_width, c.edge_width);
        shapes.emplace_back(1, c.edge_width);
        concat += c.edge_width;
    }
    shapes.emplace_back(concat, c.embed_dim);
    shapes.emplace_back(1, c.embed_dim);
    return shapes;
}

ModelParams ModelParams::initialize(const ModelConfig& config, std::uint64_t seed) {
    ModelParams p;
    p.config = config;
    std::mt19937_64 rng(seed);
    for (auto [r, c] : layout(config)) {
        Matrix m(r, c);
        if (r > 1) {
            const double bound = 1.0 / std::sqrt(double(r));
            for (auto& x : m.data) x = bound * (2.0 * unit_uniform(rng) - 1.0);
        }
        p.tensors.push_back(std::move(m));
    }
    return p;
}

namespace {

constexpr char kMagic[4] = {'F', 'F', 'E', '1'};

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& is, const std::string& what) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) fail(ErrorKind::Format, "checkpoint: truncated while reading " + what);
    return v;
}

}  // namespace

void ModelParams::save(const std::filesystem::path& path) const {
    const auto shapes = layout(config);
    require(shapes.size() == tensors.size(), "checkpoint: tensor count does not match the config");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorKind::Io, "checkpoint: cannot open " + path.string() + " for writing");
    os.write(kMagic, 4);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(config.k));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(config.static_widths.size()));
    for (std::size_t w : config.static_widths) put<std::uint32_t>(os, static_cast<std::uint32_t>(w));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(config.edge_width));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(config.embed_dim));
    put<double>(os, config.leaky_slope);
    put<std::uint8_t>(os, config.use_descriptor ? 1 : 0);
    put<double>(os, config.dropout);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        put<std::uint64_t>(os, t.rows);
        put<std::uint64_t>(os, t.cols);
    }
    for (const auto& t : tensors)
        os.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!os) fail(ErrorKind::Io, "checkpoint: write failed for " + path.string());
}

ModelParams ModelParams::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorKind::Io, "checkpoint: cannot open " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) fail(ErrorKind::Format, "checkpoint: bad magic in " + path.string());

    ModelParams p;
    ModelConfig& c = p.config;
    c.k = get<std::uint32_t>(is, "k");
    const auto layers = get<std::uint32_t>(is, "layer count");
    if (layers == 0 || layers > 64) fail(ErrorKind::Format, "checkpoint: implausible layer count " + std::to_string(layers));
    c.static_widths.clear();
    for (std::uint32_t i = 0; i < layers; ++i) c.static_widths.push_back(get<std::uint32_t>(is, "layer width"));
    c.edge_width = get<std::uint32_t>(is, "edge width");
    c.embed_dim = get<std::uint32_t>(is, "embed dim");
    c.leaky_slope = get<double>(is, "slope");
    c.use_descriptor = get<std::uint8_t>(is, "descriptor flag") != 0;
    c.dropout = get<double>(is, "dropout");
    try {
        c.validate();
    } catch (const Error& e) {
        fail(ErrorKind::Format, std::string("checkpoint: invalid config: ") + e.what());
    }

    const auto shapes = layout(c);
    const auto count = get<std::uint32_t>(is, "tensor count");
    if (count != shapes.size())
        fail(ErrorKind::Format, "checkpoint: expected " + std::to_string(shapes.size()) + " tensors, found " +
                                    std::to_string(count));
    for (std::size_t i = 0; i < count; ++i) {
        const auto r = get<std::uint64_t>(is, "tensor shape");
        const auto cols = get<std::uint64_t>(is, "tensor shape");
        if (r != shapes[i].first || cols != shapes[i].second)
            fail(ErrorKind::Format, "checkpoint: tensor " + std::to_string(i) + " has the wrong shape");
        p.tensors.emplace_back(r, cols);
    }
    for (std::size_t i = 0; i < count; ++i) {
        auto& t = p.tensors[i];
        is.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!is) fail(ErrorKind::Format, "checkpoint: truncated payload in tensor " + std::to_string(i));
        for (double x : t.data)
            if (!std::isfinite(x)) fail(ErrorKind::NonFinite, "checkpoint: non-finite value in tensor " + std::to_string(i));
    }
    return p;
}

// ============================================================================
// forward
// ============================================================================

FrameInputs prepare_frame(const ParticleFrame& frame, const ModelConfig& config) {
    FrameInputs in;
    in.positions = Matrix(frame.size(), 3, frame.flat());
    in.descriptor = geometric_descriptor(frame);
    in.graph = position_graph(frame, config.k);
    return in;
}

Var extract_features(Tape& tape, const FrameInputs& inputs, const ModelConfig& config, std::span<const Var> params,
                     const ForwardOptions& options) {
    const auto shapes = ModelParams::layout(config);
    if (params.size() != shapes.size())
        fail(ErrorKind::InvalidArgument, "extract_features: expected " + std::to_string(shapes.size()) +
                                             " parameter tensors, got " + std::to_string(params.size()));
    std::size_t next = 0;
    auto take_layer = [&](bool with_center) {
        EdgeLayer l;
        if (with_center) l.w_center = params[next++];
        l.w_diff = params[next++];
        l.b1 = params[next++];
        l.w2 = params[next++];
        l.b2 = params[next++];
        return l;
    };

    const Var descriptor = tape.constant(inputs.descriptor);
    Var f = tape.constant(inputs.positions);
    std::vector<Var> hierarchy;
    for (std::size_t l = 0; l < config.static_widths.size(); ++l) {
        const EdgeLayer layer = take_layer(config.use_descriptor);
        f = geoset_conv(f, config.use_descriptor ? descriptor : Var{}, inputs.graph, layer, config.leaky_slope);
        hierarchy.push_back(f);
    }
    if (config.edge_width > 0) {
        const EdgeLayer layer = take_layer(true);
        hierarchy.push_back(edge_conv(f, config.k, layer, config.leaky_slope));
    }
    Var all = ad::concat_cols(hierarchy);
    if (options.dropout_rng && config.dropout > 0.0) {
        Matrix mask(all.rows(), all.cols());
        const double s = 1.0 / (1.0 - config.dropout);
        for (auto& m : mask.data) m = unit_uniform(*options.dropout_rng) < config.dropout ? 0.0 : s;
        all = ad::mul(all, tape.constant(std::move(mask)));
    }
    const Var w = params[next++];
    const Var b = params[next++];
    return ad::add_row(ad::matmul(all, w), b);
}

Matrix extract_features(const ParticleFrame& frame, const ModelParams& params) {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : params.tensors) vars.push_back(tape.constant(t));
    const FrameInputs in = prepare_frame(frame, params.config);
    return extract_features(tape, in, params.config, vars).value();
}

}  // namespace ffe
