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

// Frame-pair files and key=value configuration.
//
// A frame record is either text
//
//     # ffp v1 n=<n> has_gt=<0|1>
//     x y z [fx fy fz]          (n lines)
//
// or binary: "FFP1", u64 n, u8 has_gt, n*3 doubles, [n*3 doubles], all
// little-endian. A pair file is the source record followed by the target
// record (which never carries flow). Text pair files may add a
// `# case=<name> seed=<s> units=<u>` line after the first header; binary
// pair files may end with "META", u32 length, and the same text.

#include "ffe/bench/bench.hpp"
#include "ffe/core/frame.hpp"
#include "ffe/dve/dve.hpp"
#include "ffe/trainer/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace ffe::io {

enum class FileFormat { Text, Binary };

/// Binary for a ".ffpb" extension, text otherwise.
FileFormat format_for(const std::filesystem::path& path);

struct PairMetadata {
    std::string case_name;
    std::uint64_t seed = 0;
    std::string units = "m";

    friend bool operator==(const PairMetadata&, const PairMetadata&) = default;
};

struct FrameRecord {
    ParticleFrame positions;
    std::optional<FlowField> flow;
};

struct FramePairRecord {
    ParticleFrame source;
    ParticleFrame target;
    /// Row-aligned with source.
    std::optional<FlowField> flow;
    PairMetadata metadata;
};

void save_frame(const FrameRecord& record, const std::filesystem::path& path);
void save_frame(const FrameRecord& record, const std::filesystem::path& path, FileFormat format);
/// Detects the format from the leading magic.
FrameRecord load_frame(const std::filesystem::path& path);

void save_pair(const FramePairRecord& record, const std::filesystem::path& path);
void save_pair(const FramePairRecord& record, const std::filesystem::path& path, FileFormat format);
FramePairRecord load_pair(const std::filesystem::path& path);

// Stream forms, used by the file functions and the tests.
void write_text(std::ostream& out, const FramePairRecord& record);
FramePairRecord read_text(std::istream& in, const std::string& name);
void write_binary(std::ostream& out, const FramePairRecord& record);
FramePairRecord read_binary(std::istream& in, const std::string& name);

/// Everything a config file can set.
struct RunConfig {
    TrainConfig train;
    DveConfig dve;
    BenchmarkConfig bench;
};

/// Flat `key = value` lines grouped under `[model]`, `[loss]`, `[ot]`,
/// `[train]`, `[dve]` and `[bench]` headers; `#` starts a comment. Unknown sections,
/// unknown keys and unparsable values are Format errors naming the line.
void apply_config(RunConfig& cfg, std::istream& in, const std::string& name);
RunConfig load_config(const std::filesystem::path& path);
/// Sets one `section.key` value, as a command-line override would.
void set_option(RunConfig& cfg, const std::string& dotted_key, const std::string& value);
/// Text that apply_config reads back to the same values.
std::string to_config_text(const RunConfig& cfg);

}  // namespace ffe::io
