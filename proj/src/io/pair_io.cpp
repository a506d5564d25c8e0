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

#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string_view>
#include <vector>

namespace ffe::io {

static_assert(std::endian::native == std::endian::little, "binary frame I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'F', 'F', 'P', '1'};
constexpr char kMeta[4] = {'M', 'E', 'T', 'A'};

[[noreturn]] void format_error(const std::string& name, const std::string& what) {
    fail(ErrorKind::Format, name + ": " + what);
}

std::vector<std::string_view> split(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        const std::size_t j = i;
        while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        if (i > j) out.push_back(s.substr(j, i - j));
    }
    return out;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && p == s.data() + s.size();
}

// ---- text -----------------------------------------------------------------

struct LineReader {
    std::istream& in;
    const std::string& name;
    std::size_t line_no = 0;
    std::string line{};
    bool held = false;

    bool next() {
        if (held) {
            held = false;
            return true;
        }
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (split(line).empty()) continue;
            return true;
        }
        return false;
    }
    [[noreturn]] void error(const std::string& what) const {
        format_error(name, "line " + std::to_string(line_no) + ": " + what);
    }
};

struct Header {
    std::size_t n = 0;
    bool has_gt = false;
};

bool is_header(std::string_view line) {
    const auto t = split(line);
    return t.size() >= 2 && t[0] == "#" && t[1] == "ffp";
}

Header parse_header(LineReader& r) {
    const auto t = split(r.line);
    if (t.size() != 5 || t[0] != "#" || t[1] != "ffp")
        r.error("expected header '# ffp v1 n=<n> has_gt=<0|1>', got '" + r.line + "'");
    if (t[2] != "v1") r.error("unsupported version '" + std::string(t[2]) + "'");
    Header h;
    if (!t[3].starts_with("n=") || !parse_number(t[3].substr(2), h.n) || h.n == 0)
        r.error("bad particle count '" + std::string(t[3]) + "'");
    if (t[4] == "has_gt=1") h.has_gt = true;
    else if (t[4] != "has_gt=0") r.error("bad has_gt field '" + std::string(t[4]) + "'");
    return h;
}

PairMetadata parse_metadata(LineReader& r) {
    PairMetadata m;
    const auto t = split(r.line);
    for (std::size_t i = 1; i < t.size(); ++i) {
        const auto eq = t[i].find('=');
        if (eq == std::string_view::npos) r.error("bad metadata field '" + std::string(t[i]) + "'");
        const auto key = t[i].substr(0, eq), value = t[i].substr(eq + 1);
        if (key == "case") m.case_name = value;
        else if (key == "units") m.units = value;
        else if (key == "seed") {
            if (!parse_number(value, m.seed)) r.error("bad seed '" + std::string(value) + "'");
        } else r.error("unknown metadata key '" + std::string(key) + "'");
    }
    return m;
}

FrameRecord read_text_record(LineReader& r, const Header& h) {
    std::vector<Vec3> pos(h.n), flow(h.has_gt ? h.n : 0);
    const std::size_t width = h.has_gt ? 6 : 3;
    for (std::size_t row = 0; row < h.n; ++row) {
        if (!r.next()) format_error(r.name, "expected " + std::to_string(h.n) + " rows, found " + std::to_string(row));
        if (is_header(r.line) || r.line.starts_with('#'))
            r.error("expected " + std::to_string(h.n) + " rows, found " + std::to_string(row));
        const auto t = split(r.line);
        if (t.size() != width)
            r.error("row " + std::to_string(row) + " has " + std::to_string(t.size()) + " values, expected " +
                    std::to_string(width));
        double v[6];
        for (std::size_t c = 0; c < width; ++c) {
            if (!parse_number(t[c], v[c])) r.error("row " + std::to_string(row) + ": cannot parse '" + std::string(t[c]) + "'");
            if (!std::isfinite(v[c]))
                fail(ErrorKind::NonFinite,
                     r.name + ": line " + std::to_string(r.line_no) + ": row " + std::to_string(row) + " is not finite");
        }
        pos[row] = {v[0], v[1], v[2]};
        if (h.has_gt) flow[row] = {v[3], v[4], v[5]};
    }
    FrameRecord rec{ParticleFrame(std::move(pos)), std::nullopt};
    if (h.has_gt) rec.flow = FlowField(std::move(flow));
    return rec;
}

void write_text_record(std::ostream& out, const ParticleFrame& x, const FlowField* f, const PairMetadata* meta) {
    char buf[160];
    out << "# ffp v1 n=" << x.size() << " has_gt=" << (f ? 1 : 0) << "\n";
    if (meta) out << "# case=" << meta->case_name << " seed=" << meta->seed << " units=" << meta->units << "\n";
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Vec3& p = x[i];
        int len = std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g", p[0], p[1], p[2]);
        out.write(buf, len);
        if (f) {
            const Vec3& v = (*f)[i];
            len = std::snprintf(buf, sizeof buf, " %.17g %.17g %.17g", v[0], v[1], v[2]);
            out.write(buf, len);
        }
        out << "\n";
    }
}

// ---- binary ---------------------------------------------------------------

struct ByteReader {
    std::istream& in;
    const std::string& name;
    std::uint64_t offset = 0;

    void read(void* dst, std::size_t bytes) {
        in.read(static_cast<char*>(dst), static_cast<std::streamsize>(bytes));
        const auto got = static_cast<std::size_t>(in.gcount());
        if (got != bytes)
            format_error(name, "truncated at offset " + std::to_string(offset) + ": expected " + std::to_string(bytes) +
                                   " bytes, got " + std::to_string(got));
        offset += bytes;
    }
    bool at_end() { return in.peek() == std::char_traits<char>::eof(); }
};

std::vector<Vec3> read_block(ByteReader& r, std::size_t n, const char* what) {
    std::vector<double> raw(3 * n);
    const std::uint64_t start = r.offset;
    r.read(raw.data(), raw.size() * sizeof(double));
    std::vector<Vec3> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = {raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]};
        for (double v : out[i])
            if (!std::isfinite(v))
                fail(ErrorKind::NonFinite, r.name + ": " + what + " row " + std::to_string(i) + " at offset " +
                                               std::to_string(start + 24 * i) + " is not finite");
    }
    return out;
}

FrameRecord read_binary_record(ByteReader& r) {
    char magic[4];
    r.read(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        format_error(r.name, "bad magic at offset " + std::to_string(r.offset - 4));
    std::uint64_t n = 0;
    std::uint8_t has_gt = 0;
    r.read(&n, 8);
    r.read(&has_gt, 1);
    if (n == 0) format_error(r.name, "record at offset " + std::to_string(r.offset - 13) + " has n=0");
    if (has_gt > 1) format_error(r.name, "bad has_gt flag " + std::to_string(has_gt));
    // Guard the allocation against a corrupt count before reading the payload.
    const std::uint64_t payload = n * 24 * (has_gt ? 2 : 1);
    if (n > (std::uint64_t(1) << 40)) format_error(r.name, "implausible particle count " + std::to_string(n));
    const auto here = r.in.tellg();
    if (here != std::streampos(-1)) {
        r.in.seekg(0, std::ios::end);
        const auto end = r.in.tellg();
        r.in.seekg(here);
        const auto avail = static_cast<std::uint64_t>(end - here);
        if (avail < payload)
            format_error(r.name, "truncated at offset " + std::to_string(r.offset) + ": expected " +
                                     std::to_string(payload) + " bytes, got " + std::to_string(avail));
    }
    FrameRecord rec{ParticleFrame(read_block(r, n, "position")), std::nullopt};
    if (has_gt) rec.flow = FlowField(read_block(r, n, "flow"));
    return rec;
}

void write_binary_record(std::ostream& out, const ParticleFrame& x, const FlowField* f) {
    out.write(kMagic, 4);
    const std::uint64_t n = x.size();
    const std::uint8_t has_gt = f ? 1 : 0;
    out.write(reinterpret_cast<const char*>(&n), 8);
    out.write(reinterpret_cast<const char*>(&has_gt), 1);
    const auto xs = x.flat();
    out.write(reinterpret_cast<const char*>(xs.data()), static_cast<std::streamsize>(xs.size() * sizeof(double)));
    if (f) {
        const auto fs = f->flat();
        out.write(reinterpret_cast<const char*>(fs.data()), static_cast<std::streamsize>(fs.size() * sizeof(double)));
    }
}

std::string metadata_text(const PairMetadata& m) {
    return "case=" + m.case_name + " seed=" + std::to_string(m.seed) + " units=" + m.units;
}

void check_pair(const FramePairRecord& r) {
    if (r.flow && r.flow->size() != r.source.size())
        fail(ErrorKind::InvalidArgument, "pair: flow has " + std::to_string(r.flow->size()) + " rows, source has " +
                                             std::to_string(r.source.size()));
    for (const auto* s : {&r.metadata.case_name, &r.metadata.units})
        for (char c : *s)
            if (std::isspace(static_cast<unsigned char>(c)) || c == '=')
                fail(ErrorKind::InvalidArgument, "pair: metadata values may not contain spaces or '='");
}

bool has_magic(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    char m[4] = {};
    in.read(m, 4);
    return in.gcount() == 4 && std::memcmp(m, kMagic, 4) == 0;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
    return in;
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

}  // namespace

FileFormat format_for(const std::filesystem::path& path) {
    return path.extension() == ".ffpb" ? FileFormat::Binary : FileFormat::Text;
}

void write_text(std::ostream& out, const FramePairRecord& record) {
    check_pair(record);
    write_text_record(out, record.source, record.flow ? &*record.flow : nullptr, &record.metadata);
    write_text_record(out, record.target, nullptr, nullptr);
}

FramePairRecord read_text(std::istream& in, const std::string& name) {
    LineReader r{in, name};
    if (!r.next()) format_error(name, "empty file");
    const Header hs = parse_header(r);
    PairMetadata meta;
    if (!r.next()) format_error(name, "missing source rows");
    if (r.line.starts_with("# ") && !is_header(r.line)) meta = parse_metadata(r);
    else r.held = true;
    FrameRecord src = read_text_record(r, hs);
    if (!r.next()) format_error(name, "missing target record");
    const Header ht = parse_header(r);
    if (ht.has_gt) r.error("target record must not carry flow");
    FrameRecord tgt = read_text_record(r, ht);
    if (r.next()) r.error("unexpected content after target record");
    return {std::move(src.positions), std::move(tgt.positions), std::move(src.flow), std::move(meta)};
}

void write_binary(std::ostream& out, const FramePairRecord& record) {
    check_pair(record);
    write_binary_record(out, record.source, record.flow ? &*record.flow : nullptr);
    write_binary_record(out, record.target, nullptr);
    const std::string meta = metadata_text(record.metadata);
    const auto len = static_cast<std::uint32_t>(meta.size());
    out.write(kMeta, 4);
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(meta.data(), len);
}

FramePairRecord read_binary(std::istream& in, const std::string& name) {
    ByteReader r{in, name};
    FrameRecord src = read_binary_record(r);
    FrameRecord tgt = read_binary_record(r);
    if (tgt.flow) format_error(name, "target record must not carry flow");
    PairMetadata meta;
    if (!r.at_end()) {
        char tag[4];
        r.read(tag, 4);
        if (std::memcmp(tag, kMeta, 4) != 0) format_error(name, "unexpected bytes at offset " + std::to_string(r.offset - 4));
        std::uint32_t len = 0;
        r.read(&len, 4);
        std::string text(len, '\0');
        r.read(text.data(), len);
        std::istringstream line("# " + text);
        LineReader lr{line, name};
        lr.next();
        meta = parse_metadata(lr);
        if (!r.at_end()) format_error(name, "unexpected bytes at offset " + std::to_string(r.offset));
    }
    return {std::move(src.positions), std::move(tgt.positions), std::move(src.flow), std::move(meta)};
}

void save_pair(const FramePairRecord& record, const std::filesystem::path& path) {
    save_pair(record, path, format_for(path));
}

void save_pair(const FramePairRecord& record, const std::filesystem::path& path, FileFormat format) {
    std::ostringstream buf;
    if (format == FileFormat::Binary) write_binary(buf, record);
    else write_text(buf, record);
    write_file(path, buf.str());
}

FramePairRecord load_pair(const std::filesystem::path& path) {
    const bool binary = has_magic(path);
    auto in = open_in(path);
    return binary ? read_binary(in, path.string()) : read_text(in, path.string());
}

void save_frame(const FrameRecord& record, const std::filesystem::path& path) {
    save_frame(record, path, format_for(path));
}

void save_frame(const FrameRecord& record, const std::filesystem::path& path, FileFormat format) {
    if (record.flow && record.flow->size() != record.positions.size())
        fail(ErrorKind::InvalidArgument, "frame: flow rows do not match positions");
    std::ostringstream buf;
    const FlowField* f = record.flow ? &*record.flow : nullptr;
    if (format == FileFormat::Binary) write_binary_record(buf, record.positions, f);
    else write_text_record(buf, record.positions, f, nullptr);
    write_file(path, buf.str());
}

FrameRecord load_frame(const std::filesystem::path& path) {
    const bool binary = has_magic(path);
    auto in = open_in(path);
    const std::string name = path.string();
    FrameRecord rec;
    if (binary) {
        ByteReader r{in, name};
        rec = read_binary_record(r);
        if (!r.at_end()) format_error(name, "unexpected bytes at offset " + std::to_string(r.offset));
    } else {
        LineReader r{in, name};
        if (!r.next()) format_error(name, "empty file");
        const Header h = parse_header(r);
        rec = read_text_record(r, h);
        if (r.next()) r.error("unexpected content after record");
    }
    return rec;
}

}  // namespace ffe::io
