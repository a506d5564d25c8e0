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

#include "ffe/core/frame.hpp"

#include "ffe/error.hpp"

#include <string>

namespace ffe {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid argument";
        case ErrorKind::NonFinite: return "non-finite value";
        case ErrorKind::Io: return "i/o error";
        case ErrorKind::Format: return "format error";
        case ErrorKind::State: return "invalid state";
        case ErrorKind::Diverged: return "diverged";
    }
    return "unknown";
}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

namespace {

void check_rows(std::span<const Vec3> rows, const char* what) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (double c : rows[i]) {
            if (!std::isfinite(c)) {
                fail(ErrorKind::NonFinite, std::string(what) + ": non-finite coordinate in row " + std::to_string(i));
            }
        }
    }
}

}  // namespace

ParticleFrame::ParticleFrame(std::vector<Vec3> positions) : positions_(std::move(positions)) {
    if (positions_.empty()) fail(ErrorKind::InvalidArgument, "particle frame must contain at least one particle");
    check_rows(positions_, "particle frame");
}

std::vector<double> ParticleFrame::flat() const {
    std::vector<double> out;
    out.reserve(positions_.size() * 3);
    for (const auto& p : positions_) out.insert(out.end(), p.begin(), p.end());
    return out;
}

FlowField::FlowField(std::vector<Vec3> vectors) : vectors_(std::move(vectors)) {
    check_rows(vectors_, "flow field");
}

FlowField FlowField::from_flat(std::span<const double> rowmajor) {
    require(rowmajor.size() % 3 == 0, "flow buffer length must be a multiple of 3");
    std::vector<Vec3> v(rowmajor.size() / 3);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = {rowmajor[3 * i], rowmajor[3 * i + 1], rowmajor[3 * i + 2]};
    return FlowField(std::move(v));
}

std::vector<double> FlowField::flat() const {
    std::vector<double> out;
    out.reserve(vectors_.size() * 3);
    for (const auto& p : vectors_) out.insert(out.end(), p.begin(), p.end());
    return out;
}

ParticleFrame advect(const ParticleFrame& frame, const FlowField& flow) {
    require(frame.size() == flow.size(), "advect: frame and flow row counts differ");
    std::vector<Vec3> out(frame.size());
    for (std::size_t i = 0; i < frame.size(); ++i) out[i] = frame[i] + flow[i];
    return ParticleFrame(std::move(out));
}

}  // namespace ffe
