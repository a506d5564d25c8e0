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

#include "ffe/core/frame.hpp"

#include <string>
#include <vector>

namespace ffe {

/// Absolute thresholds are in the flow's length unit.
struct MetricThresholds {
    double strict_abs = 0.05, strict_rel = 0.05;
    double relax_abs = 0.10, relax_rel = 0.10;
    double outlier_abs = 0.30, outlier_rel = 0.10;
};

struct MetricsReport {
    std::size_t n = 0;
    double epe = 0.0;
    double nepe = 0.0;
    double acc_strict = 0.0;
    double acc_relax = 0.0;
    double outliers = 0.0;
    /// Rows with a zero ground-truth vector; they have no relative error and
    /// are left out of the NEPE mean.
    std::size_t zero_gt = 0;

    /// `n=... epe=... ...` on one line.
    std::string to_key_value() const;
    /// One JSON object on one line.
    std::string to_json() const;
};

MetricsReport evaluate(const FlowField& pred, const FlowField& gt, const MetricThresholds& t = {});

struct NdsResult {
    std::vector<double> per_point;
    double mean = 0.0;
};

/// NDS_i = (1/k) sum over the k nearest other particles of |f_i - f_j|^2.
NdsResult nds(const ParticleFrame& x, const FlowField& f, std::size_t k = 8);

}  // namespace ffe
