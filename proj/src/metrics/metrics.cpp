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

#include "ffe/metrics/metrics.hpp"

#include "ffe/core/knn_graph.hpp"
#include "ffe/error.hpp"

#include <json.hpp>

#include <cstdio>
#include <string>

namespace ffe {

MetricsReport evaluate(const FlowField& pred, const FlowField& gt, const MetricThresholds& t) {
    if (pred.size() != gt.size())
        fail(ErrorKind::InvalidArgument, "evaluate: prediction has " + std::to_string(pred.size()) +
                                             " rows, ground truth has " + std::to_string(gt.size()));
    require(pred.size() >= 1, "evaluate: empty flow");
    MetricsReport r;
    r.n = pred.size();
    double epe = 0.0, nepe = 0.0;
    std::size_t strict = 0, relax = 0, out = 0, rel_count = 0;
    for (std::size_t i = 0; i < r.n; ++i) {
        const double e = norm(pred[i] - gt[i]);
        const double g = norm(gt[i]);
        epe += e;
        bool s = e < t.strict_abs, rx = e < t.relax_abs, o = e > t.outlier_abs;
        if (g > 0.0) {
            const double rel = e / g;
            nepe += rel;
            ++rel_count;
            s = s || rel < t.strict_rel;
            rx = rx || rel < t.relax_rel;
            o = o || rel > t.outlier_rel;
        } else {
            ++r.zero_gt;
        }
        strict += s;
        relax += rx;
        out += o;
    }
    const double n = double(r.n);
    r.epe = epe / n;
    r.nepe = rel_count ? nepe / double(rel_count) : 0.0;
    r.acc_strict = double(strict) / n;
    r.acc_relax = double(relax) / n;
    r.outliers = double(out) / n;
    return r;
}

std::string MetricsReport::to_key_value() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "n=%zu epe=%.17g nepe=%.17g acc_strict=%.17g acc_relax=%.17g outliers=%.17g zero_gt=%zu",
                  n, epe, nepe, acc_strict, acc_relax, outliers, zero_gt);
    return buf;
}

std::string MetricsReport::to_json() const {
    nlohmann::json j = {{"n", n},
                        {"epe", epe},
                        {"nepe", nepe},
                        {"acc_strict", acc_strict},
                        {"acc_relax", acc_relax},
                        {"outliers", outliers},
                        {"zero_gt", zero_gt}};
    return j.dump();
}

NdsResult nds(const ParticleFrame& x, const FlowField& f, std::size_t k) {
    require(k >= 1, "nds: k must be >= 1");
    if (x.size() < 2) fail(ErrorKind::InvalidArgument, "nds: needs at least 2 particles");
    require(f.size() == x.size(), "nds: flow and frame sizes differ");
    const KnnGraph g = position_graph(x, k);
    NdsResult r;
    r.per_point.resize(x.size());
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < g.k; ++j) s += squared_distance(f[i], f[g.neighbors[i * g.k + j]]);
        r.per_point[i] = s / double(g.k);
        total += r.per_point[i];
    }
    r.mean = total / double(x.size());
    return r;
}

}  // namespace ffe
