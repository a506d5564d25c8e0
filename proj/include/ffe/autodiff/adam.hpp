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

#include "ffe/autodiff/tape.hpp"

#include <cmath>
#include <cstddef>
#include <vector>

namespace ffe::ad {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Bias-corrected Adam over a fixed list of tensors.
class Adam {
public:
    Adam(AdamConfig cfg, const std::vector<Matrix>& shapes) : cfg_(cfg) {
        for (const auto& s : shapes) {
            m_.emplace_back(s.rows, s.cols, 0.0);
            v_.emplace_back(s.rows, s.cols, 0.0);
        }
    }

    void step(std::vector<Matrix>& params, const std::vector<Matrix>& grads) {
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
        for (std::size_t p = 0; p < params.size(); ++p) {
            auto& x = params[p].data;
            const auto& g = grads[p].data;
            auto& m = m_[p].data;
            auto& v = v_[p].data;
            for (std::size_t i = 0; i < x.size(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                x[i] -= cfg_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.epsilon);
            }
        }
    }

    std::size_t steps() const noexcept { return t_; }

private:
    AdamConfig cfg_;
    std::vector<Matrix> m_, v_;
    std::size_t t_ = 0;
};

}  // namespace ffe::ad
