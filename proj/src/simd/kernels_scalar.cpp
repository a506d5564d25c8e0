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

// Reference kernels. Straight loops, fixed accumulation order.

#include "ffe/simd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ffe::simd {

namespace {

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            const double* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot(a + i * k, b + j * k, k);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* ap = a + p * m;
        const double* bp = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double api = ap[i];
            double* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
        }
    }
}

void vexp(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(x[i]);
}

void sq_dists(const double* q, const double* p, std::size_t m, std::size_t d, double* out) {
    for (std::size_t j = 0; j < m; ++j) {
        const double* pj = p + j * d;
        double s = 0.0;
        for (std::size_t a = 0; a < d; ++a) {
            const double t = q[a] - pj[a];
            s += t * t;
        }
        out[j] = s;
    }
}

double lse_plus(const double* x, const double* u, std::size_t n) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, x[j] + u[j]);
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(x[j] + u[j] - mx);
    return mx + std::log(s);
}

void exp_accumulate(const double* x, double c, const double* u, double* acc, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) acc[j] += std::exp(x[j] + c + u[j]);
}

void exp_scaled_scatter(const double* x, double c, const double* u, double g, double* dx, double* du,
                        std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
        const double w = g * std::exp(x[j] + c + u[j]);
        dx[j] += w;
        du[j] += w;
    }
}

double exp_weighted_scatter(const double* x, double c, const double* u, const double* g, double* dx,
                            std::size_t n) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double w = g[j] * std::exp(x[j] + c + u[j]);
        dx[j] += w;
        s += w;
    }
    return s;
}

}  // namespace

const KernelTable& scalar_kernels() {
    static const KernelTable table{
        "scalar", dot, axpy, gemm_nn, gemm_nt, gemm_tn, vexp, sq_dists, lse_plus,
        exp_accumulate, exp_scaled_scatter, exp_weighted_scatter,
    };
    return table;
}

}  // namespace ffe::simd
