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

// Dense double-precision inner loops used by the autodiff ops, the
// transport solver and the feature-space neighbour search.
//
// Every kernel has a portable scalar reference and, on x86-64, an AVX2+FMA
// variant. The active table is chosen once at first use from CPUID; setting
// FFE_SIMD=scalar in the environment forces the reference path. All matrices
// are row-major and densely packed.

#include <cstddef>
#include <string_view>

namespace ffe::simd {

struct KernelTable {
    const char* name;

    double (*dot)(const double* a, const double* b, std::size_t n);
    /// y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

    /// C[m x n] += A[m x k] * B[k x n]
    void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
    /// C[m x n] += A[m x k] * B[n x k]^T
    void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
    /// C[m x n] += A[k x m]^T * B[k x n]
    void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);

    /// y[i] = exp(x[i]); in-place allowed.
    void (*exp)(const double* x, double* y, std::size_t n);

    /// out[j] = || q - P[j, :] ||^2 for j < m; P is m x d.
    void (*sq_dists)(const double* q, const double* p, std::size_t m, std::size_t d, double* out);

    /// log sum_j exp(x[j] + u[j]), max-shifted. Returns -inf for n == 0.
    double (*lse_plus)(const double* x, const double* u, std::size_t n);

    /// acc[j] += exp(x[j] + c + u[j])
    void (*exp_accumulate)(const double* x, double c, const double* u, double* acc, std::size_t n);

    /// w[j] = g * exp(x[j] + c + u[j]); dx[j] += w[j]; du[j] += w[j]
    void (*exp_scaled_scatter)(const double* x, double c, const double* u, double g, double* dx, double* du,
                               std::size_t n);

    /// w[j] = g[j] * exp(x[j] + c + u[j]); dx[j] += w[j]; returns sum_j w[j]
    double (*exp_weighted_scatter)(const double* x, double c, const double* u, const double* g, double* dx,
                                   std::size_t n);
};

const KernelTable& scalar_kernels();

/// nullptr when the AVX2 path was not compiled in or the CPU lacks AVX2/FMA.
const KernelTable* avx2_kernels();

/// The table used by the library.
const KernelTable& active();

enum class Backend { Auto, Scalar, Avx2 };

/// Overrides the automatic choice (tests and benchmarks). Returns false if
/// the requested backend is unavailable on this machine.
bool select(Backend backend);

std::string_view active_name();

}  // namespace ffe::simd
