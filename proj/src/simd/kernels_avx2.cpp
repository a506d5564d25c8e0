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

// AVX2 + FMA kernels. This translation unit is built with -mavx2 -mfma and
// must only be entered after the dispatcher has checked CPUID.

#include "ffe/simd/kernels.hpp"

#if defined(FFE_HAVE_AVX2)

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace ffe::simd {

namespace {

// ============================================================================
// helpers
// ============================================================================

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

inline double hmax(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_max_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_max_sd(lo, sh));
}

// exp(x) for 4 lanes: Cody-Waite reduction to |r| <= ln2/2, degree-13
// Taylor polynomial, exponent-field scaling. Below -708 flushes to zero,
// above 709 saturates to +inf, NaN propagates.
inline __m256d exp4(__m256d x) {
    const __m256d hi_clamp = _mm256_set1_pd(709.0);
    const __m256d lo_clamp = _mm256_set1_pd(-708.0);
    const __m256d log2e = _mm256_set1_pd(1.4426950408889634);
    const __m256d ln2_hi = _mm256_set1_pd(6.93145751953125e-1);
    const __m256d ln2_lo = _mm256_set1_pd(1.42860682030941723212e-6);
    const __m256d magic = _mm256_set1_pd(6755399441055744.0);  // 1.5 * 2^52

    const __m256d under = _mm256_cmp_pd(x, lo_clamp, _CMP_LT_OQ);
    const __m256d over = _mm256_cmp_pd(x, hi_clamp, _CMP_GT_OQ);
    __m256d xc = _mm256_min_pd(hi_clamp, x);  // NaN in x survives (second operand)
    xc = _mm256_max_pd(lo_clamp, xc);

    const __m256d n = _mm256_round_pd(_mm256_mul_pd(xc, log2e), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(n, ln2_hi, xc);
    r = _mm256_fnmadd_pd(n, ln2_lo, r);

    __m256d p = _mm256_set1_pd(1.0 / 6227020800.0);                    // 1/13!
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 479001600.0));      // 1/12!
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 39916800.0));       // 1/11!
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 3628800.0));        // 1/10!
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 362880.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 40320.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 5040.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 720.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 120.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 24.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 6.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.5));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

    // 2^n via the exponent field; n in [-1022, 1023] after clamping.
    __m256i bits = _mm256_sub_epi64(_mm256_castpd_si256(_mm256_add_pd(n, magic)), _mm256_castpd_si256(magic));
    bits = _mm256_slli_epi64(_mm256_add_epi64(bits, _mm256_set1_epi64x(1023)), 52);
    __m256d result = _mm256_mul_pd(p, _mm256_castsi256_pd(bits));

    result = _mm256_blendv_pd(result, _mm256_setzero_pd(), under);
    result = _mm256_blendv_pd(result, _mm256_set1_pd(std::numeric_limits<double>::infinity()), over);
    return result;
}

// Scalar tail that matches exp4 lane semantics.
inline double exp1(double x) {
    alignas(32) double buf[4] = {x, 0.0, 0.0, 0.0};
    _mm256_store_pd(buf, exp4(_mm256_load_pd(buf)));
    return buf[0];
}

// ============================================================================
// BLAS-like
// ============================================================================

double dot(const double* a, const double* b, std::size_t n) {
    __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
        s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), s1);
    }
    for (; i + 4 <= n; i += 4) s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
    double s = hsum(_mm256_add_pd(s0, s1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

// C[m x n] += A' * B where A'(i, p) = a[i * sa + p * sp] and B is k x n.
// 4 x 8 register tile; row and column tails fall back to narrower tiles.
void gemm_strided(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t sa, std::size_t sp,
                  const double* b, double* c) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        std::size_t j = 0;
        for (; j + 8 <= n; j += 8) {
            __m256d c00 = _mm256_loadu_pd(c + (i + 0) * n + j), c01 = _mm256_loadu_pd(c + (i + 0) * n + j + 4);
            __m256d c10 = _mm256_loadu_pd(c + (i + 1) * n + j), c11 = _mm256_loadu_pd(c + (i + 1) * n + j + 4);
            __m256d c20 = _mm256_loadu_pd(c + (i + 2) * n + j), c21 = _mm256_loadu_pd(c + (i + 2) * n + j + 4);
            __m256d c30 = _mm256_loadu_pd(c + (i + 3) * n + j), c31 = _mm256_loadu_pd(c + (i + 3) * n + j + 4);
            for (std::size_t p = 0; p < k; ++p) {
                const __m256d b0 = _mm256_loadu_pd(b + p * n + j);
                const __m256d b1 = _mm256_loadu_pd(b + p * n + j + 4);
                __m256d av = _mm256_broadcast_sd(a + (i + 0) * sa + p * sp);
                c00 = _mm256_fmadd_pd(av, b0, c00);
                c01 = _mm256_fmadd_pd(av, b1, c01);
                av = _mm256_broadcast_sd(a + (i + 1) * sa + p * sp);
                c10 = _mm256_fmadd_pd(av, b0, c10);
                c11 = _mm256_fmadd_pd(av, b1, c11);
                av = _mm256_broadcast_sd(a + (i + 2) * sa + p * sp);
                c20 = _mm256_fmadd_pd(av, b0, c20);
                c21 = _mm256_fmadd_pd(av, b1, c21);
                av = _mm256_broadcast_sd(a + (i + 3) * sa + p * sp);
                c30 = _mm256_fmadd_pd(av, b0, c30);
                c31 = _mm256_fmadd_pd(av, b1, c31);
            }
            _mm256_storeu_pd(c + (i + 0) * n + j, c00), _mm256_storeu_pd(c + (i + 0) * n + j + 4, c01);
            _mm256_storeu_pd(c + (i + 1) * n + j, c10), _mm256_storeu_pd(c + (i + 1) * n + j + 4, c11);
            _mm256_storeu_pd(c + (i + 2) * n + j, c20), _mm256_storeu_pd(c + (i + 2) * n + j + 4, c21);
            _mm256_storeu_pd(c + (i + 3) * n + j, c30), _mm256_storeu_pd(c + (i + 3) * n + j + 4, c31);
        }
        for (; j + 4 <= n; j += 4) {
            __m256d c0 = _mm256_loadu_pd(c + (i + 0) * n + j);
            __m256d c1 = _mm256_loadu_pd(c + (i + 1) * n + j);
            __m256d c2 = _mm256_loadu_pd(c + (i + 2) * n + j);
            __m256d c3 = _mm256_loadu_pd(c + (i + 3) * n + j);
            for (std::size_t p = 0; p < k; ++p) {
                const __m256d b0 = _mm256_loadu_pd(b + p * n + j);
                c0 = _mm256_fmadd_pd(_mm256_broadcast_sd(a + (i + 0) * sa + p * sp), b0, c0);
                c1 = _mm256_fmadd_pd(_mm256_broadcast_sd(a + (i + 1) * sa + p * sp), b0, c1);
                c2 = _mm256_fmadd_pd(_mm256_broadcast_sd(a + (i + 2) * sa + p * sp), b0, c2);
                c3 = _mm256_fmadd_pd(_mm256_broadcast_sd(a + (i + 3) * sa + p * sp), b0, c3);
            }
            _mm256_storeu_pd(c + (i + 0) * n + j, c0);
            _mm256_storeu_pd(c + (i + 1) * n + j, c1);
            _mm256_storeu_pd(c + (i + 2) * n + j, c2);
            _mm256_storeu_pd(c + (i + 3) * n + j, c3);
        }
        for (; j < n; ++j)
            for (std::size_t r = 0; r < 4; ++r) {
                double s = c[(i + r) * n + j];
                for (std::size_t p = 0; p < k; ++p) s += a[(i + r) * sa + p * sp] * b[p * n + j];
                c[(i + r) * n + j] = s;
            }
    }
    for (; i < m; ++i) {
        double* ci = c + i * n;
        for (std::size_t p = 0; p < k; ++p) axpy(a[i * sa + p * sp], b + p * n, ci, n);
    }
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
    gemm_strided(m, n, k, a, k, 1, b, c);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
    gemm_strided(m, n, k, a, 1, m, b, c);
}

// Row-by-row dot products, four B rows at a time sharing the A row loads.
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            const double* b0 = b + (j + 0) * k;
            const double* b1 = b + (j + 1) * k;
            const double* b2 = b + (j + 2) * k;
            const double* b3 = b + (j + 3) * k;
            __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
            __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
            std::size_t p = 0;
            for (; p + 4 <= k; p += 4) {
                const __m256d av = _mm256_loadu_pd(ai + p);
                s0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + p), s0);
                s1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + p), s1);
                s2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + p), s2);
                s3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + p), s3);
            }
            double r0 = hsum(s0), r1 = hsum(s1), r2 = hsum(s2), r3 = hsum(s3);
            for (; p < k; ++p) {
                r0 += ai[p] * b0[p];
                r1 += ai[p] * b1[p];
                r2 += ai[p] * b2[p];
                r3 += ai[p] * b3[p];
            }
            ci[j] += r0, ci[j + 1] += r1, ci[j + 2] += r2, ci[j + 3] += r3;
        }
        for (; j < n; ++j) ci[j] += dot(ai, b + j * k, k);
    }
}

// ============================================================================
// transcendental loops
// ============================================================================

void vexp(const double* x, double* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, exp4(_mm256_loadu_pd(x + i)));
    for (; i < n; ++i) y[i] = exp1(x[i]);
}

void sq_dists(const double* q, const double* p, std::size_t m, std::size_t d, double* out) {
    for (std::size_t j = 0; j < m; ++j) {
        const double* pj = p + j * d;
        __m256d s = _mm256_setzero_pd();
        std::size_t a = 0;
        for (; a + 4 <= d; a += 4) {
            const __m256d t = _mm256_sub_pd(_mm256_loadu_pd(q + a), _mm256_loadu_pd(pj + a));
            s = _mm256_fmadd_pd(t, t, s);
        }
        double r = hsum(s);
        for (; a < d; ++a) {
            const double t = q[a] - pj[a];
            r += t * t;
        }
        out[j] = r;
    }
}

double lse_plus(const double* x, const double* u, std::size_t n) {
    double mx = -std::numeric_limits<double>::infinity();
    std::size_t j = 0;
    if (n >= 4) {
        __m256d vm = _mm256_set1_pd(mx);
        for (; j + 4 <= n; j += 4)
            vm = _mm256_max_pd(vm, _mm256_add_pd(_mm256_loadu_pd(x + j), _mm256_loadu_pd(u + j)));
        mx = hmax(vm);
    }
    for (; j < n; ++j) mx = std::max(mx, x[j] + u[j]);
    if (!std::isfinite(mx)) return mx;

    const __m256d shift = _mm256_set1_pd(-mx);
    __m256d s = _mm256_setzero_pd();
    j = 0;
    for (; j + 4 <= n; j += 4) {
        const __m256d t = _mm256_add_pd(_mm256_add_pd(_mm256_loadu_pd(x + j), _mm256_loadu_pd(u + j)), shift);
        s = _mm256_add_pd(s, exp4(t));
    }
    double r = hsum(s);
    for (; j < n; ++j) r += exp1(x[j] + u[j] - mx);
    return mx + std::log(r);
}

void exp_accumulate(const double* x, double c, const double* u, double* acc, std::size_t n) {
    const __m256d vc = _mm256_set1_pd(c);
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        const __m256d t = _mm256_add_pd(_mm256_add_pd(_mm256_loadu_pd(x + j), vc), _mm256_loadu_pd(u + j));
        _mm256_storeu_pd(acc + j, _mm256_add_pd(_mm256_loadu_pd(acc + j), exp4(t)));
    }
    for (; j < n; ++j) acc[j] += exp1(x[j] + c + u[j]);
}

void exp_scaled_scatter(const double* x, double c, const double* u, double g, double* dx, double* du,
                        std::size_t n) {
    const __m256d vc = _mm256_set1_pd(c);
    const __m256d vg = _mm256_set1_pd(g);
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        const __m256d t = _mm256_add_pd(_mm256_add_pd(_mm256_loadu_pd(x + j), vc), _mm256_loadu_pd(u + j));
        const __m256d w = _mm256_mul_pd(vg, exp4(t));
        _mm256_storeu_pd(dx + j, _mm256_add_pd(_mm256_loadu_pd(dx + j), w));
        _mm256_storeu_pd(du + j, _mm256_add_pd(_mm256_loadu_pd(du + j), w));
    }
    for (; j < n; ++j) {
        const double w = g * exp1(x[j] + c + u[j]);
        dx[j] += w;
        du[j] += w;
    }
}

double exp_weighted_scatter(const double* x, double c, const double* u, const double* g, double* dx,
                            std::size_t n) {
    const __m256d vc = _mm256_set1_pd(c);
    __m256d s = _mm256_setzero_pd();
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        const __m256d t = _mm256_add_pd(_mm256_add_pd(_mm256_loadu_pd(x + j), vc), _mm256_loadu_pd(u + j));
        const __m256d w = _mm256_mul_pd(_mm256_loadu_pd(g + j), exp4(t));
        _mm256_storeu_pd(dx + j, _mm256_add_pd(_mm256_loadu_pd(dx + j), w));
        s = _mm256_add_pd(s, w);
    }
    double r = hsum(s);
    for (; j < n; ++j) {
        const double w = g[j] * exp1(x[j] + c + u[j]);
        dx[j] += w;
        r += w;
    }
    return r;
}

}  // namespace

const KernelTable* avx2_table_unchecked() {
    static const KernelTable table{
        "avx2", dot, axpy, gemm_nn, gemm_nt, gemm_tn, vexp, sq_dists, lse_plus,
        exp_accumulate, exp_scaled_scatter, exp_weighted_scatter,
    };
    return &table;
}

}  // namespace ffe::simd

#else

namespace ffe::simd {
const KernelTable* avx2_table_unchecked() { return nullptr; }
}  // namespace ffe::simd

#endif
