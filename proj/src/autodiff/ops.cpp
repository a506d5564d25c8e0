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

#include "ffe/autodiff/ops.hpp"

#include "ffe/error.hpp"
#include "ffe/simd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace ffe::ad {

namespace {

std::string shape(const Matrix& m) { return std::to_string(m.rows) + "x" + std::to_string(m.cols); }

void same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        fail(ErrorKind::InvalidArgument,
             std::string(op) + ": shape mismatch " + shape(a.value()) + " vs " + shape(b.value()));
}

template <class F>
Var unary(const Var& a, F&& f, Tape::Backprop bp) {
    const Matrix& x = a.value();
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = f(x.data[i]);
    return a.tape()->record(std::move(out), {a}, std::move(bp));
}

}  // namespace

// ============================================================================
// linear algebra
// ============================================================================

Var matmul(const Var& a, const Var& b) {
    const Matrix& A = a.value();
    const Matrix& B = b.value();
    if (A.cols != B.rows) fail(ErrorKind::InvalidArgument, "matmul: " + shape(A) + " * " + shape(B));
    Matrix out(A.rows, B.cols);
    simd::active().gemm_nn(A.rows, B.cols, A.cols, A.data.data(), B.data.data(), out.data.data());
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        const Matrix& A = t.value(ia);
        const Matrix& B = t.value(ib);
        const auto& k = simd::active();
        if (t.needs_grad(ia)) k.gemm_nt(A.rows, A.cols, B.cols, G.data.data(), B.data.data(), t.grad(ia).data.data());
        if (t.needs_grad(ib)) k.gemm_tn(B.rows, B.cols, A.rows, A.data.data(), G.data.data(), t.grad(ib).data.data());
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    const Matrix& A = a.value();
    const Matrix& B = b.value();
    if (A.cols != B.cols) fail(ErrorKind::InvalidArgument, "matmul_nt: " + shape(A) + " * (" + shape(B) + ")^T");
    Matrix out(A.rows, B.rows);
    simd::active().gemm_nt(A.rows, B.rows, A.cols, A.data.data(), B.data.data(), out.data.data());
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);  // m x n
        const Matrix& A = t.value(ia);   // m x k
        const Matrix& B = t.value(ib);   // n x k
        const auto& k = simd::active();
        if (t.needs_grad(ia)) k.gemm_nn(A.rows, A.cols, B.rows, G.data.data(), B.data.data(), t.grad(ia).data.data());
        if (t.needs_grad(ib)) k.gemm_tn(B.rows, B.cols, A.rows, G.data.data(), A.data.data(), t.grad(ib).data.data());
    });
}

Var transpose(const Var& a) {
    const Matrix& A = a.value();
    Matrix out(A.cols, A.rows);
    for (std::size_t i = 0; i < A.rows; ++i)
        for (std::size_t j = 0; j < A.cols; ++j) out(j, i) = A(i, j);
    const std::size_t ia = a.id();
    return a.tape()->record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        Matrix& GA = t.grad(ia);
        for (std::size_t i = 0; i < GA.rows; ++i)
            for (std::size_t j = 0; j < GA.cols; ++j) GA(i, j) += G(j, i);
    });
}

// ============================================================================
// elementwise
// ============================================================================

Var add(const Var& a, const Var& b) {
    same_shape(a, b, "add");
    Matrix out = a.value();
    const Matrix& B = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += B.data[i];
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        const auto& k = simd::active();
        if (t.needs_grad(ia)) k.axpy(1.0, G.data.data(), t.grad(ia).data.data(), G.size());
        if (t.needs_grad(ib)) k.axpy(1.0, G.data.data(), t.grad(ib).data.data(), G.size());
    });
}

Var sub(const Var& a, const Var& b) {
    same_shape(a, b, "sub");
    Matrix out = a.value();
    const Matrix& B = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= B.data[i];
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        const auto& k = simd::active();
        if (t.needs_grad(ia)) k.axpy(1.0, G.data.data(), t.grad(ia).data.data(), G.size());
        if (t.needs_grad(ib)) k.axpy(-1.0, G.data.data(), t.grad(ib).data.data(), G.size());
    });
}

Var mul(const Var& a, const Var& b) {
    same_shape(a, b, "mul");
    Matrix out = a.value();
    const Matrix& B = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= B.data[i];
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        if (t.needs_grad(ia)) {
            Matrix& GA = t.grad(ia);
            const Matrix& B = t.value(ib);
            for (std::size_t i = 0; i < G.size(); ++i) GA.data[i] += G.data[i] * B.data[i];
        }
        if (t.needs_grad(ib)) {
            Matrix& GB = t.grad(ib);
            const Matrix& A = t.value(ia);
            for (std::size_t i = 0; i < G.size(); ++i) GB.data[i] += G.data[i] * A.data[i];
        }
    });
}

Var div(const Var& a, const Var& b) {
    same_shape(a, b, "div");
    Matrix out = a.value();
    const Matrix& B = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] /= B.data[i];
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        const Matrix& B = t.value(ib);
        if (t.needs_grad(ia)) {
            Matrix& GA = t.grad(ia);
            for (std::size_t i = 0; i < G.size(); ++i) GA.data[i] += G.data[i] / B.data[i];
        }
        if (t.needs_grad(ib)) {
            Matrix& GB = t.grad(ib);
            const Matrix& Y = t.value(self);
            for (std::size_t i = 0; i < G.size(); ++i) GB.data[i] -= G.data[i] * Y.data[i] / B.data[i];
        }
    });
}

// ============================================================================
// broadcasting
// ============================================================================

Var add_row(const Var& a, const Var& row) {
    const Matrix& A = a.value();
    const Matrix& R = row.value();
    if (R.rows != 1 || R.cols != A.cols) fail(ErrorKind::InvalidArgument, "add_row: " + shape(A) + " + " + shape(R));
    Matrix out = A;
    for (std::size_t i = 0; i < A.rows; ++i)
        for (std::size_t j = 0; j < A.cols; ++j) out(i, j) += R.data[j];
    const std::size_t ia = a.id(), ir = row.id();
    return a.tape()->record(std::move(out), {a, row}, [ia, ir](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        if (t.needs_grad(ia)) simd::active().axpy(1.0, G.data.data(), t.grad(ia).data.data(), G.size());
        if (t.needs_grad(ir)) {
            Matrix& GR = t.grad(ir);
            for (std::size_t i = 0; i < G.rows; ++i) simd::active().axpy(1.0, G.row(i), GR.data.data(), G.cols);
        }
    });
}

Var add_col(const Var& a, const Var& col) {
    const Matrix& A = a.value();
    const Matrix& C = col.value();
    if (C.cols != 1 || C.rows != A.rows) fail(ErrorKind::InvalidArgument, "add_col: " + shape(A) + " + " + shape(C));
    Matrix out = A;
    for (std::size_t i = 0; i < A.rows; ++i)
        for (std::size_t j = 0; j < A.cols; ++j) out(i, j) += C.data[i];
    const std::size_t ia = a.id(), ic = col.id();
    return a.tape()->record(std::move(out), {a, col}, [ia, ic](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        if (t.needs_grad(ia)) simd::active().axpy(1.0, G.data.data(), t.grad(ia).data.data(), G.size());
        if (t.needs_grad(ic)) {
            Matrix& GC = t.grad(ic);
            for (std::size_t i = 0; i < G.rows; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < G.cols; ++j) s += G(i, j);
                GC.data[i] += s;
            }
        }
    });
}

Var mul_col(const Var& a, const Var& col) {
    const Matrix& A = a.value();
    const Matrix& C = col.value();
    if (C.cols != 1 || C.rows != A.rows) fail(ErrorKind::InvalidArgument, "mul_col: " + shape(A) + " * " + shape(C));
    Matrix out = A;
    for (std::size_t i = 0; i < A.rows; ++i)
        for (std::size_t j = 0; j < A.cols; ++j) out(i, j) *= C.data[i];
    const std::size_t ia = a.id(), ic = col.id();
    return a.tape()->record(std::move(out), {a, col}, [ia, ic](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        const Matrix& A = t.value(ia);
        const Matrix& C = t.value(ic);
        if (t.needs_grad(ia)) {
            Matrix& GA = t.grad(ia);
            for (std::size_t i = 0; i < G.rows; ++i)
                for (std::size_t j = 0; j < G.cols; ++j) GA(i, j) += G(i, j) * C.data[i];
        }
        if (t.needs_grad(ic)) {
            Matrix& GC = t.grad(ic);
            for (std::size_t i = 0; i < G.rows; ++i) GC.data[i] += simd::active().dot(G.row(i), A.row(i), G.cols);
        }
    });
}

Var div_col(const Var& a, const Var& col) {
    const Matrix& A = a.value();
    const Matrix& C = col.value();
    if (C.cols != 1 || C.rows != A.rows) fail(ErrorKind::InvalidArgument, "div_col: " + shape(A) + " / " + shape(C));
    Matrix out = A;
    for (std::size_t i = 0; i < A.rows; ++i)
        for (std::size_t j = 0; j < A.cols; ++j) out(i, j) /= C.data[i];
    const std::size_t ia = a.id(), ic = col.id();
    return a.tape()->record(std::move(out), {a, col}, [ia, ic](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        const Matrix& C = t.value(ic);
        if (t.needs_grad(ia)) {
            Matrix& GA = t.grad(ia);
            for (std::size_t i = 0; i < G.rows; ++i)
                for (std::size_t j = 0; j < G.cols; ++j) GA(i, j) += G(i, j) / C.data[i];
        }
        if (t.needs_grad(ic)) {
            const Matrix& Y = t.value(self);
            Matrix& GC = t.grad(ic);
            for (std::size_t i = 0; i < G.rows; ++i)
                GC.data[i] -= simd::active().dot(G.row(i), Y.row(i), G.cols) / C.data[i];
        }
    });
}

// ============================================================================
// scalar
// ============================================================================

Var scale(const Var& a, double s) {
    const std::size_t ia = a.id();
    return unary(a, [s](double x) { return s * x; }, [ia, s](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        simd::active().axpy(s, G.data.data(), t.grad(ia).data.data(), G.size());
    });
}

Var add_scalar(const Var& a, double s) {
    const std::size_t ia = a.id();
    return unary(a, [s](double x) { return x + s; }, [ia](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        simd::active().axpy(1.0, G.data.data(), t.grad(ia).data.data(), G.size());
    });
}

// ============================================================================
// unary
// ============================================================================

Var exp(const Var& a) {
    const Matrix& x = a.value();
    Matrix out(x.rows, x.cols);
    simd::active().exp(x.data.data(), out.data.data(), x.size());
    const std::size_t ia = a.id();
    return a.tape()->record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        const Matrix& Y = t.value(self);
        Matrix& GA = t.grad(ia);
        for (std::size_t i = 0; i < G.size(); ++i) GA.data[i] += G.data[i] * Y.data[i];
    });
}

Var log(const Var& a) {
    const std::size_t ia = a.id();
    return unary(a, [](double x) { return std::log(x); }, [ia](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        const Matrix& X = t.value(ia);
        Matrix& GA = t.grad(ia);
        for (std::size_t i = 0; i < G.size(); ++i) GA.data[i] += G.data[i] / X.data[i];
    });
}

Var sqrt(const Var& a) {
    const std::size_t ia = a.id();
    return unary(a, [](double x) { return std::sqrt(x); }, [ia](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        const Matrix& Y = t.value(self);
        Matrix& GA = t.grad(ia);
        for (std::size_t i = 0; i < G.size(); ++i) GA.data[i] += 0.5 * G.data[i] / Y.data[i];
    });
}

Var abs(const Var& a) {
    Tape& tape = *a.tape();
    if (tape.tracking_branches())
        for (double x : a.value().data) tape.note_branch(x > 0 ? 1 : (x < 0 ? 2 : 3));
    const std::size_t ia = a.id();
    return unary(a, [](double x) { return std::fabs(x); }, [ia](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        const Matrix& X = t.value(ia);
        Matrix& GA = t.grad(ia);
        for (std::size_t i = 0; i < G.size(); ++i) {
            const double x = X.data[i];
            GA.data[i] += x > 0 ? G.data[i] : (x < 0 ? -G.data[i] : 0.0);
        }
    });
}

Var leaky_relu(const Var& a, double slope) {
    Tape& tape = *a.tape();
    if (tape.tracking_branches())
        for (double x : a.value().data) tape.note_branch(x > 0 ? 1 : 2);
    const std::size_t ia = a.id();
    return unary(a, [slope](double x) { return x > 0 ? x : slope * x; }, [ia, slope](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        const Matrix& X = t.value(ia);
        Matrix& GA = t.grad(ia);
        for (std::size_t i = 0; i < G.size(); ++i) GA.data[i] += X.data[i] > 0 ? G.data[i] : slope * G.data[i];
    });
}

Var clamp_min(const Var& a, double lo) {
    return clamp(a, lo, std::numeric_limits<double>::infinity());
}

Var clamp(const Var& a, double lo, double hi) {
    Tape& tape = *a.tape();
    if (tape.tracking_branches())
        for (double x : a.value().data) tape.note_branch(x < lo ? 1 : (x > hi ? 2 : 3));
    const std::size_t ia = a.id();
    return unary(a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
                 [ia, lo, hi](Tape& t, std::size_t self) {
                     const Matrix& G = t.grad(self);
                     const Matrix& X = t.value(ia);
                     Matrix& GA = t.grad(ia);
                     for (std::size_t i = 0; i < G.size(); ++i)
                         if (X.data[i] > lo && X.data[i] < hi) GA.data[i] += G.data[i];
                 });
}

// ============================================================================
// reductions
// ============================================================================

Var sum(const Var& a) {
    const Matrix& x = a.value();
    double s = 0.0;
    for (double v : x.data) s += v;
    const std::size_t ia = a.id();
    return a.tape()->record(Matrix(1, 1, s), {a}, [ia](Tape& t, std::size_t self) {
        const double g = t.grad(self).data[0];
        for (double& v : t.grad(ia).data) v += g;
    });
}

Var mean(const Var& a) {
    const std::size_t n = a.value().size();
    require(n > 0, "mean of an empty matrix");
    return scale(sum(a), 1.0 / double(n));
}

Var sum_rows(const Var& a) {
    const Matrix& x = a.value();
    Matrix out(x.rows, 1);
    for (std::size_t i = 0; i < x.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < x.cols; ++j) s += x(i, j);
        out.data[i] = s;
    }
    const std::size_t ia = a.id();
    return a.tape()->record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        Matrix& GA = t.grad(ia);
        for (std::size_t i = 0; i < GA.rows; ++i)
            for (std::size_t j = 0; j < GA.cols; ++j) GA(i, j) += G.data[i];
    });
}

Var sum_cols(const Var& a) {
    const Matrix& x = a.value();
    Matrix out(1, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < x.cols; ++j) out.data[j] += x(i, j);
    const std::size_t ia = a.id();
    return a.tape()->record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        Matrix& GA = t.grad(ia);
        for (std::size_t i = 0; i < GA.rows; ++i)
            for (std::size_t j = 0; j < GA.cols; ++j) GA(i, j) += G.data[j];
    });
}

Var segment_max(const Var& a, std::size_t group) {
    const Matrix& x = a.value();
    if (group == 0 || x.rows % group != 0)
        fail(ErrorKind::InvalidArgument, "segment_max: " + std::to_string(x.rows) + " rows not divisible by " +
                                             std::to_string(group));
    const std::size_t groups = x.rows / group;
    Matrix out(groups, x.cols);
    auto arg = std::make_shared<std::vector<std::uint32_t>>(groups * x.cols);
    for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t r0 = g * group;
        for (std::size_t c = 0; c < x.cols; ++c) {
            std::size_t best = r0;
            for (std::size_t r = r0 + 1; r < r0 + group; ++r)
                if (x(r, c) > x(best, c)) best = r;  // strict: lowest row wins ties
            out(g, c) = x(best, c);
            (*arg)[g * x.cols + c] = static_cast<std::uint32_t>(best);
        }
    }
    Tape& tape = *a.tape();
    if (tape.tracking_branches())
        for (auto r : *arg) tape.note_branch(r);
    const std::size_t ia = a.id();
    return tape.record(std::move(out), {a}, [ia, arg](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        Matrix& GA = t.grad(ia);
        for (std::size_t g = 0; g < G.rows; ++g)
            for (std::size_t c = 0; c < G.cols; ++c) GA((*arg)[g * G.cols + c], c) += G(g, c);
    });
}

Var softmax_rows(const Var& a) {
    const Matrix& x = a.value();
    Matrix out(x.rows, x.cols);
    const Matrix zeros(1, x.cols, 0.0);
    const auto& k = simd::active();
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double lse = k.lse_plus(x.row(i), zeros.data.data(), x.cols);
        for (std::size_t j = 0; j < x.cols; ++j) out(i, j) = std::exp(x(i, j) - lse);
    }
    const std::size_t ia = a.id();
    return a.tape()->record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        const Matrix& Y = t.value(self);
        Matrix& GA = t.grad(ia);
        for (std::size_t i = 0; i < G.rows; ++i) {
            const double gy = simd::active().dot(G.row(i), Y.row(i), G.cols);
            for (std::size_t j = 0; j < G.cols; ++j) GA(i, j) += Y(i, j) * (G(i, j) - gy);
        }
    });
}

// ============================================================================
// log-domain transport helpers
// ============================================================================

Var lse_rows_plus(const Var& m, const Var& u) {
    const Matrix& M = m.value();
    const Matrix& U = u.value();
    if (U.rows != 1 || U.cols != M.cols)
        fail(ErrorKind::InvalidArgument, "lse_rows_plus: " + shape(M) + " with " + shape(U));
    Matrix out(M.rows, 1);
    const auto& k = simd::active();
    for (std::size_t i = 0; i < M.rows; ++i) out.data[i] = k.lse_plus(M.row(i), U.data.data(), M.cols);
    const std::size_t im = m.id(), iu = u.id();
    return m.tape()->record(std::move(out), {m, u}, [im, iu](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        const Matrix& Y = t.value(self);
        const Matrix& M = t.value(im);
        const Matrix& U = t.value(iu);
        // d out_i / d m_ij = d out_i / d u_j = softmax_j(m_i + u)
        Matrix scratch_m;
        Matrix scratch_u;
        Matrix& GM = t.needs_grad(im) ? t.grad(im) : (scratch_m = Matrix(M.rows, M.cols));
        Matrix& GU = t.needs_grad(iu) ? t.grad(iu) : (scratch_u = Matrix(1, M.cols));
        const auto& k = simd::active();
        for (std::size_t i = 0; i < M.rows; ++i) {
            if (G.data[i] == 0.0) continue;
            k.exp_scaled_scatter(M.row(i), -Y.data[i], U.data.data(), G.data[i], GM.row(i), GU.data.data(), M.cols);
        }
    });
}

Var lse_cols_plus(const Var& m, const Var& v) {
    const Matrix& M = m.value();
    const Matrix& V = v.value();
    if (V.cols != 1 || V.rows != M.rows)
        fail(ErrorKind::InvalidArgument, "lse_cols_plus: " + shape(M) + " with " + shape(V));
    const auto& k = simd::active();
    // Column maxima first, then a row-streaming accumulation of shifted exps.
    Matrix mx(1, M.cols, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < M.rows; ++i) {
        const double vi = V.data[i];
        const double* row = M.row(i);
        for (std::size_t j = 0; j < M.cols; ++j) mx.data[j] = std::max(mx.data[j], row[j] + vi);
    }
    Matrix neg_mx(1, M.cols);
    for (std::size_t j = 0; j < M.cols; ++j) neg_mx.data[j] = std::isfinite(mx.data[j]) ? -mx.data[j] : 0.0;
    Matrix acc(1, M.cols, 0.0);
    for (std::size_t i = 0; i < M.rows; ++i) k.exp_accumulate(M.row(i), V.data[i], neg_mx.data.data(), acc.data.data(), M.cols);
    Matrix out(1, M.cols);
    for (std::size_t j = 0; j < M.cols; ++j)
        out.data[j] = std::isfinite(mx.data[j]) ? mx.data[j] + std::log(acc.data[j]) : mx.data[j];
    const std::size_t im = m.id(), iv = v.id();
    return m.tape()->record(std::move(out), {m, v}, [im, iv](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        const Matrix& Y = t.value(self);
        const Matrix& M = t.value(im);
        const Matrix& V = t.value(iv);
        Matrix neg_y(1, M.cols);
        for (std::size_t j = 0; j < M.cols; ++j) neg_y.data[j] = -Y.data[j];
        Matrix scratch_row(1, M.cols);
        const bool gm = t.needs_grad(im);
        const bool gv = t.needs_grad(iv);
        const auto& k = simd::active();
        for (std::size_t i = 0; i < M.rows; ++i) {
            double* dst = gm ? t.grad(im).row(i) : scratch_row.data.data();
            const double s = k.exp_weighted_scatter(M.row(i), V.data[i], neg_y.data.data(), G.data.data(), dst, M.cols);
            if (gv) t.grad(iv).data[i] += s;
        }
    });
}

Var exp_outer(const Var& m, const Var& v, const Var& u) {
    const Matrix& M = m.value();
    const Matrix& V = v.value();
    const Matrix& U = u.value();
    if (V.cols != 1 || V.rows != M.rows || U.rows != 1 || U.cols != M.cols)
        fail(ErrorKind::InvalidArgument, "exp_outer: " + shape(M) + " with " + shape(V) + ", " + shape(U));
    Matrix out(M.rows, M.cols, 0.0);
    const auto& k = simd::active();
    for (std::size_t i = 0; i < M.rows; ++i) k.exp_accumulate(M.row(i), V.data[i], U.data.data(), out.row(i), M.cols);
    const std::size_t im = m.id(), iv = v.id(), iu = u.id();
    return m.tape()->record(std::move(out), {m, v, u}, [im, iv, iu](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        const Matrix& Y = t.value(self);
        const bool gm = t.needs_grad(im), gv = t.needs_grad(iv), gu = t.needs_grad(iu);
        for (std::size_t i = 0; i < Y.rows; ++i) {
            double rs = 0.0;
            for (std::size_t j = 0; j < Y.cols; ++j) {
                const double w = G(i, j) * Y(i, j);
                if (gm) t.grad(im)(i, j) += w;
                if (gu) t.grad(iu).data[j] += w;
                rs += w;
            }
            if (gv) t.grad(iv).data[i] += rs;
        }
    });
}

// ============================================================================
// gathers
// ============================================================================

Var gather_rows(const Var& a, IndexList idx) {
    const Matrix& A = a.value();
    for (auto r : idx)
        if (r >= A.rows) fail(ErrorKind::InvalidArgument, "gather_rows: index " + std::to_string(r) + " out of range");
    Matrix out(idx.size(), A.cols);
    for (std::size_t i = 0; i < idx.size(); ++i) std::copy_n(A.row(idx[i]), A.cols, out.row(i));
    auto shared = std::make_shared<const IndexList>(std::move(idx));
    const std::size_t ia = a.id();
    return a.tape()->record(std::move(out), {a}, [ia, shared](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        Matrix& GA = t.grad(ia);
        const auto& k = simd::active();
        for (std::size_t i = 0; i < shared->size(); ++i) k.axpy(1.0, G.row(i), GA.row((*shared)[i]), G.cols);
    });
}

Var gather_elems(const Var& a, IndexList idx, std::size_t width) {
    const Matrix& A = a.value();
    if (idx.size() != A.rows * width) fail(ErrorKind::InvalidArgument, "gather_elems: index list has wrong length");
    Matrix out(A.rows, width);
    for (std::size_t i = 0; i < A.rows; ++i)
        for (std::size_t l = 0; l < width; ++l) {
            const auto c = idx[i * width + l];
            if (c >= A.cols) fail(ErrorKind::InvalidArgument, "gather_elems: column index out of range");
            out(i, l) = A(i, c);
        }
    auto shared = std::make_shared<const IndexList>(std::move(idx));
    const std::size_t ia = a.id();
    return a.tape()->record(std::move(out), {a}, [ia, shared, width](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        Matrix& GA = t.grad(ia);
        for (std::size_t i = 0; i < G.rows; ++i)
            for (std::size_t l = 0; l < width; ++l) GA(i, (*shared)[i * width + l]) += G(i, l);
    });
}

Var weighted_gather(const Var& w, IndexList idx, std::shared_ptr<const Matrix> y) {
    const Matrix& W = w.value();
    const std::size_t L = W.cols;
    if (idx.size() != W.rows * L) fail(ErrorKind::InvalidArgument, "weighted_gather: index list has wrong length");
    for (auto r : idx)
        if (r >= y->rows) fail(ErrorKind::InvalidArgument, "weighted_gather: index out of range");
    const std::size_t d = y->cols;
    Matrix out(W.rows, d);
    for (std::size_t i = 0; i < W.rows; ++i)
        for (std::size_t l = 0; l < L; ++l) {
            const double wil = W(i, l);
            const double* yr = y->row(idx[i * L + l]);
            for (std::size_t c = 0; c < d; ++c) out(i, c) += wil * yr[c];
        }
    auto shared = std::make_shared<const IndexList>(std::move(idx));
    const std::size_t iw = w.id();
    return w.tape()->record(std::move(out), {w}, [iw, shared, y, L, d](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        Matrix& GW = t.grad(iw);
        for (std::size_t i = 0; i < G.rows; ++i)
            for (std::size_t l = 0; l < L; ++l) {
                const double* yr = y->row((*shared)[i * L + l]);
                double s = 0.0;
                for (std::size_t c = 0; c < d; ++c) s += G(i, c) * yr[c];
                GW(i, l) += s;
            }
    });
}

Var edge_mlp_max(const Var& b, const Var& p, IndexList idx, std::size_t k, const Var& w2, const Var& b2,
                 double slope) {
    const Matrix& B = b.value();
    const Matrix& P = p.value();
    const Matrix& W = w2.value();
    const std::size_t n = P.rows, h = P.cols, o = W.cols;
    if (B.cols != h || W.rows != h || b2.rows() != 1 || b2.cols() != o)
        fail(ErrorKind::InvalidArgument, "edge_mlp_max: shapes " + shape(B) + ", " + shape(P) + ", " + shape(W) +
                                             ", " + shape(b2.value()));
    if (k == 0 || idx.size() != n * k) fail(ErrorKind::InvalidArgument, "edge_mlp_max: index list has wrong length");
    for (auto r : idx)
        if (r >= B.rows) fail(ErrorKind::InvalidArgument, "edge_mlp_max: index " + std::to_string(r) + " out of range");

    Tape& tape = *b.tape();
    const bool track = tape.tracking_branches();
    const auto& kern = simd::active();
    const double* bias = b2.value().data.data();
    Matrix out(n, o);
    auto arg = std::make_shared<std::vector<std::uint32_t>>(n * o);
    auto fac = std::make_shared<std::vector<double>>(n * o);
    std::vector<double> H(k * h), Z(k * o);
    for (std::size_t i = 0; i < n; ++i) {
        const double* pi = P.row(i);
        for (std::size_t l = 0; l < k; ++l) {
            const double* bj = B.row(idx[i * k + l]);
            double* hl = H.data() + l * h;
            for (std::size_t c = 0; c < h; ++c) {
                const double x = bj[c] + pi[c];
                hl[c] = x > 0 ? x : slope * x;
                if (track) tape.note_branch(x > 0 ? 1 : 2);
            }
            std::copy_n(bias, o, Z.data() + l * o);
        }
        kern.gemm_nn(k, o, h, H.data(), W.data.data(), Z.data());
        if (track)
            for (double z : Z) tape.note_branch(z > 0 ? 1 : 2);
        for (std::size_t c = 0; c < o; ++c) {
            std::size_t best = 0;
            double bv = 0.0, bz = 0.0;
            for (std::size_t l = 0; l < k; ++l) {
                const double z = Z[l * o + c];
                const double v = z > 0 ? z : slope * z;
                if (l == 0 || v > bv) best = l, bv = v, bz = z;  // strict: lowest row wins ties
            }
            out(i, c) = bv;
            (*arg)[i * o + c] = static_cast<std::uint32_t>(best);
            (*fac)[i * o + c] = bz > 0 ? 1.0 : slope;
            if (track) tape.note_branch(best);
        }
    }

    auto shared = std::make_shared<const IndexList>(std::move(idx));
    const std::size_t ib = b.id(), ip = p.id(), iw = w2.id(), ic = b2.id();
    return tape.record(std::move(out), {b, p, w2, b2},
                       [ib, ip, iw, ic, shared, arg, fac, k, slope](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        const Matrix& B = t.value(ib);
        const Matrix& P = t.value(ip);
        const Matrix& W = t.value(iw);
        const std::size_t n = P.rows, h = P.cols, o = W.cols;
        const auto& kern = simd::active();
        const bool need_b = t.needs_grad(ib), need_p = t.needs_grad(ip);
        const bool need_w = t.needs_grad(iw), need_c = t.needs_grad(ic);

        Matrix WT(o, h), dWT(o, h);
        for (std::size_t a = 0; a < h; ++a)
            for (std::size_t c = 0; c < o; ++c) WT(c, a) = W(a, c);
        Matrix* GB = need_b ? &t.grad(ib) : nullptr;
        Matrix* GP = need_p ? &t.grad(ip) : nullptr;
        Matrix* GC = need_c ? &t.grad(ic) : nullptr;

        std::vector<double> pre(k * h), dH(k * h, 0.0);
        std::vector<char> touched(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const double* pi = P.row(i);
            for (std::size_t c = 0; c < o; ++c) {
                const std::size_t l = (*arg)[i * o + c];
                const double gz = G(i, c) * (*fac)[i * o + c];
                if (GC) GC->data[c] += gz;
                if (!touched[l]) {
                    touched[l] = 1;
                    const double* bj = B.row((*shared)[i * k + l]);
                    for (std::size_t a = 0; a < h; ++a) pre[l * h + a] = bj[a] + pi[a];
                }
                if (gz == 0.0) continue;
                if (need_w) {
                    double* row = dWT.row(c);
                    const double* x = pre.data() + l * h;
                    for (std::size_t a = 0; a < h; ++a) row[a] += gz * (x[a] > 0 ? x[a] : slope * x[a]);
                }
                kern.axpy(gz, WT.row(c), dH.data() + l * h, h);
            }
            for (std::size_t l = 0; l < k; ++l) {
                if (!touched[l]) continue;
                touched[l] = 0;
                double* d = dH.data() + l * h;
                const double* x = pre.data() + l * h;
                for (std::size_t a = 0; a < h; ++a) d[a] = x[a] > 0 ? d[a] : slope * d[a];
                if (GB) kern.axpy(1.0, d, GB->row((*shared)[i * k + l]), h);
                if (GP) kern.axpy(1.0, d, GP->row(i), h);
                std::fill_n(d, h, 0.0);
            }
        }
        if (need_w) {
            Matrix& GW = t.grad(iw);
            for (std::size_t a = 0; a < h; ++a)
                for (std::size_t c = 0; c < o; ++c) GW(a, c) += dWT(c, a);
        }
    });
}

Var concat_cols(std::span<const Var> parts) {
    require(!parts.empty(), "concat_cols: no inputs");
    const std::size_t rows = parts[0].rows();
    std::size_t cols = 0;
    for (const Var& p : parts) {
        if (p.rows() != rows) fail(ErrorKind::InvalidArgument, "concat_cols: row counts differ");
        cols += p.cols();
    }
    Matrix out(rows, cols);
    std::vector<std::size_t> ids, offsets;
    std::size_t off = 0;
    for (const Var& p : parts) {
        const Matrix& P = p.value();
        for (std::size_t i = 0; i < rows; ++i) std::copy_n(P.row(i), P.cols, out.row(i) + off);
        ids.push_back(p.id());
        offsets.push_back(off);
        off += P.cols;
    }
    return parts[0].tape()->record(std::move(out), parts, [ids, offsets](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        for (std::size_t p = 0; p < ids.size(); ++p) {
            if (!t.needs_grad(ids[p])) continue;
            Matrix& GP = t.grad(ids[p]);
            for (std::size_t i = 0; i < GP.rows; ++i)
                for (std::size_t j = 0; j < GP.cols; ++j) GP(i, j) += G(i, offsets[p] + j);
        }
    });
}

Var sparse_matvec(std::shared_ptr<const SparseRows> s, const Var& x) {
    const Matrix& X = x.value();
    if (X.size() != s->cols)
        fail(ErrorKind::InvalidArgument, "sparse_matvec: input has " + std::to_string(X.size()) + " entries, expected " +
                                             std::to_string(s->cols));
    Matrix out(s->rows, 1);
    for (std::size_t r = 0; r < s->rows; ++r) {
        double acc = 0.0;
        for (std::uint32_t e = s->offsets[r]; e < s->offsets[r + 1]; ++e) acc += s->coef[e] * X.data[s->index[e]];
        out.data[r] = acc;
    }
    const std::size_t ix = x.id();
    return x.tape()->record(std::move(out), {x}, [ix, s](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        Matrix& GX = t.grad(ix);
        for (std::size_t r = 0; r < s->rows; ++r)
            for (std::uint32_t e = s->offsets[r]; e < s->offsets[r + 1]; ++e)
                GX.data[s->index[e]] += s->coef[e] * G.data[r];
    });
}

}  // namespace ffe::ad
