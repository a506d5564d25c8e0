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

// Differentiable primitives. Shapes are checked eagerly and mismatches throw
// ffe::Error(InvalidArgument). Index arguments are constants: no gradient
// flows through the choice of indices.

#include "ffe/autodiff/tape.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace ffe::ad {

using IndexList = std::vector<std::uint32_t>;

// --- linear algebra --------------------------------------------------------
Var matmul(const Var& a, const Var& b);     // [m x k] * [k x n]
Var matmul_nt(const Var& a, const Var& b);  // [m x k] * [n x k]^T
Var transpose(const Var& a);

// --- elementwise, same shape -----------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

// --- broadcasting ----------------------------------------------------------
Var add_row(const Var& a, const Var& row);  // a[r x c] + row[1 x c]
Var add_col(const Var& a, const Var& col);  // a[r x c] + col[r x 1]
Var mul_col(const Var& a, const Var& col);  // a[r x c] * col[r x 1]
Var div_col(const Var& a, const Var& col);  // a[r x c] / col[r x 1]

// --- scalar ----------------------------------------------------------------
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

// --- unary -----------------------------------------------------------------
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
/// Subgradient 0 at exactly 0.
Var abs(const Var& a);
/// x for x > 0, slope * x otherwise.
Var leaky_relu(const Var& a, double slope);
/// max(x, lo); gradient passes only where x > lo.
Var clamp_min(const Var& a, double lo);
Var clamp(const Var& a, double lo, double hi);

// --- reductions ------------------------------------------------------------
Var sum(const Var& a);       // -> 1 x 1
Var mean(const Var& a);      // -> 1 x 1
Var sum_rows(const Var& a);  // -> r x 1 (sum along each row)
Var sum_cols(const Var& a);  // -> 1 x c (sum down each column)
/// Max over consecutive groups of `group` rows: [g*group x c] -> [g x c].
/// Ties route the gradient to the lowest row in the group.
Var segment_max(const Var& a, std::size_t group);
/// Softmax along each row.
Var softmax_rows(const Var& a);

// --- log-domain transport helpers -----------------------------------------
/// out[i] = log sum_j exp(m[i,j] + u[j]);  m [r x c], u [1 x c] -> [r x 1]
Var lse_rows_plus(const Var& m, const Var& u);
/// out[j] = log sum_i exp(m[i,j] + v[i]);  m [r x c], v [r x 1] -> [1 x c]
Var lse_cols_plus(const Var& m, const Var& v);
/// exp(m[i,j] + v[i] + u[j]);  v [r x 1], u [1 x c]
Var exp_outer(const Var& m, const Var& v, const Var& u);

// --- gathers and structure -------------------------------------------------
/// Rows a[idx[0]], a[idx[1]], ...
Var gather_rows(const Var& a, IndexList idx);
/// out[i, l] = a[i, idx[i * width + l]]
Var gather_elems(const Var& a, IndexList idx, std::size_t width);
/// out[i, :] = sum_l w[i, l] * y[idx[i * L + l], :] with constant y.
Var weighted_gather(const Var& w, IndexList idx, std::shared_ptr<const Matrix> y);
Var concat_cols(std::span<const Var> parts);

/// Edge MLP with max pooling over each node's k neighbors:
///   out[i] = max_l lrelu(lrelu(b[idx[i*k+l]] + p[i]) * w2 + b2)
/// Same values and gradients as the composite of gather_rows, add,
/// leaky_relu, matmul, add_row, leaky_relu and segment_max, without
/// materializing the per-edge tensors.
Var edge_mlp_max(const Var& b, const Var& p, IndexList idx, std::size_t k, const Var& w2, const Var& b2,
                 double slope);

/// Constant sparse matrix in CSR form.
struct SparseRows {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint32_t> offsets;  // rows + 1
    std::vector<std::uint32_t> index;
    std::vector<double> coef;
};
/// out [rows x 1] = S * vec(x), x read row-major as a length-`cols` vector.
Var sparse_matvec(std::shared_ptr<const SparseRows> s, const Var& x);

}  // namespace ffe::ad
