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

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace ffe::ad {

/// Dense row-major matrix of doubles. Vectors are 1 x n or n x 1.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> values);

    std::size_t size() const noexcept { return data.size(); }
    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
public:
    Var() = default;

    std::size_t rows() const;
    std::size_t cols() const;
    const Matrix& value() const;
    /// Gradient after Tape::backward (zeros if the node received none).
    const Matrix& grad() const;
    bool requires_grad() const;
    /// Value of a 1 x 1 node.
    double item() const;

    Tape* tape() const noexcept { return tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Linear record of primitive operations for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order; backward() walks them in reverse
/// and calls each node's backprop closure, which adds into its inputs'
/// gradient buffers. A tape is single-threaded; independent tapes may run
/// on different threads.
class Tape {
public:
    using Backprop = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Matrix value, bool requires_grad = true);
    Var constant(Matrix value) { return leaf(std::move(value), false); }

    /// Appends an op node. `fn` is only kept when some input needs a gradient.
    Var record(Matrix value, std::initializer_list<Var> inputs, Backprop fn);
    Var record(Matrix value, std::span<const Var> inputs, Backprop fn);

    /// Reverse sweep from a 1 x 1 output. A second call requires zero_grad().
    void backward(const Var& output);
    void zero_grad();

    std::size_t size() const noexcept { return nodes_.size(); }

    const Matrix& value(std::size_t id) const { return nodes_[id].value; }
    bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    /// Gradient buffer for node `id`, zero-initialized on first access.
    Matrix& grad(std::size_t id);
    const Matrix& grad_or_zero(std::size_t id);

    // Kink bookkeeping for finite-difference checks. When enabled, every
    // non-smooth op folds its branch decisions (signs, argmax picks, index
    // selections) into a running signature.
    void set_track_branches(bool on) noexcept { track_branches_ = on; }
    bool tracking_branches() const noexcept { return track_branches_; }
    void note_branch(std::uint64_t decision) noexcept;
    std::uint64_t branch_signature() const noexcept { return signature_; }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        Backprop backprop;
    };

    std::deque<Node> nodes_;
    bool backward_done_ = false;
    bool track_branches_ = false;
    std::uint64_t signature_ = 1469598103934665603ull;
};

}  // namespace ffe::ad
