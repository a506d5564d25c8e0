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

#include "ffe/autodiff/tape.hpp"

#include "ffe/error.hpp"

#include <algorithm>
#include <string>

namespace ffe::ad {

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
    require(data.size() == r * c, "matrix: buffer length " + std::to_string(data.size()) + " != " +
                                      std::to_string(r) + "x" + std::to_string(c));
}

std::size_t Var::rows() const { return tape_->value(id_).rows; }
std::size_t Var::cols() const { return tape_->value(id_).cols; }
const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad_or_zero(id_); }
bool Var::requires_grad() const { return tape_->needs_grad(id_); }

double Var::item() const {
    const Matrix& v = value();
    require(v.size() == 1, "item() on a non-scalar node");
    return v.data[0];
}

Var Tape::leaf(Matrix value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad, {}});
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backprop fn) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backprop fn) {
    bool rg = false;
    for (const Var& v : inputs) {
        if (v.tape() != this) fail(ErrorKind::InvalidArgument, "op mixes nodes from different tapes");
        rg = rg || nodes_[v.id()].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, rg, rg ? std::move(fn) : Backprop{}});
    return Var(this, nodes_.size() - 1);
}

Matrix& Tape::grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() != n.value.size()) n.grad = Matrix(n.value.rows, n.value.cols, 0.0);
    return n.grad;
}

const Matrix& Tape::grad_or_zero(std::size_t id) { return grad(id); }

void Tape::backward(const Var& output) {
    if (output.tape() != this) fail(ErrorKind::InvalidArgument, "backward: output belongs to another tape");
    const Matrix& out = nodes_[output.id()].value;
    if (out.rows != 1 || out.cols != 1)
        fail(ErrorKind::InvalidArgument, "backward: output must be 1x1, got " + std::to_string(out.rows) + "x" +
                                             std::to_string(out.cols));
    if (backward_done_) fail(ErrorKind::State, "backward: gradients already populated; call zero_grad() first");
    backward_done_ = true;
    if (!nodes_[output.id()].requires_grad) return;

    grad(output.id()).data[0] += 1.0;
    for (std::size_t id = output.id() + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.backprop || n.grad.size() == 0) continue;
        n.backprop(*this, id);
    }
}

void Tape::zero_grad() {
    for (Node& n : nodes_) std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
    backward_done_ = false;
}

void Tape::note_branch(std::uint64_t decision) noexcept {
    // FNV-1a over the 8 bytes of the decision.
    for (int b = 0; b < 8; ++b) {
        signature_ ^= (decision >> (8 * b)) & 0xffu;
        signature_ *= 1099511628211ull;
    }
}

}  // namespace ffe::ad
