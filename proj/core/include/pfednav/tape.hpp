// Copyright 2026 The pfednav Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "pfednav/tensor.hpp"

namespace pfednav::ad {

/// Handle to a node recorded on a Tape.
struct Var {
  static constexpr std::uint32_t kInvalid = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t id = kInvalid;
  bool valid() const noexcept { return id != kInvalid; }
};

/// Eager reverse-mode tape over 2-D double matrices.
///
/// Every operation computes its value immediately and appends a node; values
/// and gradients live in two flat arenas indexed by node offset, so a forward
/// pass allocates nothing per node beyond arena growth. Nodes only carry
/// gradient bookkeeping when some input was created with `variable()`.
///
/// No broadcasting: `scale_by` is the only mixed-shape op (1x1 scalar times a
/// matrix). Shape violations throw ShapeError naming the op and both shapes.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// Leaf whose gradient is tracked.
  Var variable(const Tensor& value);
  /// Leaf with no gradient.
  Var constant(const Tensor& value);
  Var constant_scalar(double value);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var tanh(Var x);
  Var sigmoid(Var x);
  /// Softmax over the last axis (each row), max-subtracted.
  Var softmax(Var x);
  Var concat_cols(std::span<const Var> parts);
  Var concat_rows(std::span<const Var> parts);
  /// Row gather (embedding lookup): out[i] = table[rows[i]].
  Var gather_rows(Var table, std::span<const int> rows);
  Var sum(Var x);
  Var mean(Var x);
  Var scale(Var x, double k);
  /// Multiply a matrix by a 1x1 node.
  Var scale_by(Var x, Var s);
  Var transpose(Var x);
  /// Mean over unmasked rows of -log softmax(logits[r])[targets[r]].
  /// A negative target masks the row out. Returns a 1x1 node.
  Var cross_entropy(Var logits, std::span<const int> targets);
  /// Copies the value into a gradient-free leaf.
  Var detach(Var x);

  /// Fills gradients of every tracked node reachable from `loss` (1x1).
  void backward(Var loss);

  std::size_t rows(Var v) const { return node(v).rows; }
  std::size_t cols(Var v) const { return node(v).cols; }
  std::span<const double> value(Var v) const;
  /// Value as a tensor shaped {rows, cols}.
  Tensor value_tensor(Var v) const;
  double scalar(Var v) const;
  /// Gradient after backward(); zeros for untracked nodes.
  Tensor grad(Var v) const;
  std::span<const double> grad_span(Var v) const;
  bool tracks_grad(Var v) const { return node(v).needs_grad; }

  std::size_t node_count() const noexcept { return nodes_.size(); }
  void clear();

 private:
  enum class Op : std::uint8_t {
    Leaf, MatMul, Add, Sub, Mul, Tanh, Sigmoid, Softmax, ConcatCols,
    ConcatRows, GatherRows, Sum, Mean, Scale, ScaleBy, Transpose,
    CrossEntropy,
  };

  struct Node {
    Op op = Op::Leaf;
    bool needs_grad = false;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::size_t offset = 0;
    std::uint32_t a = Var::kInvalid;
    std::uint32_t b = Var::kInvalid;
    std::uint32_t extra_begin = 0;
    std::uint32_t extra_count = 0;
    double k = 0.0;
  };

  const Node& node(Var v) const;
  Var push(Op op, std::size_t rows, std::size_t cols, bool needs_grad,
           std::uint32_t a = Var::kInvalid, std::uint32_t b = Var::kInvalid);
  double* val(std::uint32_t id) { return vals_.data() + nodes_[id].offset; }
  const double* val(std::uint32_t id) const { return vals_.data() + nodes_[id].offset; }
  double* grd(std::uint32_t id) { return grads_.data() + nodes_[id].offset; }
  bool tracked(std::uint32_t id) const { return nodes_[id].needs_grad; }
  void backprop(std::uint32_t id);

  std::vector<Node> nodes_;
  std::vector<double> vals_;
  std::vector<double> grads_;
  std::vector<std::uint32_t> links_;
  std::vector<int> ints_;
};

}  // namespace pfednav::ad
