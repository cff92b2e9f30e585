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

#include "pfednav/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pfednav/errors.hpp"

namespace pfednav::ad {
namespace {

std::string dims(std::size_t r, std::size_t c) {
  return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

[[noreturn]] void mismatch(const char* op, std::size_t ar, std::size_t ac,
                           std::size_t br, std::size_t bc) {
  throw ShapeError(std::string(op) + ": shape mismatch " + dims(ar, ac) + " vs " +
                   dims(br, bc));
}

}  // namespace

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw Error("tape: invalid node id");
  return nodes_[v.id];
}

Var Tape::push(Op op, std::size_t rows, std::size_t cols, bool needs_grad,
               std::uint32_t a, std::uint32_t b) {
  Node n;
  n.op = op;
  n.rows = static_cast<std::uint32_t>(rows);
  n.cols = static_cast<std::uint32_t>(cols);
  n.needs_grad = needs_grad;
  n.offset = vals_.size();
  n.a = a;
  n.b = b;
  vals_.resize(vals_.size() + rows * cols);
  nodes_.push_back(n);
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::variable(const Tensor& value) {
  Var v = push(Op::Leaf, value.rows(), value.cols(), true);
  std::copy(value.data().begin(), value.data().end(), val(v.id));
  return v;
}

Var Tape::constant(const Tensor& value) {
  Var v = push(Op::Leaf, value.rows(), value.cols(), false);
  std::copy(value.data().begin(), value.data().end(), val(v.id));
  return v;
}

Var Tape::constant_scalar(double value) {
  Var v = push(Op::Leaf, 1, 1, false);
  *val(v.id) = value;
  return v;
}

Var Tape::matmul(Var a, Var b) {
  const Node na = node(a);
  const Node nb = node(b);
  if (na.cols != nb.rows) mismatch("matmul", na.rows, na.cols, nb.rows, nb.cols);
  Var out = push(Op::MatMul, na.rows, nb.cols, na.needs_grad || nb.needs_grad, a.id, b.id);
  const double* A = val(a.id);
  const double* B = val(b.id);
  double* C = val(out.id);
  const std::size_t n = na.rows, k = na.cols, m = nb.cols;
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = C + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const double* brow = B + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += aip * brow[j];
    }
  }
  return out;
}

Var Tape::add(Var a, Var b) {
  const Node na = node(a);
  const Node nb = node(b);
  if (na.rows != nb.rows || na.cols != nb.cols) mismatch("add", na.rows, na.cols, nb.rows, nb.cols);
  Var out = push(Op::Add, na.rows, na.cols, na.needs_grad || nb.needs_grad, a.id, b.id);
  const double* x = val(a.id);
  const double* y = val(b.id);
  double* z = val(out.id);
  for (std::size_t i = 0, n = std::size_t{na.rows} * na.cols; i < n; ++i) z[i] = x[i] + y[i];
  return out;
}

Var Tape::sub(Var a, Var b) {
  const Node na = node(a);
  const Node nb = node(b);
  if (na.rows != nb.rows || na.cols != nb.cols) mismatch("sub", na.rows, na.cols, nb.rows, nb.cols);
  Var out = push(Op::Sub, na.rows, na.cols, na.needs_grad || nb.needs_grad, a.id, b.id);
  const double* x = val(a.id);
  const double* y = val(b.id);
  double* z = val(out.id);
  for (std::size_t i = 0, n = std::size_t{na.rows} * na.cols; i < n; ++i) z[i] = x[i] - y[i];
  return out;
}

Var Tape::mul(Var a, Var b) {
  const Node na = node(a);
  const Node nb = node(b);
  if (na.rows != nb.rows || na.cols != nb.cols) mismatch("mul", na.rows, na.cols, nb.rows, nb.cols);
  Var out = push(Op::Mul, na.rows, na.cols, na.needs_grad || nb.needs_grad, a.id, b.id);
  const double* x = val(a.id);
  const double* y = val(b.id);
  double* z = val(out.id);
  for (std::size_t i = 0, n = std::size_t{na.rows} * na.cols; i < n; ++i) z[i] = x[i] * y[i];
  return out;
}

Var Tape::tanh(Var x) {
  const Node nx = node(x);
  Var out = push(Op::Tanh, nx.rows, nx.cols, nx.needs_grad, x.id);
  const double* in = val(x.id);
  double* y = val(out.id);
  for (std::size_t i = 0, n = std::size_t{nx.rows} * nx.cols; i < n; ++i) y[i] = std::tanh(in[i]);
  return out;
}

Var Tape::sigmoid(Var x) {
  const Node nx = node(x);
  Var out = push(Op::Sigmoid, nx.rows, nx.cols, nx.needs_grad, x.id);
  const double* in = val(x.id);
  double* y = val(out.id);
  for (std::size_t i = 0, n = std::size_t{nx.rows} * nx.cols; i < n; ++i) {
    const double v = in[i];
    // Split by sign so exp never overflows.
    if (v >= 0) {
      y[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      y[i] = e / (1.0 + e);
    }
  }
  return out;
}

Var Tape::softmax(Var x) {
  const Node nx = node(x);
  Var out = push(Op::Softmax, nx.rows, nx.cols, nx.needs_grad, x.id);
  const double* in = val(x.id);
  double* y = val(out.id);
  const std::size_t c = nx.cols;
  for (std::size_t r = 0; r < nx.rows; ++r) {
    const double* row = in + r * c;
    double* orow = y + r * c;
    const double mx = *std::max_element(row, row + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      orow[j] = std::exp(row[j] - mx);
      total += orow[j];
    }
    for (std::size_t j = 0; j < c; ++j) orow[j] /= total;
  }
  return out;
}

Var Tape::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = node(parts[0]).rows;
  std::size_t cols = 0;
  bool needs = false;
  for (Var p : parts) {
    const Node& n = node(p);
    if (n.rows != rows) mismatch("concat_cols", rows, node(parts[0]).cols, n.rows, n.cols);
    cols += n.cols;
    needs = needs || n.needs_grad;
  }
  const auto begin = static_cast<std::uint32_t>(links_.size());
  for (Var p : parts) links_.push_back(p.id);
  Var out = push(Op::ConcatCols, rows, cols, needs);
  nodes_[out.id].extra_begin = begin;
  nodes_[out.id].extra_count = static_cast<std::uint32_t>(parts.size());
  double* y = val(out.id);
  std::size_t col0 = 0;
  for (Var p : parts) {
    const Node& n = nodes_[p.id];
    const double* in = val(p.id);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(in + r * n.cols, in + (r + 1) * n.cols, y + r * cols + col0);
    }
    col0 += n.cols;
  }
  return out;
}

Var Tape::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = node(parts[0]).cols;
  std::size_t rows = 0;
  bool needs = false;
  for (Var p : parts) {
    const Node& n = node(p);
    if (n.cols != cols) mismatch("concat_rows", node(parts[0]).rows, cols, n.rows, n.cols);
    rows += n.rows;
    needs = needs || n.needs_grad;
  }
  const auto begin = static_cast<std::uint32_t>(links_.size());
  for (Var p : parts) links_.push_back(p.id);
  Var out = push(Op::ConcatRows, rows, cols, needs);
  nodes_[out.id].extra_begin = begin;
  nodes_[out.id].extra_count = static_cast<std::uint32_t>(parts.size());
  double* y = val(out.id);
  for (Var p : parts) {
    const Node& n = nodes_[p.id];
    const double* in = val(p.id);
    y = std::copy(in, in + std::size_t{n.rows} * n.cols, y);
  }
  return out;
}

Var Tape::gather_rows(Var table, std::span<const int> rows) {
  const Node nt = node(table);
  if (rows.empty()) throw ShapeError("gather_rows: no indices");
  for (int r : rows) {
    if (r < 0 || static_cast<std::uint32_t>(r) >= nt.rows) {
      throw ShapeError("gather_rows: index " + std::to_string(r) + " outside table " +
                       dims(nt.rows, nt.cols));
    }
  }
  const auto begin = static_cast<std::uint32_t>(ints_.size());
  ints_.insert(ints_.end(), rows.begin(), rows.end());
  Var out = push(Op::GatherRows, rows.size(), nt.cols, nt.needs_grad, table.id);
  nodes_[out.id].extra_begin = begin;
  nodes_[out.id].extra_count = static_cast<std::uint32_t>(rows.size());
  const double* in = val(table.id);
  double* y = val(out.id);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double* src = in + static_cast<std::size_t>(rows[i]) * nt.cols;
    std::copy(src, src + nt.cols, y + i * nt.cols);
  }
  return out;
}

Var Tape::sum(Var x) {
  const Node nx = node(x);
  Var out = push(Op::Sum, 1, 1, nx.needs_grad, x.id);
  const double* in = val(x.id);
  double total = 0.0;
  for (std::size_t i = 0, n = std::size_t{nx.rows} * nx.cols; i < n; ++i) total += in[i];
  *val(out.id) = total;
  return out;
}

Var Tape::mean(Var x) {
  const Node nx = node(x);
  Var out = push(Op::Mean, 1, 1, nx.needs_grad, x.id);
  const double* in = val(x.id);
  const std::size_t n = std::size_t{nx.rows} * nx.cols;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += in[i];
  *val(out.id) = total / static_cast<double>(n);
  return out;
}

Var Tape::scale(Var x, double k) {
  const Node nx = node(x);
  Var out = push(Op::Scale, nx.rows, nx.cols, nx.needs_grad, x.id);
  nodes_[out.id].k = k;
  const double* in = val(x.id);
  double* y = val(out.id);
  for (std::size_t i = 0, n = std::size_t{nx.rows} * nx.cols; i < n; ++i) y[i] = k * in[i];
  return out;
}

Var Tape::scale_by(Var x, Var s) {
  const Node nx = node(x);
  const Node ns = node(s);
  if (ns.rows != 1 || ns.cols != 1) mismatch("scale_by", nx.rows, nx.cols, ns.rows, ns.cols);
  Var out = push(Op::ScaleBy, nx.rows, nx.cols, nx.needs_grad || ns.needs_grad, x.id, s.id);
  const double k = *val(s.id);
  const double* in = val(x.id);
  double* y = val(out.id);
  for (std::size_t i = 0, n = std::size_t{nx.rows} * nx.cols; i < n; ++i) y[i] = k * in[i];
  return out;
}

Var Tape::transpose(Var x) {
  const Node nx = node(x);
  Var out = push(Op::Transpose, nx.cols, nx.rows, nx.needs_grad, x.id);
  const double* in = val(x.id);
  double* y = val(out.id);
  for (std::size_t r = 0; r < nx.rows; ++r) {
    for (std::size_t c = 0; c < nx.cols; ++c) y[c * nx.rows + r] = in[r * nx.cols + c];
  }
  return out;
}

Var Tape::cross_entropy(Var logits, std::span<const int> targets) {
  const Node nl = node(logits);
  if (targets.size() != nl.rows) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) +
                     " targets for logits " + dims(nl.rows, nl.cols));
  }
  for (int t : targets) {
    if (t >= static_cast<int>(nl.cols)) {
      throw ShapeError("cross_entropy: target " + std::to_string(t) + " outside logits " +
                       dims(nl.rows, nl.cols));
    }
  }
  const auto begin = static_cast<std::uint32_t>(ints_.size());
  ints_.insert(ints_.end(), targets.begin(), targets.end());
  Var out = push(Op::CrossEntropy, 1, 1, nl.needs_grad, logits.id);
  nodes_[out.id].extra_begin = begin;
  nodes_[out.id].extra_count = static_cast<std::uint32_t>(targets.size());
  const double* in = val(logits.id);
  const std::size_t c = nl.cols;
  double total = 0.0;
  std::size_t active = 0;
  for (std::size_t r = 0; r < nl.rows; ++r) {
    if (targets[r] < 0) continue;
    const double* row = in + r * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    total += mx + std::log(z) - row[targets[r]];
    ++active;
  }
  nodes_[out.id].k = static_cast<double>(active);
  *val(out.id) = active ? total / static_cast<double>(active) : 0.0;
  return out;
}

Var Tape::detach(Var x) {
  const Node nx = node(x);
  Var out = push(Op::Leaf, nx.rows, nx.cols, false);
  const double* in = val(x.id);
  std::copy(in, in + std::size_t{nx.rows} * nx.cols, val(out.id));
  return out;
}

std::span<const double> Tape::value(Var v) const {
  const Node& n = node(v);
  return {vals_.data() + n.offset, std::size_t{n.rows} * n.cols};
}

Tensor Tape::value_tensor(Var v) const {
  const Node& n = node(v);
  auto s = value(v);
  return Tensor({n.rows, n.cols}, std::vector<double>(s.begin(), s.end()));
}

double Tape::scalar(Var v) const {
  const Node& n = node(v);
  if (n.rows != 1 || n.cols != 1) throw ShapeError("scalar: node is " + dims(n.rows, n.cols));
  return vals_[n.offset];
}

std::span<const double> Tape::grad_span(Var v) const {
  const Node& n = node(v);
  if (grads_.size() < vals_.size()) throw Error("tape: backward() has not run");
  return {grads_.data() + n.offset, std::size_t{n.rows} * n.cols};
}

Tensor Tape::grad(Var v) const {
  const Node& n = node(v);
  if (grads_.size() < vals_.size()) return Tensor({n.rows, n.cols}, 0.0);
  auto s = grad_span(v);
  return Tensor({n.rows, n.cols}, std::vector<double>(s.begin(), s.end()));
}

void Tape::clear() {
  nodes_.clear();
  vals_.clear();
  grads_.clear();
  links_.clear();
  ints_.clear();
}

void Tape::backward(Var loss) {
  const Node& nl = node(loss);
  if (nl.rows != 1 || nl.cols != 1) {
    throw ShapeError("backward: loss must be scalar, got " + dims(nl.rows, nl.cols));
  }
  grads_.assign(vals_.size(), 0.0);
  if (!nl.needs_grad) return;
  grads_[nl.offset] = 1.0;
  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    if (nodes_[id].needs_grad && nodes_[id].op != Op::Leaf) backprop(id);
  }
}

void Tape::backprop(std::uint32_t id) {
  const Node n = nodes_[id];
  const std::size_t count = std::size_t{n.rows} * n.cols;
  const double* g = grads_.data() + n.offset;
  const double* y = vals_.data() + n.offset;
  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::MatMul: {
      const Node& na = nodes_[n.a];
      const std::size_t rows = na.rows, inner = na.cols, cols = n.cols;
      const double* A = val(n.a);
      const double* B = val(n.b);
      if (tracked(n.a)) {
        double* dA = grd(n.a);
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t p = 0; p < inner; ++p) {
            const double* brow = B + p * cols;
            const double* grow = g + i * cols;
            double acc = 0.0;
            for (std::size_t j = 0; j < cols; ++j) acc += grow[j] * brow[j];
            dA[i * inner + p] += acc;
          }
        }
      }
      if (tracked(n.b)) {
        double* dB = grd(n.b);
        for (std::size_t i = 0; i < rows; ++i) {
          const double* grow = g + i * cols;
          for (std::size_t p = 0; p < inner; ++p) {
            const double aip = A[i * inner + p];
            double* drow = dB + p * cols;
            for (std::size_t j = 0; j < cols; ++j) drow[j] += aip * grow[j];
          }
        }
      }
      break;
    }
    case Op::Add:
      if (tracked(n.a)) { double* d = grd(n.a); for (std::size_t i = 0; i < count; ++i) d[i] += g[i]; }
      if (tracked(n.b)) { double* d = grd(n.b); for (std::size_t i = 0; i < count; ++i) d[i] += g[i]; }
      break;
    case Op::Sub:
      if (tracked(n.a)) { double* d = grd(n.a); for (std::size_t i = 0; i < count; ++i) d[i] += g[i]; }
      if (tracked(n.b)) { double* d = grd(n.b); for (std::size_t i = 0; i < count; ++i) d[i] -= g[i]; }
      break;
    case Op::Mul: {
      const double* x = val(n.a);
      const double* z = val(n.b);
      if (tracked(n.a)) { double* d = grd(n.a); for (std::size_t i = 0; i < count; ++i) d[i] += g[i] * z[i]; }
      if (tracked(n.b)) { double* d = grd(n.b); for (std::size_t i = 0; i < count; ++i) d[i] += g[i] * x[i]; }
      break;
    }
    case Op::Tanh: {
      double* d = grd(n.a);
      for (std::size_t i = 0; i < count; ++i) d[i] += g[i] * (1.0 - y[i] * y[i]);
      break;
    }
    case Op::Sigmoid: {
      double* d = grd(n.a);
      for (std::size_t i = 0; i < count; ++i) d[i] += g[i] * y[i] * (1.0 - y[i]);
      break;
    }
    case Op::Softmax: {
      double* d = grd(n.a);
      for (std::size_t r = 0; r < n.rows; ++r) {
        const double* yr = y + r * n.cols;
        const double* gr = g + r * n.cols;
        double dot = 0.0;
        for (std::size_t j = 0; j < n.cols; ++j) dot += gr[j] * yr[j];
        for (std::size_t j = 0; j < n.cols; ++j) d[r * n.cols + j] += yr[j] * (gr[j] - dot);
      }
      break;
    }
    case Op::ConcatCols: {
      std::size_t col0 = 0;
      for (std::uint32_t k = 0; k < n.extra_count; ++k) {
        const std::uint32_t src = links_[n.extra_begin + k];
        const std::size_t w = nodes_[src].cols;
        if (tracked(src)) {
          double* d = grd(src);
          for (std::size_t r = 0; r < n.rows; ++r) {
            for (std::size_t j = 0; j < w; ++j) d[r * w + j] += g[r * n.cols + col0 + j];
          }
        }
        col0 += w;
      }
      break;
    }
    case Op::ConcatRows: {
      std::size_t at = 0;
      for (std::uint32_t k = 0; k < n.extra_count; ++k) {
        const std::uint32_t src = links_[n.extra_begin + k];
        const std::size_t len = std::size_t{nodes_[src].rows} * nodes_[src].cols;
        if (tracked(src)) {
          double* d = grd(src);
          for (std::size_t i = 0; i < len; ++i) d[i] += g[at + i];
        }
        at += len;
      }
      break;
    }
    case Op::GatherRows: {
      double* d = grd(n.a);
      for (std::uint32_t i = 0; i < n.extra_count; ++i) {
        const auto row = static_cast<std::size_t>(ints_[n.extra_begin + i]);
        for (std::size_t j = 0; j < n.cols; ++j) d[row * n.cols + j] += g[i * n.cols + j];
      }
      break;
    }
    case Op::Sum: {
      const Node& na = nodes_[n.a];
      double* d = grd(n.a);
      for (std::size_t i = 0, m = std::size_t{na.rows} * na.cols; i < m; ++i) d[i] += g[0];
      break;
    }
    case Op::Mean: {
      const Node& na = nodes_[n.a];
      const std::size_t m = std::size_t{na.rows} * na.cols;
      const double share = g[0] / static_cast<double>(m);
      double* d = grd(n.a);
      for (std::size_t i = 0; i < m; ++i) d[i] += share;
      break;
    }
    case Op::Scale: {
      double* d = grd(n.a);
      for (std::size_t i = 0; i < count; ++i) d[i] += n.k * g[i];
      break;
    }
    case Op::ScaleBy: {
      const double* x = val(n.a);
      const double s = *val(n.b);
      if (tracked(n.a)) { double* d = grd(n.a); for (std::size_t i = 0; i < count; ++i) d[i] += s * g[i]; }
      if (tracked(n.b)) {
        double acc = 0.0;
        for (std::size_t i = 0; i < count; ++i) acc += g[i] * x[i];
        *grd(n.b) += acc;
      }
      break;
    }
    case Op::Transpose: {
      double* d = grd(n.a);
      // n is cols x rows of the input.
      for (std::size_t r = 0; r < n.rows; ++r) {
        for (std::size_t c = 0; c < n.cols; ++c) d[c * n.rows + r] += g[r * n.cols + c];
      }
      break;
    }
    case Op::CrossEntropy: {
      if (n.k == 0.0) break;
      const Node& na = nodes_[n.a];
      const double* in = val(n.a);
      double* d = grd(n.a);
      const double share = g[0] / n.k;
      const std::size_t c = na.cols;
      for (std::size_t r = 0; r < na.rows; ++r) {
        const int t = ints_[n.extra_begin + r];
        if (t < 0) continue;
        const double* row = in + r * c;
        const double mx = *std::max_element(row, row + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
        for (std::size_t j = 0; j < c; ++j) {
          const double p = std::exp(row[j] - mx) / z;
          d[r * c + j] += share * (p - (static_cast<int>(j) == t ? 1.0 : 0.0));
        }
      }
      break;
    }
  }
}

}  // namespace pfednav::ad
