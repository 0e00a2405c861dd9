// Copyright 2026 The RAM-CbR Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode automatic differentiation over dense rank-2 float64
// matrices. Vectors are 1 x n rows.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

namespace ram {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Single PRNG type for every stochastic node (dropout, Gumbel noise,
/// Bernoulli draws, samplers, shuffles, initialization).
using Rng = std::mt19937_64;

/// Uniform double in the open interval (0, 1), identical on every platform.
inline double uniform01(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) {
      throw DimensionError("Matrix: " + std::to_string(values_.size()) +
                           " values for shape [" + std::to_string(rows_) + "x" +
                           std::to_string(cols_) + "]");
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix row_vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Matrix(1, n, std::move(values));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  std::vector<std::size_t> shape() const { return {rows_, cols_}; }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> data() { return values_; }
  std::span<const double> data() const { return values_; }
  const std::vector<double>& values() const { return values_; }

  std::string shape_string() const {
    return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
  }

  void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

  Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

/// Bit-level equality, distinguishing -0.0 from 0.0 and matching NaN payloads.
inline bool bitwise_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a.size() == 0 ||
          std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0);
}

inline bool all_finite(const Matrix& m) {
  return std::all_of(m.data().begin(), m.data().end(),
                     [](double v) { return std::isfinite(v); });
}

namespace detail {

// c (+)= op(a) * op(b), row-major, no aliasing.
inline void gemm(const Matrix& a, bool ta, const Matrix& b, bool tb, Matrix& c) {
  const std::size_t m = ta ? a.cols() : a.rows();
  const std::size_t k = ta ? a.rows() : a.cols();
  const std::size_t n = tb ? b.rows() : b.cols();
  const double* ap = a.data().data();
  const double* bp = b.data().data();
  double* cp = c.data().data();
  const std::size_t lda = a.cols();
  const std::size_t ldb = b.cols();
  if (!ta && !tb) {
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = cp + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ap[i * lda + p];
        if (av == 0.0) continue;
        const double* brow = bp + p * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!ta && tb) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = ap + i * lda;
      for (std::size_t j = 0; j < n; ++j) {
        const double* brow = bp + j * ldb;
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
        cp[i * n + j] += s;
      }
    }
  } else if (ta && !tb) {
    for (std::size_t p = 0; p < k; ++p) {
      const double* arow = ap + p * lda;
      const double* brow = bp + p * ldb;
      for (std::size_t i = 0; i < m; ++i) {
        const double av = arow[i];
        if (av == 0.0) continue;
        double* crow = cp + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += ap[p * lda + i] * bp[j * ldb + p];
        cp[i * n + j] += s;
      }
  }
}

inline std::uint64_t next_order() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::uint64_t order = next_order();
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  Matrix& ensure_grad() {
    if (grad.empty() && value.size() != 0) grad = Matrix(value.rows(), value.cols());
    return grad;
  }
};

}  // namespace detail

/// Differentiable handle: a value matrix plus lazily allocated gradient.
/// Copies share the same node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() { return node_->ensure_grad(); }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.fill(0.0);
  }

  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  std::vector<std::size_t> shape() const { return node_->value.shape(); }
  double item() const { return node_->value[0]; }
  double at(std::size_t r, std::size_t c) const { return node_->value(r, c); }
  std::string_view op() const { return node_->op; }

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

inline Tensor constant(Matrix value) { return Tensor(std::move(value), false); }
inline Tensor parameter(Matrix value) { return Tensor(std::move(value), true); }

namespace detail {

inline Tensor make_op(Matrix value, std::string_view op, std::vector<Tensor> inputs,
                      std::function<void(Node&)> backward_fn) {
  Tensor out(std::move(value), false);
  auto& n = *out.node();
  n.op = op;
  bool any = false;
  n.inputs.reserve(inputs.size());
  for (auto& in : inputs) {
    any = any || in.requires_grad();
    n.inputs.push_back(in.node());
  }
  n.requires_grad = any;
  if (any) n.backward_fn = std::move(backward_fn);
  return out;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.value().shape_string() +
                         " vs " + b.value().shape_string());
  }
}

inline bool wants(const Node& n, std::size_t i) { return n.inputs[i]->requires_grad; }
inline Matrix& in_grad(Node& n, std::size_t i) { return n.inputs[i]->ensure_grad(); }
inline const Matrix& in_value(const Node& n, std::size_t i) { return n.inputs[i]->value; }

}  // namespace detail

/// Runs reverse-mode accumulation from a 1x1 root. Nodes are visited in
/// strictly decreasing creation order.
inline void backward(const Tensor& root) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw DimensionError("backward: root must be 1x1, got " + root.value().shape_string());
  }
  if (!root.requires_grad()) return;
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{root.node().get()};
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    order.push_back(n);
    for (auto& in : n->inputs)
      if (in->requires_grad && !seen.count(in.get())) stack.push_back(in.get());
  }
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->order > b->order; });
  root.node()->ensure_grad()[0] += 1.0;
  for (detail::Node* n : order)
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
}

/// True when `leaf`'s node is reachable from `out` through op inputs.
inline bool depends_on(const Tensor& out, const Tensor& leaf) {
  std::unordered_set<const detail::Node*> seen;
  std::vector<const detail::Node*> stack{out.node().get()};
  while (!stack.empty()) {
    const detail::Node* n = stack.back();
    stack.pop_back();
    if (n == leaf.node().get()) return true;
    if (!seen.insert(n).second) continue;
    for (auto& in : n->inputs) stack.push_back(in.get());
  }
  return false;
}

// ---------------------------------------------------------------------------
// Linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + a.value().shape_string() +
                         " x " + b.value().shape_string());
  }
  Matrix out(a.rows(), b.cols());
  detail::gemm(a.value(), false, b.value(), false, out);
  return detail::make_op(std::move(out), "matmul", {a, b}, [](detail::Node& n) {
    if (detail::wants(n, 0)) detail::gemm(n.grad, false, detail::in_value(n, 1), true, detail::in_grad(n, 0));
    if (detail::wants(n, 1)) detail::gemm(detail::in_value(n, 0), true, n.grad, false, detail::in_grad(n, 1));
  });
}

/// a * b^T without materializing the transpose.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: inner dimensions differ, " + a.value().shape_string() +
                         " x " + b.value().shape_string() + "^T");
  }
  Matrix out(a.rows(), b.rows());
  detail::gemm(a.value(), false, b.value(), true, out);
  return detail::make_op(std::move(out), "matmul_nt", {a, b}, [](detail::Node& n) {
    if (detail::wants(n, 0)) detail::gemm(n.grad, false, detail::in_value(n, 1), false, detail::in_grad(n, 0));
    if (detail::wants(n, 1)) detail::gemm(n.grad, true, detail::in_value(n, 0), false, detail::in_grad(n, 1));
  });
}

inline Tensor transpose(const Tensor& a) {
  return detail::make_op(a.value().transposed(), "transpose", {a}, [](detail::Node& n) {
    Matrix& g = detail::in_grad(n, 0);
    for (std::size_t r = 0; r < n.grad.rows(); ++r)
      for (std::size_t c = 0; c < n.grad.cols(); ++c) g(c, r) += n.grad(r, c);
  });
}

// ---------------------------------------------------------------------------
// Elementwise

enum class ElementwiseKind { kMul, kAdd, kConcatLastAxis };

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return detail::make_op(std::move(out), "add", {a, b}, [](detail::Node& n) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!detail::wants(n, k)) continue;
      Matrix& g = detail::in_grad(n, k);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return detail::make_op(std::move(out), "sub", {a, b}, [](detail::Node& n) {
    if (detail::wants(n, 0)) {
      Matrix& g = detail::in_grad(n, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (detail::wants(n, 1)) {
      Matrix& g = detail::in_grad(n, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return detail::make_op(std::move(out), "mul", {a, b}, [](detail::Node& n) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!detail::wants(n, k)) continue;
      const Matrix& other = detail::in_value(n, 1 - k);
      Matrix& g = detail::in_grad(n, k);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * other[i];
    }
  });
}

/// Adds a 1 x n row to every row of an m x n matrix.
inline Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError("add_row: cannot broadcast " + row.value().shape_string() + " over " +
                         a.value().shape_string());
  }
  Matrix out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += row.value()(0, c);
  return detail::make_op(std::move(out), "add_row", {a, row}, [](detail::Node& n) {
    if (detail::wants(n, 0)) {
      Matrix& g = detail::in_grad(n, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (detail::wants(n, 1)) {
      Matrix& g = detail::in_grad(n, 1);
      for (std::size_t r = 0; r < n.grad.rows(); ++r)
        for (std::size_t c = 0; c < n.grad.cols(); ++c) g(0, c) += n.grad(r, c);
    }
  });
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("concat: row counts differ, " + a.value().shape_string() + " vs " +
                         b.value().shape_string());
  }
  const std::size_t ca = a.cols();
  Matrix out(a.rows(), ca + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < ca; ++c) out(r, c) = a.value()(r, c);
    for (std::size_t c = 0; c < b.cols(); ++c) out(r, ca + c) = b.value()(r, c);
  }
  return detail::make_op(std::move(out), "concat", {a, b}, [ca](detail::Node& n) {
    if (detail::wants(n, 0)) {
      Matrix& g = detail::in_grad(n, 0);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < ca; ++c) g(r, c) += n.grad(r, c);
    }
    if (detail::wants(n, 1)) {
      Matrix& g = detail::in_grad(n, 1);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) += n.grad(r, ca + c);
    }
  });
}

inline Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseKind kind) {
  switch (kind) {
    case ElementwiseKind::kMul: return mul(a, b);
    case ElementwiseKind::kAdd: return add(a, b);
    case ElementwiseKind::kConcatLastAxis: return concat_cols(a, b);
  }
  throw std::logic_error("elementwise: unknown kind");
}

/// s * a + c, elementwise.
inline Tensor affine(const Tensor& a, double s, double c = 0.0) {
  Matrix out = a.value();
  for (auto& v : out.data()) v = s * v + c;
  return detail::make_op(std::move(out), "affine", {a}, [s](detail::Node& n) {
    Matrix& g = detail::in_grad(n, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * n.grad[i];
  });
}

inline Tensor scale(const Tensor& a, double s) { return affine(a, s, 0.0); }

/// Multiplies by a fixed 0/1 (or any constant) matrix; no gradient to the mask.
inline Tensor mul_const(const Tensor& a, const Matrix& mask) {
  if (mask.rows() != a.rows() || mask.cols() != a.cols()) {
    throw DimensionError("mul_const: shape mismatch " + a.value().shape_string() + " vs " +
                         mask.shape_string());
  }
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return detail::make_op(std::move(out), "mul_const", {a}, [mask](detail::Node& n) {
    Matrix& g = detail::in_grad(n, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * mask[i];
  });
}

/// Zeroes rows whose flag is false.
inline Tensor mask_rows(const Tensor& a, const std::vector<bool>& row_valid) {
  if (row_valid.size() != a.rows()) {
    throw DimensionError("mask_rows: " + std::to_string(row_valid.size()) + " flags for " +
                         a.value().shape_string());
  }
  Matrix mask(a.rows(), a.cols(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r)
    if (row_valid[r])
      for (std::size_t c = 0; c < a.cols(); ++c) mask(r, c) = 1.0;
  return mul_const(a, mask);
}

// ---------------------------------------------------------------------------
// Slicing and assembly

inline Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
  if (start + count > a.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + "," +
                         std::to_string(start + count) + ") out of " + a.value().shape_string());
  }
  Matrix out(a.rows(), count);
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = a.value()(r, start + c);
  return detail::make_op(std::move(out), "slice_cols", {a}, [start](detail::Node& n) {
    Matrix& g = detail::in_grad(n, 0);
    for (std::size_t r = 0; r < n.grad.rows(); ++r)
      for (std::size_t c = 0; c < n.grad.cols(); ++c) g(r, start + c) += n.grad(r, c);
  });
}

inline Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count) {
  if (start + count > a.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(start) + "," +
                         std::to_string(start + count) + ") out of " + a.value().shape_string());
  }
  const std::size_t w = a.cols();
  Matrix out(count, w);
  std::copy_n(a.value().data().begin() + static_cast<std::ptrdiff_t>(start * w), count * w,
              out.data().begin());
  return detail::make_op(std::move(out), "slice_rows", {a}, [start, w](detail::Node& n) {
    Matrix& g = detail::in_grad(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) g[start * w + i] += n.grad[i];
  });
}

inline Tensor row(const Tensor& a, std::size_t r) { return slice_rows(a, r, 1); }

/// Stacks equal-width tensors vertically.
inline Tensor stack_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("stack_rows: no inputs");
  const std::size_t w = parts.front().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.cols() != w) {
      throw DimensionError("stack_rows: width mismatch " + parts.front().value().shape_string() +
                           " vs " + p.value().shape_string());
    }
    total += p.rows();
  }
  Matrix out(total, w);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(off));
    off += p.value().size();
  }
  return detail::make_op(std::move(out), "stack_rows", parts, [](detail::Node& n) {
    std::size_t o = 0;
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      const std::size_t sz = n.inputs[k]->value.size();
      if (detail::wants(n, k)) {
        Matrix& g = detail::in_grad(n, k);
        for (std::size_t i = 0; i < sz; ++i) g[i] += n.grad[o + i];
      }
      o += sz;
    }
  });
}

/// Row lookup. Rows for `skip_id` come out zero and receive no gradient.
inline Tensor gather_rows(const Tensor& table, const std::vector<int>& ids, int skip_id = -1) {
  const std::size_t w = table.cols();
  Matrix out(ids.size(), w);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= table.rows()) {
      throw IndexError("gather_rows: id " + std::to_string(id) + " outside table of " +
                       std::to_string(table.rows()) + " rows");
    }
    if (id == skip_id) continue;
    for (std::size_t c = 0; c < w; ++c) out(i, c) = table.value()(static_cast<std::size_t>(id), c);
  }
  return detail::make_op(std::move(out), "gather_rows", {table}, [ids, skip_id, w](detail::Node& n) {
    Matrix& g = detail::in_grad(n, 0);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] == skip_id) continue;
      const auto r = static_cast<std::size_t>(ids[i]);
      for (std::size_t c = 0; c < w; ++c) g(r, c) += n.grad(i, c);
    }
  });
}

// ---------------------------------------------------------------------------
// Nonlinearities

enum class NonlinearKind { kSigmoid, kTanh, kRelu };

inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& a) {
  Matrix out = a.value();
  for (auto& v : out.data()) v = stable_sigmoid(v);
  return detail::make_op(std::move(out), "sigmoid", {a}, [](detail::Node& n) {
    Matrix& g = detail::in_grad(n, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * n.value[i] * (1.0 - n.value[i]);
  });
}

inline Tensor tanh(const Tensor& a) {
  Matrix out = a.value();
  for (auto& v : out.data()) v = std::tanh(v);
  return detail::make_op(std::move(out), "tanh", {a}, [](detail::Node& n) {
    Matrix& g = detail::in_grad(n, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * (1.0 - n.value[i] * n.value[i]);
  });
}

inline Tensor relu(const Tensor& a) {
  Matrix out = a.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return detail::make_op(std::move(out), "relu", {a}, [](detail::Node& n) {
    Matrix& g = detail::in_grad(n, 0);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (n.value[i] > 0.0) g[i] += n.grad[i];
  });
}

inline Tensor nonlinear(const Tensor& a, NonlinearKind kind) {
  switch (kind) {
    case NonlinearKind::kSigmoid: return sigmoid(a);
    case NonlinearKind::kTanh: return tanh(a);
    case NonlinearKind::kRelu: return relu(a);
  }
  throw std::logic_error("nonlinear: unknown kind");
}

/// Inverted dropout. Identity when `train` is false or rate is 0.
inline Tensor dropout(const Tensor& a, double rate, bool train, Rng& rng) {
  if (!train || rate <= 0.0) return a;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
  Matrix mask(a.rows(), a.cols());
  const double keep = 1.0 / (1.0 - rate);
  for (auto& m : mask.data()) m = uniform01(rng) < rate ? 0.0 : keep;
  return mul_const(a, mask);
}

// ---------------------------------------------------------------------------
// Softmax

/// Row softmax restricted to valid columns (others get probability 0, as if
/// scored -inf). Rows flagged invalid, or with no valid column, are zero.
inline Tensor masked_row_softmax(const Tensor& a, const std::vector<bool>& col_valid,
                                 const std::vector<bool>& row_valid) {
  if (col_valid.size() != a.cols() || row_valid.size() != a.rows()) {
    throw DimensionError("masked_row_softmax: mask sizes (" + std::to_string(row_valid.size()) +
                         "," + std::to_string(col_valid.size()) + ") for " +
                         a.value().shape_string());
  }
  Matrix out(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    if (!row_valid[r]) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < a.cols(); ++c)
      if (col_valid[c]) mx = std::max(mx, a.value()(r, c));
    if (!std::isfinite(mx)) continue;
    double total = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
      if (!col_valid[c]) continue;
      out(r, c) = std::exp(a.value()(r, c) - mx);
      total += out(r, c);
    }
    for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) /= total;
  }
  return detail::make_op(std::move(out), "row_softmax", {a}, [](detail::Node& n) {
    Matrix& g = detail::in_grad(n, 0);
    for (std::size_t r = 0; r < n.value.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < n.value.cols(); ++c) dot += n.value(r, c) * n.grad(r, c);
      for (std::size_t c = 0; c < n.value.cols(); ++c)
        g(r, c) += n.value(r, c) * (n.grad(r, c) - dot);
    }
  });
}

inline Tensor row_softmax(const Tensor& a) {
  return masked_row_softmax(a, std::vector<bool>(a.cols(), true), std::vector<bool>(a.rows(), true));
}

// ---------------------------------------------------------------------------
// Reductions and losses

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return detail::make_op(Matrix(1, 1, s), "sum", {a}, [](detail::Node& n) {
    Matrix& g = detail::in_grad(n, 0);
    for (auto& v : g.data()) v += n.grad[0];
  });
}

inline Tensor mean(const Tensor& a) {
  if (a.value().size() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

enum class LossKind { kNllSoftmax, kMse };

/// Sum over rows of -log softmax(logits_row)[target_row].
inline Tensor nll_softmax(const Tensor& logits, const std::vector<int>& targets) {
  if (targets.size() != logits.rows()) {
    throw DimensionError("nll_softmax: " + std::to_string(targets.size()) + " targets for " +
                         logits.value().shape_string());
  }
  const std::size_t v = logits.cols();
  Matrix probs(logits.rows(), v);
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const int t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= v) {
      throw IndexError("nll_softmax: target " + std::to_string(t) + " outside vocabulary of " +
                       std::to_string(v));
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < v; ++c) mx = std::max(mx, logits.value()(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < v; ++c) {
      probs(r, c) = std::exp(logits.value()(r, c) - mx);
      z += probs(r, c);
    }
    for (std::size_t c = 0; c < v; ++c) probs(r, c) /= z;
    total += (mx + std::log(z)) - logits.value()(r, static_cast<std::size_t>(t));
  }
  return detail::make_op(Matrix(1, 1, total), "nll_softmax", {logits},
                         [probs = std::move(probs), targets](detail::Node& n) {
                           Matrix& g = detail::in_grad(n, 0);
                           const double up = n.grad[0];
                           for (std::size_t r = 0; r < probs.rows(); ++r) {
                             for (std::size_t c = 0; c < probs.cols(); ++c) g(r, c) += up * probs(r, c);
                             g(r, static_cast<std::size_t>(targets[r])) -= up;
                           }
                         });
}

/// Mean squared difference over entries where `mask` is nonzero (all entries
/// when the mask is empty). Zero when nothing is selected.
inline Tensor mse(const Tensor& a, const Tensor& b, const Matrix& mask = {}) {
  detail::require_same_shape(a, b, "mse");
  if (!mask.empty() && (mask.rows() != a.rows() || mask.cols() != a.cols())) {
    throw DimensionError("mse: mask " + mask.shape_string() + " for " + a.value().shape_string());
  }
  double count = 0.0;
  double total = 0.0;
  Matrix diff(a.rows(), a.cols());
  for (std::size_t i = 0; i < diff.size(); ++i) {
    if (!mask.empty() && mask[i] == 0.0) continue;
    diff[i] = a.value()[i] - b.value()[i];
    total += diff[i] * diff[i];
    count += 1.0;
  }
  const double value = count > 0.0 ? total / count : 0.0;
  return detail::make_op(Matrix(1, 1, value), "mse", {a, b},
                         [diff = std::move(diff), count](detail::Node& n) {
                           if (count == 0.0) return;
                           const double k = 2.0 * n.grad[0] / count;
                           if (detail::wants(n, 0)) {
                             Matrix& g = detail::in_grad(n, 0);
                             for (std::size_t i = 0; i < g.size(); ++i) g[i] += k * diff[i];
                           }
                           if (detail::wants(n, 1)) {
                             Matrix& g = detail::in_grad(n, 1);
                             for (std::size_t i = 0; i < g.size(); ++i) g[i] -= k * diff[i];
                           }
                         });
}

/// Detached copy: same value, no gradient path.
inline Tensor detach(const Tensor& a) { return constant(a.value()); }

// ---------------------------------------------------------------------------
// Finite-difference oracle

struct GradViolation {
  std::size_t tensor = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  std::vector<GradViolation> violations;  // coordinates at or above `report_at`
};

/// Central-difference check of `f` (scalar, deterministic) against the
/// reverse-mode gradient for every entry of every tensor in `xs`.
/// Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
inline GradCheckResult finite_difference_check(const std::function<Tensor()>& f,
                                               std::vector<Tensor> xs, double eps = 1e-4,
                                               double report_at = std::numeric_limits<double>::infinity()) {
  std::vector<bool> previous;
  for (auto& x : xs) {
    previous.push_back(x.requires_grad());
    x.set_requires_grad(true);
    x.zero_grad();
  }
  {
    Tensor y = f();
    backward(y);
  }
  GradCheckResult result;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    Tensor& x = xs[k];
    Matrix analytic = x.has_grad() ? x.grad() : Matrix(x.rows(), x.cols());
    Matrix& v = x.mutable_value();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double orig = v[i];
      v[i] = orig + eps;
      const double fp = f().item();
      v[i] = orig - eps;
      const double fm = f().item();
      v[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double abs_err = std::abs(analytic[i] - numeric);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      result.max_abs_error = std::max(result.max_abs_error, abs_err);
      result.max_rel_error = std::max(result.max_rel_error, abs_err / denom);
      if (abs_err / denom >= report_at) result.violations.push_back({k, i, analytic[i], numeric, abs_err / denom});
      ++result.checked;
    }
  }
  for (std::size_t k = 0; k < xs.size(); ++k) {
    xs[k].zero_grad();
    xs[k].set_requires_grad(previous[k]);
  }
  return result;
}

inline double finite_difference_check(const std::function<Tensor()>& f, const Tensor& x,
                                      double eps = 1e-4) {
  return finite_difference_check(f, std::vector<Tensor>{x}, eps).max_rel_error;
}

}  // namespace ram
