/*
 * Copyright 2026 The vgsum Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Dense tensors with define-by-run reverse-mode differentiation.
//
// A tensor is a cheap handle onto a graph node. Values live in a row-major
// Eigen matrix whose column count is the last extent and whose row count is
// the product of the leading extents, so every op can work on 2-D views.
// Ops record their parents and a backward closure only while gradient
// recording is enabled on the calling thread and some operand requires grad.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vgsum/errors.hpp"

namespace vgsum {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Attention-style keep mask: true entries participate, false entries are excluded.
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

inline Index shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

namespace detail {

inline thread_local bool grad_recording = true;

template <typename Scalar>
struct Node {
  using Matrix = RowMatrix<Scalar>;

  Shape shape;
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }

  Matrix& ensure_grad() {
    if (grad.size() == 0) grad = Matrix::Zero(value.rows(), value.cols());
    return grad;
  }
};

inline void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor rank must be at least 1");
  for (Index e : shape)
    if (e <= 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
}

}  // namespace detail

/// True while ops on this thread record a backward graph.
inline bool grad_enabled() { return detail::grad_recording; }

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_recording) { detail::grad_recording = false; }
  ~NoGradGuard() { detail::grad_recording = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename Scalar>
class BasicTensor {
 public:
  using Matrix = RowMatrix<Scalar>;
  using NodePtr = std::shared_ptr<detail::Node<Scalar>>;

  BasicTensor() = default;

  /// Wraps a matrix; shape defaults to {rows, cols}.
  explicit BasicTensor(Matrix value, bool requires_grad = false) {
    Shape shape{value.rows(), value.cols()};
    init(std::move(shape), std::move(value), requires_grad);
  }

  BasicTensor(Shape shape, Matrix value, bool requires_grad = false) {
    init(std::move(shape), std::move(value), requires_grad);
  }

  static BasicTensor zeros(const Shape& shape) { return full(shape, Scalar(0)); }
  static BasicTensor ones(const Shape& shape) { return full(shape, Scalar(1)); }
  static BasicTensor full(const Shape& shape, Scalar v) {
    detail::check_shape(shape);
    return BasicTensor(shape, Matrix::Constant(shape_numel(shape) / shape.back(), shape.back(), v));
  }
  static BasicTensor scalar(Scalar v) { return full({1}, v); }
  static BasicTensor from_values(const Shape& shape, std::span<const Scalar> values) {
    detail::check_shape(shape);
    if (static_cast<Index>(values.size()) != shape_numel(shape))
      throw ShapeError("expected " + std::to_string(shape_numel(shape)) + " values for " +
                       shape_string(shape) + ", got " + std::to_string(values.size()));
    Matrix m = Eigen::Map<const Matrix>(values.data(), shape_numel(shape) / shape.back(), shape.back());
    return BasicTensor(shape, std::move(m));
  }
  static BasicTensor from_values(const Shape& shape, std::initializer_list<Scalar> values) {
    return from_values(shape, std::span<const Scalar>(values.begin(), values.size()));
  }
  template <typename Engine>
  static BasicTensor randn(const Shape& shape, Engine& rng, Scalar stddev = Scalar(1)) {
    detail::check_shape(shape);
    std::normal_distribution<Scalar> dist(Scalar(0), stddev);
    Matrix m(shape_numel(shape) / shape.back(), shape.back());
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return BasicTensor(shape, std::move(m));
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  Index numel() const { return node_->value.size(); }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index dim(Index axis) const { return node_->shape.at(static_cast<std::size_t>(axis)); }

  const Matrix& value() const { return node_->value; }
  /// Direct write access for optimizers and finite-difference probes.
  Matrix& mutable_value() { return node_->value; }
  Scalar item() const {
    if (numel() != 1) throw ContractError("item() needs a single-element tensor, got " + shape_string(shape()));
    return node_->value(0, 0);
  }
  Scalar at(Index flat) const { return node_->value.data()[flat]; }
  std::vector<Scalar> to_vector() const {
    return std::vector<Scalar>(node_->value.data(), node_->value.data() + numel());
  }

  bool requires_grad() const { return node_->requires_grad; }
  BasicTensor& set_requires_grad(bool on) {
    node_->requires_grad = on;
    return *this;
  }
  bool has_grad() const { return node_->grad.size() != 0; }
  /// Accumulated gradient; zeros when nothing has been accumulated yet.
  Matrix grad() const {
    return has_grad() ? node_->grad : Matrix::Zero(node_->value.rows(), node_->value.cols());
  }
  Matrix& mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.resize(0, 0); }

  /// Same values, cut from the graph.
  BasicTensor detach() const { return BasicTensor(shape(), node_->value); }
  const char* op_name() const { return node_->op; }

  const NodePtr& node() const { return node_; }
  explicit BasicTensor(NodePtr node) : node_(std::move(node)) {}

 private:
  void init(Shape shape, Matrix value, bool requires_grad) {
    detail::check_shape(shape);
    const Index cols = shape.back();
    const Index rows = shape_numel(shape) / cols;
    if (value.rows() * value.cols() != rows * cols)
      throw ShapeError("value has " + std::to_string(value.size()) + " entries, shape " +
                       shape_string(shape) + " needs " + std::to_string(rows * cols));
    if (value.rows() != rows) value = Eigen::Map<Matrix>(value.data(), rows, cols).eval();
    if (!value.allFinite()) throw NumericError("tensor initialized with non-finite values");
    node_ = std::make_shared<detail::Node<Scalar>>();
    node_->shape = std::move(shape);
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  NodePtr node_;
};

using Tensor = BasicTensor<double>;

/// Builds an op result. `backward(self)` reads `self.grad` and pushes into
/// `self.parents[i]->ensure_grad()` for parents that require grad.
template <typename Scalar, typename Backward>
BasicTensor<Scalar> make_op(const char* op, Shape shape, RowMatrix<Scalar> value,
                            std::initializer_list<BasicTensor<Scalar>> parents, Backward&& backward) {
  detail::check_shape(shape);
  if (!value.allFinite()) throw NumericError(std::string(op) + " produced non-finite values");
  auto node = std::make_shared<detail::Node<Scalar>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (any && grad_enabled()) {
    node->requires_grad = true;
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::forward<Backward>(backward);
  }
  return BasicTensor<Scalar>(std::move(node));
}

template <typename Scalar>
BasicTensor<Scalar> make_op(const char* op, Shape shape, RowMatrix<Scalar> value,
                            const std::vector<BasicTensor<Scalar>>& parents,
                            std::function<void(detail::Node<Scalar>&)> backward) {
  detail::check_shape(shape);
  if (!value.allFinite()) throw NumericError(std::string(op) + " produced non-finite values");
  auto node = std::make_shared<detail::Node<Scalar>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (any && grad_enabled()) {
    node->requires_grad = true;
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return BasicTensor<Scalar>(std::move(node));
}

namespace detail {

template <typename Scalar>
inline bool wants(const Node<Scalar>& self, std::size_t i) {
  return self.parents[i]->requires_grad;
}

template <typename Scalar>
Shape with_last(Shape shape, Index last) {
  shape.back() = last;
  return shape;
}

}  // namespace detail

/// Propagates d(loss)/d(node) to every ancestor that requires grad.
/// Leaf gradients accumulate across calls; intermediate buffers are reset.
template <typename Scalar>
void backward(const BasicTensor<Scalar>& loss) {
  if (loss.numel() != 1)
    throw ContractError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  if (!loss.requires_grad()) return;

  using NodeT = detail::Node<Scalar>;
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> seen;
  std::vector<std::pair<NodeT*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      NodeT* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (NodeT* n : order)
    if (!n->is_leaf()) n->grad.resize(0, 0);
  loss.node()->ensure_grad()(0, 0) += Scalar(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* n = *it;
    if (n->is_leaf() || n->grad.size() == 0) continue;
    n->backward(*n);
  }
}

// ---------------------------------------------------------------------------
// Linear algebra

template <typename Scalar>
BasicTensor<Scalar> matmul(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw ShapeError("matmul: cannot multiply " + shape_string(a.shape()) + " by " + shape_string(b.shape()));
  RowMatrix<Scalar> out = a.value() * b.value();
  return make_op<Scalar>("matmul", Shape{a.rows(), b.cols()}, std::move(out), {a, b},
                         [](detail::Node<Scalar>& self) {
                           auto& pa = *self.parents[0];
                           auto& pb = *self.parents[1];
                           if (pa.requires_grad) pa.ensure_grad().noalias() += self.grad * pb.value.transpose();
                           if (pb.requires_grad) pb.ensure_grad().noalias() += pa.value.transpose() * self.grad;
                         });
}

/// a · bᵀ without materializing the transpose as a separate node.
template <typename Scalar>
BasicTensor<Scalar> matmul_nt(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols())
    throw ShapeError("matmul_nt: cannot multiply " + shape_string(a.shape()) + " by transpose of " +
                     shape_string(b.shape()));
  RowMatrix<Scalar> out = a.value() * b.value().transpose();
  return make_op<Scalar>("matmul_nt", Shape{a.rows(), b.rows()}, std::move(out), {a, b},
                         [](detail::Node<Scalar>& self) {
                           auto& pa = *self.parents[0];
                           auto& pb = *self.parents[1];
                           if (pa.requires_grad) pa.ensure_grad().noalias() += self.grad * pb.value;
                           if (pb.requires_grad) pb.ensure_grad().noalias() += self.grad.transpose() * pa.value;
                         });
}

template <typename Scalar>
BasicTensor<Scalar> transpose(const BasicTensor<Scalar>& a) {
  if (a.rank() != 2) throw ShapeError("transpose needs rank 2, got " + shape_string(a.shape()));
  RowMatrix<Scalar> out = a.value().transpose();
  return make_op<Scalar>("transpose", Shape{a.cols(), a.rows()}, std::move(out), {a},
                         [](detail::Node<Scalar>& self) {
                           self.parents[0]->ensure_grad() += self.grad.transpose();
                         });
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic. The right operand may also be a vector matching the
// last extent, broadcast across every row.

namespace detail {

enum class Broadcast { Same, Row };

template <typename Scalar>
Broadcast broadcast_kind(const char* op, const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.shape() == b.shape()) return Broadcast::Same;
  if (b.numel() == a.cols() && (b.rank() == 1 || b.rows() == 1)) return Broadcast::Row;
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                   shape_string(b.shape()));
}

}  // namespace detail

template <typename Scalar>
BasicTensor<Scalar> add(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  const auto kind = detail::broadcast_kind("add", a, b);
  RowMatrix<Scalar> out = a.value();
  if (kind == detail::Broadcast::Same)
    out += b.value();
  else
    out.rowwise() += Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(b.value().data(), a.cols());
  return make_op<Scalar>("add", a.shape(), std::move(out), {a, b}, [kind](detail::Node<Scalar>& self) {
    if (detail::wants(self, 0)) self.parents[0]->ensure_grad() += self.grad;
    if (detail::wants(self, 1)) {
      auto& g = self.parents[1]->ensure_grad();
      if (kind == detail::Broadcast::Same)
        g += self.grad;
      else
        Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(g.data(), g.size()) += self.grad.colwise().sum();
    }
  });
}

template <typename Scalar>
BasicTensor<Scalar> sub(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  const auto kind = detail::broadcast_kind("sub", a, b);
  RowMatrix<Scalar> out = a.value();
  if (kind == detail::Broadcast::Same)
    out -= b.value();
  else
    out.rowwise() -= Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(b.value().data(), a.cols());
  return make_op<Scalar>("sub", a.shape(), std::move(out), {a, b}, [kind](detail::Node<Scalar>& self) {
    if (detail::wants(self, 0)) self.parents[0]->ensure_grad() += self.grad;
    if (detail::wants(self, 1)) {
      auto& g = self.parents[1]->ensure_grad();
      if (kind == detail::Broadcast::Same)
        g -= self.grad;
      else
        Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(g.data(), g.size()) -= self.grad.colwise().sum();
    }
  });
}

/// Elementwise (Hadamard) product.
template <typename Scalar>
BasicTensor<Scalar> mul(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  const auto kind = detail::broadcast_kind("mul", a, b);
  using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  RowMatrix<Scalar> out;
  if (kind == detail::Broadcast::Same)
    out = a.value().cwiseProduct(b.value());
  else
    out = (a.value().array().rowwise() * Eigen::Map<const RowVec>(b.value().data(), a.cols()).array()).matrix();
  return make_op<Scalar>("mul", a.shape(), std::move(out), {a, b}, [kind](detail::Node<Scalar>& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (kind == detail::Broadcast::Same) {
      if (detail::wants(self, 0)) self.parents[0]->ensure_grad() += self.grad.cwiseProduct(bv);
      if (detail::wants(self, 1)) self.parents[1]->ensure_grad() += self.grad.cwiseProduct(av);
    } else {
      Eigen::Map<const RowVec> brow(bv.data(), av.cols());
      if (detail::wants(self, 0))
        self.parents[0]->ensure_grad() += (self.grad.array().rowwise() * brow.array()).matrix();
      if (detail::wants(self, 1)) {
        auto& g = self.parents[1]->ensure_grad();
        Eigen::Map<RowVec>(g.data(), g.size()) += self.grad.cwiseProduct(av).colwise().sum();
      }
    }
  });
}

template <typename Scalar>
BasicTensor<Scalar> scale(const BasicTensor<Scalar>& a, Scalar s) {
  RowMatrix<Scalar> out = a.value() * s;
  return make_op<Scalar>("scale", a.shape(), std::move(out), {a}, [s](detail::Node<Scalar>& self) {
    self.parents[0]->ensure_grad() += self.grad * s;
  });
}

/// Multiplies row r of the 2-D view by the constant `factors[r]` (no gradient to the factors).
template <typename Scalar>
BasicTensor<Scalar> scale_rows(const BasicTensor<Scalar>& a, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& factors) {
  if (factors.size() != a.rows())
    throw ShapeError("scale_rows: " + std::to_string(factors.size()) + " factors for " + shape_string(a.shape()));
  RowMatrix<Scalar> out = factors.asDiagonal() * a.value();
  return make_op<Scalar>("scale_rows", a.shape(), std::move(out), {a}, [factors](detail::Node<Scalar>& self) {
    self.parents[0]->ensure_grad() += factors.asDiagonal() * self.grad;
  });
}

template <typename Scalar>
BasicTensor<Scalar> operator+(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) { return add(a, b); }
template <typename Scalar>
BasicTensor<Scalar> operator-(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) { return sub(a, b); }
template <typename Scalar>
BasicTensor<Scalar> operator-(const BasicTensor<Scalar>& a) { return scale(a, Scalar(-1)); }
template <typename Scalar>
BasicTensor<Scalar> operator*(Scalar s, const BasicTensor<Scalar>& a) { return scale(a, s); }
template <typename Scalar>
BasicTensor<Scalar> operator*(const BasicTensor<Scalar>& a, Scalar s) { return scale(a, s); }

// ---------------------------------------------------------------------------
// Reductions

template <typename Scalar>
BasicTensor<Scalar> sum(const BasicTensor<Scalar>& a) {
  RowMatrix<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  return make_op<Scalar>("sum", Shape{1}, std::move(out), {a}, [](detail::Node<Scalar>& self) {
    self.parents[0]->ensure_grad().array() += self.grad(0, 0);
  });
}

template <typename Scalar>
BasicTensor<Scalar> mean(const BasicTensor<Scalar>& a) {
  return scale(sum(a), Scalar(1) / static_cast<Scalar>(a.numel()));
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

/// Exact GELU, x·Φ(x).
template <typename Scalar>
BasicTensor<Scalar> gelu(const BasicTensor<Scalar>& a) {
  const Scalar inv_sqrt2 = Scalar(1) / std::sqrt(Scalar(2));
  RowMatrix<Scalar> out = a.value().unaryExpr([inv_sqrt2](Scalar x) {
    return Scalar(0.5) * x * (Scalar(1) + std::erf(x * inv_sqrt2));
  });
  return make_op<Scalar>("gelu", a.shape(), std::move(out), {a}, [inv_sqrt2](detail::Node<Scalar>& self) {
    const Scalar inv_sqrt2pi = Scalar(1) / std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar>);
    const auto& x = self.parents[0]->value;
    RowMatrix<Scalar> d = x.unaryExpr([&](Scalar v) {
      const Scalar cdf = Scalar(0.5) * (Scalar(1) + std::erf(v * inv_sqrt2));
      const Scalar pdf = inv_sqrt2pi * std::exp(Scalar(-0.5) * v * v);
      return cdf + v * pdf;
    });
    self.parents[0]->ensure_grad() += self.grad.cwiseProduct(d);
  });
}

template <typename Scalar>
BasicTensor<Scalar> sigmoid(const BasicTensor<Scalar>& a) {
  RowMatrix<Scalar> out = a.value().unaryExpr([](Scalar x) {
    if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
    const Scalar e = std::exp(x);
    return e / (Scalar(1) + e);
  });
  return make_op<Scalar>("sigmoid", a.shape(), std::move(out), {a}, [](detail::Node<Scalar>& self) {
    const auto& y = self.value;
    self.parents[0]->ensure_grad().array() += self.grad.array() * y.array() * (Scalar(1) - y.array());
  });
}

/// Inverted dropout: zeroes entries with probability `rate`, rescales survivors.
template <typename Scalar, typename Engine>
BasicTensor<Scalar> dropout(const BasicTensor<Scalar>& a, Scalar rate, Engine& rng) {
  if (rate <= Scalar(0)) return a;
  if (rate >= Scalar(1)) throw ConfigError("dropout rate must be in [0,1)");
  std::bernoulli_distribution keep(1.0 - static_cast<double>(rate));
  const Scalar factor = Scalar(1) / (Scalar(1) - rate);
  RowMatrix<Scalar> m(a.rows(), a.cols());
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = keep(rng) ? factor : Scalar(0);
  RowMatrix<Scalar> out = a.value().cwiseProduct(m);
  return make_op<Scalar>("dropout", a.shape(), std::move(out), {a}, [m = std::move(m)](detail::Node<Scalar>& self) {
    self.parents[0]->ensure_grad() += self.grad.cwiseProduct(m);
  });
}

// ---------------------------------------------------------------------------
// Normalizations

/// Softmax along `axis` (negative values count from the back), max-subtracted.
template <typename Scalar>
BasicTensor<Scalar> softmax(const BasicTensor<Scalar>& x, Index axis = -1) {
  const Index rank = x.rank();
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank)
    throw ShapeError("softmax: axis out of range for " + shape_string(x.shape()));
  const auto& shape = x.shape();
  Index outer = 1, inner = 1;
  for (Index i = 0; i < axis; ++i) outer *= shape[i];
  for (Index i = axis + 1; i < rank; ++i) inner *= shape[i];
  const Index n = shape[axis];

  RowMatrix<Scalar> out(x.rows(), x.cols());
  const Scalar* src = x.value().data();
  Scalar* dst = out.data();
  for (Index o = 0; o < outer; ++o) {
    for (Index in = 0; in < inner; ++in) {
      const Index base = o * n * inner + in;
      Scalar mx = src[base];
      for (Index k = 1; k < n; ++k) mx = std::max(mx, src[base + k * inner]);
      Scalar z = 0;
      for (Index k = 0; k < n; ++k) z += (dst[base + k * inner] = std::exp(src[base + k * inner] - mx));
      for (Index k = 0; k < n; ++k) dst[base + k * inner] /= z;
    }
  }
  return make_op<Scalar>("softmax", shape, std::move(out), {x}, [outer, inner, n](detail::Node<Scalar>& self) {
    auto& g = self.parents[0]->ensure_grad();
    const Scalar* y = self.value.data();
    const Scalar* gy = self.grad.data();
    Scalar* gx = g.data();
    for (Index o = 0; o < outer; ++o) {
      for (Index in = 0; in < inner; ++in) {
        const Index base = o * n * inner + in;
        Scalar dot = 0;
        for (Index k = 0; k < n; ++k) dot += y[base + k * inner] * gy[base + k * inner];
        for (Index k = 0; k < n; ++k) gx[base + k * inner] += y[base + k * inner] * (gy[base + k * inner] - dot);
      }
    }
  });
}

/// Row-wise softmax over the last axis of a 2-D tensor restricted to entries
/// where `keep` is true. Excluded entries get exactly zero weight; a row with
/// nothing kept becomes all zeros.
template <typename Scalar>
BasicTensor<Scalar> masked_softmax(const BasicTensor<Scalar>& x, const Mask& keep) {
  if (x.rank() != 2 || keep.rows() != x.rows() || keep.cols() != x.cols())
    throw ShapeError("masked_softmax: mask " + std::to_string(keep.rows()) + "x" + std::to_string(keep.cols()) +
                     " does not cover " + shape_string(x.shape()));
  RowMatrix<Scalar> out = RowMatrix<Scalar>::Zero(x.rows(), x.cols());
  const auto& v = x.value();
  for (Index r = 0; r < v.rows(); ++r) {
    Scalar mx = -std::numeric_limits<Scalar>::infinity();
    for (Index c = 0; c < v.cols(); ++c)
      if (keep(r, c)) mx = std::max(mx, v(r, c));
    if (!std::isfinite(mx)) continue;
    Scalar z = 0;
    for (Index c = 0; c < v.cols(); ++c)
      if (keep(r, c)) z += (out(r, c) = std::exp(v(r, c) - mx));
    out.row(r) /= z;
  }
  return make_op<Scalar>("masked_softmax", x.shape(), std::move(out), {x}, [](detail::Node<Scalar>& self) {
    const auto& y = self.value;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dots = y.cwiseProduct(self.grad).rowwise().sum();
    self.parents[0]->ensure_grad().array() += y.array() * (self.grad.colwise() - dots).array();
  });
}

/// Standardizes each position over the last axis, then applies gain and bias.
template <typename Scalar>
BasicTensor<Scalar> layer_norm(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& gain,
                               const BasicTensor<Scalar>& bias, Scalar eps = Scalar(1e-5)) {
  const Index d = x.cols();
  if (gain.numel() != d || bias.numel() != d)
    throw ShapeError("layer_norm: last extent of " + shape_string(x.shape()) + " does not match gain " +
                     shape_string(gain.shape()) + " / bias " + shape_string(bias.shape()));
  using ColVec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  const auto& v = x.value();
  ColVec mu = v.rowwise().mean();
  RowMatrix<Scalar> centered = v.colwise() - mu;
  ColVec inv_std = ((centered.array().square().rowwise().sum() / Scalar(d)) + eps).rsqrt().matrix();
  RowMatrix<Scalar> xhat = inv_std.asDiagonal() * centered;
  Eigen::Map<const RowVec> gv(gain.value().data(), d);
  Eigen::Map<const RowVec> bv(bias.value().data(), d);
  RowMatrix<Scalar> out = ((xhat.array().rowwise() * gv.array()).rowwise() + bv.array()).matrix();
  return make_op<Scalar>(
      "layer_norm", x.shape(), std::move(out), {x, gain, bias},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), d](detail::Node<Scalar>& self) {
        const auto& g = self.grad;
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        Eigen::Map<const RowVec> gv(pg.value.data(), d);
        if (px.requires_grad) {
          RowMatrix<Scalar> dxhat = (g.array().rowwise() * gv.array()).matrix();
          ColVec m1 = dxhat.rowwise().mean();
          ColVec m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
          RowMatrix<Scalar> dx = (dxhat.colwise() - m1) - m2.asDiagonal() * xhat;
          px.ensure_grad() += inv_std.asDiagonal() * dx;
        }
        if (pg.requires_grad) {
          auto& gg = pg.ensure_grad();
          Eigen::Map<RowVec>(gg.data(), d) += g.cwiseProduct(xhat).colwise().sum();
        }
        if (pb.requires_grad) {
          auto& gb = pb.ensure_grad();
          Eigen::Map<RowVec>(gb.data(), d) += g.colwise().sum();
        }
      });
}

// ---------------------------------------------------------------------------
// Layout ops

/// Joins operands along the last axis; leading extents must agree.
template <typename Scalar>
BasicTensor<Scalar> concat(const std::vector<BasicTensor<Scalar>>& parts) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  Shape lead = parts.front().shape();
  lead.pop_back();
  Index total = 0;
  std::vector<Index> widths;
  for (const auto& p : parts) {
    Shape pl = p.shape();
    pl.pop_back();
    if (pl != lead)
      throw ShapeError("concat: leading extents differ between " + shape_string(parts.front().shape()) + " and " +
                       shape_string(p.shape()));
    widths.push_back(p.cols());
    total += p.cols();
  }
  const Index rows = parts.front().rows();
  RowMatrix<Scalar> out(rows, total);
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  lead.push_back(total);
  return make_op<Scalar>("concat", std::move(lead), std::move(out), parts,
                         [widths](detail::Node<Scalar>& self) {
                           Index off = 0;
                           for (std::size_t i = 0; i < widths.size(); ++i) {
                             if (self.parents[i]->requires_grad)
                               self.parents[i]->ensure_grad() += self.grad.middleCols(off, widths[i]);
                             off += widths[i];
                           }
                         });
}

template <typename Scalar>
BasicTensor<Scalar> concat(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  return concat(std::vector<BasicTensor<Scalar>>{a, b});
}

/// Columns [start, start+count) of the last axis.
template <typename Scalar>
BasicTensor<Scalar> slice_last(const BasicTensor<Scalar>& a, Index start, Index count) {
  if (start < 0 || count <= 0 || start + count > a.cols())
    throw ShapeError("slice_last: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") out of range for " + shape_string(a.shape()));
  RowMatrix<Scalar> out = a.value().middleCols(start, count);
  return make_op<Scalar>("slice_last", detail::with_last<Scalar>(a.shape(), count), std::move(out), {a},
                         [start, count](detail::Node<Scalar>& self) {
                           self.parents[0]->ensure_grad().middleCols(start, count) += self.grad;
                         });
}

/// Rows `ids` of a 2-D table (embedding lookup); gradients scatter-add back.
template <typename Scalar>
BasicTensor<Scalar> gather_rows(const BasicTensor<Scalar>& table, std::span<const int> ids) {
  if (table.rank() != 2) throw ShapeError("gather_rows: table must be rank 2, got " + shape_string(table.shape()));
  if (ids.empty()) throw ShapeError("gather_rows: no ids");
  std::vector<int> idx(ids.begin(), ids.end());
  RowMatrix<Scalar> out(static_cast<Index>(idx.size()), table.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= table.rows())
      throw ShapeError("gather_rows: id " + std::to_string(idx[i]) + " outside table " + shape_string(table.shape()));
    out.row(static_cast<Index>(i)) = table.value().row(idx[i]);
  }
  Shape shape{static_cast<Index>(idx.size()), table.cols()};
  return make_op<Scalar>("gather_rows", std::move(shape), std::move(out), {table},
                         [idx = std::move(idx)](detail::Node<Scalar>& self) {
                           auto& g = self.parents[0]->ensure_grad();
                           for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Index>(i));
                         });
}

/// Reinterprets the row-major data under a new shape with the same element count.
template <typename Scalar>
BasicTensor<Scalar> reshape(const BasicTensor<Scalar>& a, const Shape& shape) {
  detail::check_shape(shape);
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  const Index cols = shape.back();
  RowMatrix<Scalar> out = Eigen::Map<const RowMatrix<Scalar>>(a.value().data(), a.numel() / cols, cols);
  return make_op<Scalar>("reshape", shape, std::move(out), {a}, [](detail::Node<Scalar>& self) {
    auto& g = self.parents[0]->ensure_grad();
    Eigen::Map<RowMatrix<Scalar>>(g.data(), self.grad.rows(), self.grad.cols()) += self.grad;
  });
}

}  // namespace vgsum
