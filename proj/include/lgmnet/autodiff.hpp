// Copyright 2026 The lgmnet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Tape-based reverse-mode automatic differentiation over small dense
// row-major matrices. Every differentiable op is a free function taking
// Tensor handles and recording a backward rule on the owning Tape.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lgmnet {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Shape = std::vector<std::size_t>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

/// Storage layout of a shape: rank 0 and rank 1 live in a single row.
inline std::pair<Eigen::Index, Eigen::Index> storage_dims(const Shape& shape) {
  if (shape.size() > 2) throw DimensionError("rank > 2 not supported: " + shape_string(shape));
  for (auto extent : shape) {
    if (extent == 0) throw DimensionError("zero extent in shape " + shape_string(shape));
  }
  if (shape.empty()) return {1, 1};
  if (shape.size() == 1) return {1, static_cast<Eigen::Index>(shape[0])};
  return {static_cast<Eigen::Index>(shape[0]), static_cast<Eigen::Index>(shape[1])};
}

template <typename Scalar>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; the tape owns data.
template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;

  const Matrix<Scalar>& value() const { return tape_->node(id_).value; }
  const Shape& shape() const { return tape_->node(id_).shape; }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Eigen::Index size() const { return value().size(); }
  bool requires_grad() const { return tape_->node(id_).requires_grad; }
  bool is_scalar() const { return value().size() == 1; }
  Scalar item() const { return value()(0, 0); }

  /// Populated by Tape::backward for tensors reachable from the loss.
  std::optional<Matrix<Scalar>> grad() const {
    const auto& n = tape_->node(id_);
    if (n.grad.size() == 0) return std::nullopt;
    return n.grad;
  }

  Tape<Scalar>* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape<Scalar>;
  Tensor(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename Scalar>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  struct Node {
    Shape shape;
    Matrix<Scalar> value;
    Matrix<Scalar> grad;  // empty until backward reaches the node
    bool requires_grad = false;
    Backward backward;
    const char* op = "leaf";
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor<Scalar> leaf(Matrix<Scalar> value, bool requires_grad = false) {
    Shape shape{static_cast<std::size_t>(value.rows()), static_cast<std::size_t>(value.cols())};
    return leaf(std::move(shape), std::move(value), requires_grad);
  }

  Tensor<Scalar> leaf(Shape shape, Matrix<Scalar> value, bool requires_grad = false) {
    auto [r, c] = storage_dims(shape);
    if (value.size() != r * c) {
      throw DimensionError("leaf data size " + std::to_string(value.size()) + " does not match shape " +
                           shape_string(shape));
    }
    if (value.rows() != r) value = Eigen::Map<Matrix<Scalar>>(value.data(), r, c).eval();
    nodes_.push_back(Node{std::move(shape), std::move(value), {}, requires_grad, {}, "leaf"});
    return {this, nodes_.size() - 1};
  }

  Tensor<Scalar> scalar(Scalar v, bool requires_grad = false) {
    Matrix<Scalar> m(1, 1);
    m(0, 0) = v;
    return leaf(Shape{}, std::move(m), requires_grad);
  }

  /// Records an op output. The backward rule runs only when the output
  /// requires grad, which holds iff any input does.
  Tensor<Scalar> record(Shape shape, Matrix<Scalar> value, bool requires_grad, Backward backward,
                        const char* op = "op") {
    nodes_.push_back(Node{std::move(shape), std::move(value), {}, requires_grad,
                          requires_grad ? std::move(backward) : Backward{}, op});
    return {this, nodes_.size() - 1};
  }

  /// Adds `delta` to the gradient buffer of `id`, allocating it on first use.
  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& delta) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = delta;
    } else {
      n.grad += delta;
    }
  }

  const Matrix<Scalar>& grad_of(std::size_t id) const { return nodes_[id].grad; }

  void check(const Tensor<Scalar>& t) const {
    if (t.tape() != this || t.id() >= nodes_.size()) throw TapeError("tensor is not on this tape");
  }

  /// Reverse sweep from a scalar loss. Clears previous gradients first so
  /// repeated passes over the same tape produce identical results.
  void backward(const Tensor<Scalar>& loss) {
    check(loss);
    if (!loss.is_scalar()) {
      throw TapeError("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
    }
    for (auto& n : nodes_) n.grad.resize(0, 0);
    if (!nodes_[loss.id()].requires_grad) return;
    nodes_[loss.id()].grad = Matrix<Scalar>::Ones(1, 1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0 || !n.backward) continue;
      n.backward(*this, i);
    }
  }

  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

namespace detail {

template <typename Scalar>
Tape<Scalar>& same_tape(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) throw TapeError("operands live on different tapes");
  return *a.tape();
}

template <typename Scalar>
Tape<Scalar>& tape_of(const Tensor<Scalar>& a) {
  if (a.tape() == nullptr) throw TapeError("tensor is not attached to a tape");
  return *a.tape();
}

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

template <typename Scalar>
bool all_finite(const Matrix<Scalar>& m) {
  return m.array().isFinite().all();
}

}  // namespace detail

enum class Elementwise { kAdd, kSub, kMul, kDiv };

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  auto& tape = detail::same_tape(a, b);
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  Matrix<Scalar> out = a.value() * b.value();
  Shape shape{static_cast<std::size_t>(out.rows()), static_cast<std::size_t>(out.cols())};
  const auto ia = a.id(), ib = b.id();
  return tape.record(std::move(shape), std::move(out), a.requires_grad() || b.requires_grad(),
                     [ia, ib](Tape<Scalar>& t, std::size_t self) {
                       const auto& g = t.grad_of(self);
                       t.accumulate(ia, g * t.node(ib).value.transpose());
                       t.accumulate(ib, t.node(ia).value.transpose() * g);
                     });
}

template <typename Scalar>
Tensor<Scalar> elementwise(const Tensor<Scalar>& a, const Tensor<Scalar>& b, Elementwise kind) {
  auto& tape = detail::same_tape(a, b);
  detail::require_same_shape(a, b, "elementwise");
  const auto& x = a.value().array();
  const auto& y = b.value().array();
  Matrix<Scalar> out;
  switch (kind) {
    case Elementwise::kAdd: out = (x + y).matrix(); break;
    case Elementwise::kSub: out = (x - y).matrix(); break;
    case Elementwise::kMul: out = (x * y).matrix(); break;
    case Elementwise::kDiv: out = (x / y).matrix(); break;
  }
  const auto ia = a.id(), ib = b.id();
  return tape.record(a.shape(), std::move(out), a.requires_grad() || b.requires_grad(),
                     [ia, ib, kind](Tape<Scalar>& t, std::size_t self) {
                       const auto g = t.grad_of(self).array();
                       const auto& x = t.node(ia).value.array();
                       const auto& y = t.node(ib).value.array();
                       switch (kind) {
                         case Elementwise::kAdd:
                           t.accumulate(ia, g.matrix());
                           t.accumulate(ib, g.matrix());
                           break;
                         case Elementwise::kSub:
                           t.accumulate(ia, g.matrix());
                           t.accumulate(ib, (-g).matrix());
                           break;
                         case Elementwise::kMul:
                           t.accumulate(ia, (g * y).matrix());
                           t.accumulate(ib, (g * x).matrix());
                           break;
                         case Elementwise::kDiv: {
                           Matrix<Scalar> da = (g / y).matrix();
                           Matrix<Scalar> db = (-g * x / (y * y)).matrix();
                           if (!detail::all_finite(da) || !detail::all_finite(db)) {
                             throw NonFiniteError("div backward: non-finite gradient (zero denominator?)");
                           }
                           t.accumulate(ia, da);
                           t.accumulate(ib, db);
                           break;
                         }
                       }
                     });
}

/// Tensor-with-scalar form; the scalar is a constant.
template <typename Scalar>
Tensor<Scalar> elementwise(const Tensor<Scalar>& a, Scalar s, Elementwise kind) {
  auto& tape = detail::tape_of(a);
  const auto& x = a.value().array();
  Matrix<Scalar> out;
  Scalar factor = Scalar(1);
  switch (kind) {
    case Elementwise::kAdd: out = (x + s).matrix(); break;
    case Elementwise::kSub: out = (x - s).matrix(); break;
    case Elementwise::kMul: out = (x * s).matrix(); factor = s; break;
    case Elementwise::kDiv:
      out = (x / s).matrix();
      factor = Scalar(1) / s;
      break;
  }
  const auto ia = a.id();
  return tape.record(a.shape(), std::move(out), a.requires_grad(),
                     [ia, factor](Tape<Scalar>& t, std::size_t self) {
                       Matrix<Scalar> d = t.grad_of(self) * factor;
                       if (!detail::all_finite(d)) throw NonFiniteError("scalar div backward: non-finite gradient");
                       t.accumulate(ia, d);
                     });
}

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return elementwise(a, b, Elementwise::kAdd);
}
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return elementwise(a, b, Elementwise::kSub);
}
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return elementwise(a, b, Elementwise::kMul);
}
template <typename Scalar>
Tensor<Scalar> operator/(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return elementwise(a, b, Elementwise::kDiv);
}
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, Scalar s) {
  return elementwise(a, s, Elementwise::kMul);
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& a) {
  auto& tape = detail::tape_of(a);
  Matrix<Scalar> out = a.value().cwiseMax(Scalar(0));
  const auto ia = a.id();
  return tape.record(a.shape(), std::move(out), a.requires_grad(), [ia](Tape<Scalar>& t, std::size_t self) {
    // subgradient 0 at exactly 0
    const auto& x = t.node(ia).value.array();
    t.accumulate(ia, (x > Scalar(0)).select(t.grad_of(self).array(), Scalar(0)).matrix());
  }, "relu");
}

template <typename Scalar>
Scalar softplus(Scalar x) {
  return x > Scalar(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename Scalar>
Scalar logistic(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Tensor<Scalar> softplus(const Tensor<Scalar>& a) {
  auto& tape = detail::tape_of(a);
  Matrix<Scalar> out = a.value().unaryExpr([](Scalar x) { return softplus(x); });
  const auto ia = a.id();
  return tape.record(a.shape(), std::move(out), a.requires_grad(), [ia](Tape<Scalar>& t, std::size_t self) {
    Matrix<Scalar> s = t.node(ia).value.unaryExpr([](Scalar x) { return logistic(x); });
    t.accumulate(ia, t.grad_of(self).cwiseProduct(s));
  });
}

template <typename Scalar>
Tensor<Scalar> exp(const Tensor<Scalar>& a) {
  auto& tape = detail::tape_of(a);
  Matrix<Scalar> out = a.value().array().exp().matrix();
  const auto ia = a.id();
  return tape.record(a.shape(), std::move(out), a.requires_grad(), [ia](Tape<Scalar>& t, std::size_t self) {
    // d/dx e^x = e^x, which is this node's value
    t.accumulate(ia, t.grad_of(self).cwiseProduct(t.node(self).value));
  });
}

/// Mean along `axis` of a rank-2 tensor (0: over rows, 1: over columns);
/// the result is a rank-1 tensor. Rank-1 inputs reduce to a scalar.
template <typename Scalar>
Tensor<Scalar> reduce_mean(const Tensor<Scalar>& a, int axis) {
  auto& tape = detail::tape_of(a);
  const auto rank = a.shape().size();
  if (rank == 0 || static_cast<std::size_t>(axis) >= rank || axis < 0) {
    throw DimensionError("reduce_mean: axis " + std::to_string(axis) + " invalid for shape " +
                         shape_string(a.shape()));
  }
  const auto ia = a.id();
  if (rank == 1) {
    const auto n = a.cols();
    Matrix<Scalar> out(1, 1);
    out(0, 0) = a.value().mean();
    return tape.record(Shape{}, std::move(out), a.requires_grad(), [ia, n](Tape<Scalar>& t, std::size_t self) {
      t.accumulate(ia, Matrix<Scalar>::Constant(1, n, t.grad_of(self)(0, 0) / Scalar(n)));
    });
  }
  const auto rows = a.rows(), cols = a.cols();
  if (axis == 0) {
    Matrix<Scalar> out = a.value().colwise().mean();
    return tape.record(Shape{static_cast<std::size_t>(cols)}, std::move(out), a.requires_grad(),
                       [ia, rows](Tape<Scalar>& t, std::size_t self) {
                         t.accumulate(ia, (t.grad_of(self) / Scalar(rows)).replicate(rows, 1));
                       });
  }
  Matrix<Scalar> out = a.value().rowwise().mean().transpose();
  return tape.record(Shape{static_cast<std::size_t>(rows)}, std::move(out), a.requires_grad(),
                     [ia, cols](Tape<Scalar>& t, std::size_t self) {
                       t.accumulate(ia, (t.grad_of(self).transpose() / Scalar(cols)).replicate(1, cols));
                     });
}

/// Sum of all elements to a scalar.
template <typename Scalar>
Tensor<Scalar> reduce_sum(const Tensor<Scalar>& a) {
  auto& tape = detail::tape_of(a);
  Matrix<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  const auto ia = a.id();
  const auto r = a.rows(), c = a.cols();
  return tape.record(Shape{}, std::move(out), a.requires_grad(), [ia, r, c](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ia, Matrix<Scalar>::Constant(r, c, t.grad_of(self)(0, 0)));
  });
}

/// Divides each row by max(||row||, eps).
template <typename Scalar>
Tensor<Scalar> l2_normalize_rows(const Tensor<Scalar>& a, Scalar eps = Scalar(1e-8)) {
  auto& tape = detail::tape_of(a);
  const Matrix<Scalar>& x = a.value();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> norms = x.rowwise().norm();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> denom = norms.cwiseMax(eps);
  Matrix<Scalar> out = denom.cwiseInverse().asDiagonal() * x;
  const auto ia = a.id();
  return tape.record(a.shape(), std::move(out), a.requires_grad(),
                     [ia, norms, denom, eps](Tape<Scalar>& t, std::size_t self) {
                       const auto& g = t.grad_of(self);
                       const auto& y = t.node(self).value;
                       Matrix<Scalar> dx(g.rows(), g.cols());
                       for (Eigen::Index r = 0; r < g.rows(); ++r) {
                         if (norms(r) > eps) {
                           // (g - y (y.g)) / ||x||
                           const Scalar proj = y.row(r).dot(g.row(r));
                           dx.row(r) = (g.row(r) - proj * y.row(r)) / denom(r);
                         } else {
                           dx.row(r) = g.row(r) / eps;
                         }
                       }
                       t.accumulate(ia, dx);
                     });
}

/// Cosine similarity of two equal-length vectors, eps-guarded norms.
template <typename Scalar>
Tensor<Scalar> cosine_similarity(const Tensor<Scalar>& q, const Tensor<Scalar>& s, Scalar eps = Scalar(1e-8)) {
  auto& tape = detail::same_tape(q, s);
  if (q.size() != s.size() || q.rows() != 1 || s.rows() != 1) {
    throw DimensionError("cosine_similarity: expected equal-length vectors, got " + shape_string(q.shape()) +
                         " and " + shape_string(s.shape()));
  }
  const auto& a = q.value();
  const auto& b = s.value();
  const Scalar na = a.norm(), nb = b.norm();
  const Scalar da = std::max(na, eps), db = std::max(nb, eps);
  const Scalar dot = a.cwiseProduct(b).sum();
  Matrix<Scalar> out(1, 1);
  out(0, 0) = dot / (da * db);
  const auto iq = q.id(), is = s.id();
  return tape.record(Shape{}, std::move(out), q.requires_grad() || s.requires_grad(),
                     [iq, is, na, nb, da, db, dot, eps](Tape<Scalar>& t, std::size_t self) {
                       const Scalar g = t.grad_of(self)(0, 0);
                       const auto& a = t.node(iq).value;
                       const auto& b = t.node(is).value;
                       const Scalar c = dot / (da * db);
                       Matrix<Scalar> ga = b / (da * db);
                       if (na > eps) ga -= c * a / (na * na);
                       Matrix<Scalar> gb = a / (da * db);
                       if (nb > eps) gb -= c * b / (nb * nb);
                       t.accumulate(iq, ga * g);
                       t.accumulate(is, gb * g);
                     });
}

/// Mean over rows of (logsumexp(logits) - <onehot, logits>). A single row
/// (rank-1 input) gives the plain softmax cross-entropy.
template <typename Scalar>
Tensor<Scalar> softmax_cross_entropy(const Tensor<Scalar>& logits, const Tensor<Scalar>& onehot) {
  auto& tape = detail::same_tape(logits, onehot);
  detail::require_same_shape(logits, onehot, "softmax_cross_entropy");
  const auto& z = logits.value();
  if (!detail::all_finite(z)) throw NonFiniteError("softmax_cross_entropy: non-finite logits");
  const auto rows = z.rows();
  Matrix<Scalar> probs(z.rows(), z.cols());
  Scalar total = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Scalar m = z.row(r).maxCoeff();
    const auto shifted = (z.row(r).array() - m).exp();
    const Scalar sum = shifted.sum();
    probs.row(r) = (shifted / sum).matrix();
    total += m + std::log(sum) - z.row(r).dot(onehot.value().row(r));
  }
  Matrix<Scalar> out(1, 1);
  out(0, 0) = total / Scalar(rows);
  const auto il = logits.id(), io = onehot.id();
  return tape.record(Shape{}, std::move(out), logits.requires_grad() || onehot.requires_grad(),
                     [il, io, probs, rows](Tape<Scalar>& t, std::size_t self) {
                       const Scalar g = t.grad_of(self)(0, 0) / Scalar(rows);
                       const auto& y = t.node(io).value;
                       t.accumulate(il, (probs - y) * g);
                       // d/dy of -<y, z>
                       t.accumulate(io, -t.node(il).value * g);
                     });
}

// Structural ops used to wire the model together. These are not part of the
// numeric core but need gradients like everything else.

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& a) {
  auto& tape = detail::tape_of(a);
  if (a.shape().size() != 2) throw DimensionError("transpose: rank-2 tensor expected");
  Matrix<Scalar> out = a.value().transpose();
  const auto ia = a.id();
  return tape.record(Shape{a.shape()[1], a.shape()[0]}, std::move(out), a.requires_grad(),
                     [ia](Tape<Scalar>& t, std::size_t self) { t.accumulate(ia, t.grad_of(self).transpose()); });
}

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& a, Shape shape) {
  auto& tape = detail::tape_of(a);
  if (shape_size(shape) != static_cast<std::size_t>(a.size())) {
    throw DimensionError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  }
  auto [r, c] = storage_dims(shape);
  Matrix<Scalar> out = Eigen::Map<const Matrix<Scalar>>(a.value().data(), r, c);
  const auto ia = a.id();
  const auto ir = a.rows(), ic = a.cols();
  return tape.record(std::move(shape), std::move(out), a.requires_grad(),
                     [ia, ir, ic](Tape<Scalar>& t, std::size_t self) {
                       t.accumulate(ia, Eigen::Map<const Matrix<Scalar>>(t.grad_of(self).data(), ir, ic));
                     });
}

/// Columns [begin, begin + count) of a rank-1 or rank-2 tensor.
template <typename Scalar>
Tensor<Scalar> slice_cols(const Tensor<Scalar>& a, Eigen::Index begin, Eigen::Index count) {
  auto& tape = detail::tape_of(a);
  if (begin < 0 || count <= 0 || begin + count > a.cols()) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of bounds for " + shape_string(a.shape()));
  }
  Shape shape = a.shape();
  shape.back() = static_cast<std::size_t>(count);
  Matrix<Scalar> out = a.value().middleCols(begin, count);
  const auto ia = a.id();
  const auto r = a.rows(), c = a.cols();
  return tape.record(std::move(shape), std::move(out), a.requires_grad(),
                     [ia, r, c, begin, count](Tape<Scalar>& t, std::size_t self) {
                       Matrix<Scalar> d = Matrix<Scalar>::Zero(r, c);
                       d.middleCols(begin, count) = t.grad_of(self);
                       t.accumulate(ia, d);
                     });
}

/// Rows [begin, begin + count) of a rank-2 tensor.
template <typename Scalar>
Tensor<Scalar> slice_rows(const Tensor<Scalar>& a, Eigen::Index begin, Eigen::Index count) {
  auto& tape = detail::tape_of(a);
  if (a.shape().size() != 2 || begin < 0 || count <= 0 || begin + count > a.rows()) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of bounds for " + shape_string(a.shape()));
  }
  Matrix<Scalar> out = a.value().middleRows(begin, count);
  const auto ia = a.id();
  const auto r = a.rows(), c = a.cols();
  return tape.record(Shape{static_cast<std::size_t>(count), static_cast<std::size_t>(c)}, std::move(out),
                     a.requires_grad(), [ia, r, c, begin, count](Tape<Scalar>& t, std::size_t self) {
                       Matrix<Scalar> d = Matrix<Scalar>::Zero(r, c);
                       d.middleRows(begin, count) = t.grad_of(self);
                       t.accumulate(ia, d);
                     });
}

/// Fully connected layer: x[m x in] * W[out x in]^T + b[out], bias added to
/// every row.
template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias) {
  auto& tape = detail::same_tape(x, weight);
  if (bias.tape() != &tape) throw TapeError("linear: bias on a different tape");
  if (x.shape().size() != 2 || weight.shape().size() != 2 || x.cols() != weight.cols() ||
      bias.size() != weight.rows() || bias.rows() != 1) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + ", weight " + shape_string(weight.shape()) +
                         ", bias " + shape_string(bias.shape()));
  }
  Matrix<Scalar> out = x.value() * weight.value().transpose();
  out.rowwise() += bias.value().row(0);
  Shape shape{static_cast<std::size_t>(out.rows()), static_cast<std::size_t>(out.cols())};
  const auto ix = x.id(), iw = weight.id(), ib = bias.id();
  return tape.record(std::move(shape), std::move(out),
                     x.requires_grad() || weight.requires_grad() || bias.requires_grad(),
                     [ix, iw, ib](Tape<Scalar>& t, std::size_t self) {
                       const auto& g = t.grad_of(self);
                       t.accumulate(ix, g * t.node(iw).value);
                       t.accumulate(iw, g.transpose() * t.node(ix).value);
                       t.accumulate(ib, g.colwise().sum());
                     });
}

/// Row-wise softmax of a rank-2 tensor.
template <typename Scalar>
Tensor<Scalar> softmax_rows(const Tensor<Scalar>& a) {
  auto& tape = detail::tape_of(a);
  const auto& z = a.value();
  Matrix<Scalar> out(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const auto e = (z.row(r).array() - z.row(r).maxCoeff()).exp();
    out.row(r) = (e / e.sum()).matrix();
  }
  const auto ia = a.id();
  return tape.record(a.shape(), std::move(out), a.requires_grad(), [ia](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& p = t.node(self).value;
    Matrix<Scalar> d = p.cwiseProduct(g);
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inner = d.rowwise().sum();
    d -= inner.asDiagonal() * p;
    t.accumulate(ia, d);
  });
}

/// Mean over rows of -ln(max(p[row, label], floor)).
template <typename Scalar>
Tensor<Scalar> probability_nll(const Tensor<Scalar>& probs, const std::vector<int>& labels, Scalar floor) {
  auto& tape = detail::tape_of(probs);
  const auto& p = probs.value();
  if (static_cast<Eigen::Index>(labels.size()) != p.rows()) {
    throw DimensionError("probability_nll: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(p.rows()) + " rows");
  }
  Scalar total = 0;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= p.cols()) throw DimensionError("probability_nll: label out of range");
    total -= std::log(std::max(p(r, y), floor));
  }
  Matrix<Scalar> out(1, 1);
  out(0, 0) = total / Scalar(p.rows());
  const auto ip = probs.id();
  return tape.record(Shape{}, std::move(out), probs.requires_grad(),
                     [ip, labels, floor](Tape<Scalar>& t, std::size_t self) {
                       const auto& p = t.node(ip).value;
                       const Scalar g = t.grad_of(self)(0, 0) / Scalar(p.rows());
                       Matrix<Scalar> d = Matrix<Scalar>::Zero(p.rows(), p.cols());
                       for (Eigen::Index r = 0; r < p.rows(); ++r) {
                         const int y = labels[static_cast<std::size_t>(r)];
                         if (p(r, y) > floor) d(r, y) = -g / p(r, y);  // clamp has zero slope
                       }
                       t.accumulate(ip, d);
                     });
}

/// Batch statistics computed by batch_norm_train, per column.
template <typename Scalar>
struct BatchMoments {
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> mean;
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> variance;  // biased (divides by row count)
};

/// Normalizes each column by its batch mean and biased variance, then
/// applies per-column scale and shift. Needs at least two rows.
template <typename Scalar>
Tensor<Scalar> batch_norm_train(const Tensor<Scalar>& x, const Tensor<Scalar>& scale, const Tensor<Scalar>& shift,
                                Scalar eps, BatchMoments<Scalar>* moments = nullptr) {
  auto& tape = detail::same_tape(x, scale);
  if (shift.tape() != &tape) throw TapeError("batch_norm_train: shift on a different tape");
  if (x.shape().size() != 2 || scale.size() != x.cols() || shift.size() != x.cols()) {
    throw DimensionError("batch_norm_train: input " + shape_string(x.shape()) + ", scale " +
                         shape_string(scale.shape()) + ", shift " + shape_string(shift.shape()));
  }
  if (x.rows() < 2) throw DimensionError("batch_norm_train: needs at least 2 rows, got " + std::to_string(x.rows()));
  const auto& v = x.value();
  const Scalar n = Scalar(v.rows());
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> mean = v.colwise().mean();
  Matrix<Scalar> centered = v.rowwise() - mean;
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> var = centered.array().square().colwise().sum() / n;
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> inv_std = (var.array() + eps).rsqrt();
  Matrix<Scalar> xhat = centered * inv_std.asDiagonal();
  if (moments) *moments = {mean, var};
  Matrix<Scalar> out = xhat * scale.value().row(0).asDiagonal();
  out.rowwise() += shift.value().row(0);
  const auto ix = x.id(), is = scale.id(), ib = shift.id();
  return tape.record(x.shape(), std::move(out),
                     x.requires_grad() || scale.requires_grad() || shift.requires_grad(),
                     [ix, is, ib, xhat, inv_std, n](Tape<Scalar>& t, std::size_t self) {
                       const auto& g = t.grad_of(self);
                       const auto& gamma = t.node(is).value;
                       t.accumulate(is, g.cwiseProduct(xhat).colwise().sum());
                       t.accumulate(ib, g.colwise().sum());
                       Matrix<Scalar> gx = g * gamma.row(0).asDiagonal();
                       const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> sum_g = gx.colwise().sum();
                       const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> sum_gx = gx.cwiseProduct(xhat).colwise().sum();
                       Matrix<Scalar> dx = (n * gx).rowwise() - sum_g;
                       dx -= xhat * sum_gx.asDiagonal();
                       dx = dx * (inv_std / n).asDiagonal();
                       t.accumulate(ix, dx);
                     });
}

/// Inference-mode normalization with fixed statistics.
template <typename Scalar>
Tensor<Scalar> batch_norm_inference(const Tensor<Scalar>& x, const Tensor<Scalar>& scale,
                                    const Tensor<Scalar>& shift, const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>& mean,
                                    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>& variance, Scalar eps) {
  auto& tape = detail::same_tape(x, scale);
  if (shift.tape() != &tape) throw TapeError("batch_norm_inference: shift on a different tape");
  if (x.shape().size() != 2 || scale.size() != x.cols() || shift.size() != x.cols() || mean.size() != x.cols() ||
      variance.size() != x.cols()) {
    throw DimensionError("batch_norm_inference: feature width mismatch for input " + shape_string(x.shape()));
  }
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> inv_std = (variance.array() + eps).rsqrt();
  Matrix<Scalar> xhat = (x.value().rowwise() - mean) * inv_std.asDiagonal();
  Matrix<Scalar> out = xhat * scale.value().row(0).asDiagonal();
  out.rowwise() += shift.value().row(0);
  const auto ix = x.id(), is = scale.id(), ib = shift.id();
  return tape.record(x.shape(), std::move(out),
                     x.requires_grad() || scale.requires_grad() || shift.requires_grad(),
                     [ix, is, ib, xhat, inv_std](Tape<Scalar>& t, std::size_t self) {
                       const auto& g = t.grad_of(self);
                       const auto& gamma = t.node(is).value;
                       t.accumulate(is, g.cwiseProduct(xhat).colwise().sum());
                       t.accumulate(ib, g.colwise().sum());
                       t.accumulate(ix, g * (gamma.row(0).cwiseProduct(inv_std)).asDiagonal());
                     });
}

}  // namespace lgmnet
