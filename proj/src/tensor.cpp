#include "cae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

namespace cae {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace detail {

void Node::accumulate(const Eigen::Ref<const Eigen::VectorXd>& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

static std::pair<Eigen::Index, Eigen::Index> matrix_dims(const Shape& s) {
  if (s.empty()) return {1, 1};
  if (s.size() == 1) return {static_cast<Eigen::Index>(s[0]), 1};
  const auto rows = static_cast<Eigen::Index>(s[0]);
  return {rows, rows == 0 ? 0 : static_cast<Eigen::Index>(numel(s)) / rows};
}

Eigen::Map<const RowMatrix> Node::as_matrix() const {
  auto [r, c] = matrix_dims(shape);
  return {value.data(), r, c};
}

Eigen::Map<const RowMatrix> Node::grad_matrix() const {
  auto [r, c] = matrix_dims(shape);
  return {grad.data(), r, c};
}

}  // namespace detail

namespace {

NodePtr make_leaf(Shape shape, Eigen::VectorXd value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

// Creates the output node of an op. The backward rule and inputs are only
// retained when some input requires a gradient.
Tensor make_result(const char* op, Shape shape, Eigen::VectorXd value,
                   std::vector<NodePtr> inputs, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const NodePtr& p) { return p->requires_grad; });
  if (needs) {
    n->requires_grad = true;
    n->inputs = std::move(inputs);
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

void require(bool cond, const char* op, const std::string& what) {
  if (!cond) throw ShapeError(std::string(op) + ": " + what);
}

void require_defined(const Tensor& t, const char* op) {
  require(t.defined(), op, "undefined tensor operand");
}

Eigen::Map<RowMatrix> grad_matrix_of(Node& n, Eigen::VectorXd& buffer) {
  auto m = n.as_matrix();
  buffer.setZero(static_cast<Eigen::Index>(m.size()));
  return {buffer.data(), m.rows(), m.cols()};
}

enum class Broadcast { same, scalar, row };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() == b.shape()) return Broadcast::same;
  if (b.numel() == 1) return Broadcast::scalar;
  const bool row_vec = (b.rank() == 1) || (b.rank() == 2 && b.shape()[0] == 1);
  if (a.rank() == 2 && row_vec && b.numel() == a.shape()[1]) return Broadcast::row;
  throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(b.shape()) + " onto " +
                   to_string(a.shape()));
}

// Reduces a gradient of a's shape to the shape of the broadcast operand b.
Eigen::VectorXd reduce_broadcast(const Eigen::VectorXd& g, Broadcast kind, const Node& a) {
  switch (kind) {
    case Broadcast::same:
      return g;
    case Broadcast::scalar:
      return Eigen::VectorXd::Constant(1, g.sum());
    case Broadcast::row: {
      auto am = a.as_matrix();
      Eigen::Map<const RowMatrix> gm(g.data(), am.rows(), am.cols());
      return gm.colwise().sum().transpose();
    }
  }
  return g;
}

Eigen::VectorXd broadcast_value(const Tensor& a, const Tensor& b, Broadcast kind) {
  switch (kind) {
    case Broadcast::same:
      return b.data();
    case Broadcast::scalar:
      return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(a.numel()), b.data()(0));
    case Broadcast::row: {
      RowMatrix m = b.data().transpose().replicate(static_cast<Eigen::Index>(a.rows()), 1);
      return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    }
  }
  return {};
}

template <typename Fn>
Tensor unary(const char* op, const Tensor& a, Eigen::VectorXd value, Fn local_grad) {
  require_defined(a, op);
  auto an = a.node();
  return make_result(op, a.shape(), std::move(value), {an},
                     [an, local_grad](Node& out) { an->accumulate(local_grad(out).cwiseProduct(out.grad)); });
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = static_cast<Eigen::Index>(cae::numel(shape));
  return Tensor(make_leaf(std::move(shape), Eigen::VectorXd::Constant(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != cae::numel(shape)) {
    throw ShapeError("Tensor::from: " + std::to_string(values.size()) + " values for shape " +
                     to_string(shape));
  }
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  return Tensor(make_leaf(std::move(shape), std::move(v), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_leaf({}, Eigen::VectorXd::Constant(1, value), requires_grad));
}

Tensor Tensor::matrix(const Eigen::Ref<const RowMatrix>& m, bool requires_grad) {
  RowMatrix copy = m;
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(copy.data(), copy.size());
  return Tensor(make_leaf({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                          std::move(v), requires_grad));
}

Tensor Tensor::vector(const Eigen::Ref<const Eigen::VectorXd>& v, bool requires_grad) {
  return Tensor(make_leaf({static_cast<std::size_t>(v.size())}, v, requires_grad));
}

const Shape& Tensor::shape() const {
  if (!node_) throw std::logic_error("Tensor: access to undefined tensor");
  return node_->shape;
}

std::size_t Tensor::numel() const { return static_cast<std::size_t>(node_->value.size()); }

std::size_t Tensor::rows() const { return static_cast<std::size_t>(node_->as_matrix().rows()); }

std::size_t Tensor::cols() const { return static_cast<std::size_t>(node_->as_matrix().cols()); }

Eigen::Map<Eigen::VectorXd> Tensor::data() { return {node_->value.data(), node_->value.size()}; }

Eigen::Map<const Eigen::VectorXd> Tensor::data() const {
  return {node_->value.data(), node_->value.size()};
}

MatrixMap Tensor::mat() {
  auto m = node_->as_matrix();
  return {node_->value.data(), m.rows(), m.cols()};
}

ConstMatrixMap Tensor::mat() const { return node_->as_matrix(); }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor of shape " + to_string(shape()) + " is not a scalar");
  return node_->value(0);
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool on) { node_->requires_grad = on; }

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->value.size(); }

Eigen::Map<Eigen::VectorXd> Tensor::grad() {
  if (!has_grad()) node_->grad.setZero(node_->value.size());
  return {node_->grad.data(), node_->grad.size()};
}

Eigen::Map<const Eigen::VectorXd> Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("Tensor::grad: no gradient populated");
  return {node_->grad.data(), node_->grad.size()};
}

ConstMatrixMap Tensor::grad_mat() const {
  if (!has_grad()) throw std::logic_error("Tensor::grad_mat: no gradient populated");
  return node_->grad_matrix();
}

void Tensor::zero_grad() {
  if (node_) node_->grad.resize(0);
}

bool Tensor::is_leaf() const { return node_ && !node_->backward; }

Tensor Tensor::detach() const {
  return Tensor(make_leaf(shape(), node_->value, false));
}

Tensor Tensor::clone() const {
  return Tensor(make_leaf(shape(), node_->value, node_->requires_grad));
}

void Tensor::backward() const {
  if (!node_) throw std::logic_error("backward: undefined tensor");
  if (numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + to_string(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  // Interior gradients are recomputed from scratch; leaf gradients accumulate.
  for (Node* n : order) {
    if (n->backward) n->grad.resize(0);
  }
  node_->accumulate(Eigen::VectorXd::Ones(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward) continue;
    if (n->grad.size() == 0) n->grad.setZero(n->value.size());
    n->backward(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  const auto kind = broadcast_kind(a, b, "add");
  Eigen::VectorXd v = a.data() + broadcast_value(a, b, kind);
  auto an = a.node();
  auto bn = b.node();
  return make_result("add", a.shape(), std::move(v), {an, bn}, [an, bn, kind](Node& out) {
    if (an->requires_grad) an->accumulate(out.grad);
    if (bn->requires_grad) bn->accumulate(reduce_broadcast(out.grad, kind, *an));
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const auto kind = broadcast_kind(a, b, "sub");
  Eigen::VectorXd v = a.data() - broadcast_value(a, b, kind);
  auto an = a.node();
  auto bn = b.node();
  return make_result("sub", a.shape(), std::move(v), {an, bn}, [an, bn, kind](Node& out) {
    if (an->requires_grad) an->accumulate(out.grad);
    if (bn->requires_grad) bn->accumulate(-reduce_broadcast(out.grad, kind, *an));
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const auto kind = broadcast_kind(a, b, "mul");
  Eigen::VectorXd bv = broadcast_value(a, b, kind);
  Eigen::VectorXd v = a.data().cwiseProduct(bv);
  auto an = a.node();
  auto bn = b.node();
  return make_result("mul", a.shape(), std::move(v), {an, bn},
                     [an, bn, kind, bv = std::move(bv)](Node& out) {
                       if (an->requires_grad) an->accumulate(out.grad.cwiseProduct(bv));
                       if (bn->requires_grad) {
                         bn->accumulate(reduce_broadcast(out.grad.cwiseProduct(an->value), kind, *an));
                       }
                     });
}

Tensor scale(const Tensor& a, double c) {
  require_defined(a, "scale");
  auto an = a.node();
  return make_result("scale", a.shape(), a.data() * c, {an},
                     [an, c](Node& out) { an->accumulate(out.grad * c); });
}

Tensor add_scalar(const Tensor& a, double c) {
  require_defined(a, "add_scalar");
  auto an = a.node();
  return make_result("add_scalar", a.shape(), (a.data().array() + c).matrix(), {an},
                     [an](Node& out) { an->accumulate(out.grad); });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor relu(const Tensor& a) {
  require_defined(a, "relu");
  Eigen::VectorXd v = a.data().cwiseMax(0.0);
  // Subgradient at 0 is 0.
  return unary("relu", a, std::move(v), [an = a.node()](const Node&) -> Eigen::VectorXd {
    return (an->value.array() > 0.0).cast<double>().matrix();
  });
}

Tensor sigmoid(const Tensor& a) {
  require_defined(a, "sigmoid");
  Eigen::VectorXd v = a.data().unaryExpr([](double t) {
    if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
  });
  return unary("sigmoid", a, std::move(v), [](const Node& out) -> Eigen::VectorXd {
    return (out.value.array() * (1.0 - out.value.array())).matrix();
  });
}

Tensor exp(const Tensor& a) {
  require_defined(a, "exp");
  Eigen::VectorXd v = a.data().array().exp().matrix();
  return unary("exp", a, std::move(v), [](const Node& out) -> Eigen::VectorXd { return out.value; });
}

Tensor log(const Tensor& a) {
  require_defined(a, "log");
  Eigen::VectorXd v = a.data().array().log().matrix();
  return unary("log", a, std::move(v), [an = a.node()](const Node&) -> Eigen::VectorXd {
    return an->value.cwiseInverse();
  });
}

Tensor square(const Tensor& a) {
  require_defined(a, "square");
  Eigen::VectorXd v = a.data().array().square().matrix();
  return unary("square", a, std::move(v), [an = a.node()](const Node&) -> Eigen::VectorXd {
    return 2.0 * an->value;
  });
}

Tensor clamp_min(const Tensor& a, double lo) {
  require_defined(a, "clamp_min");
  Eigen::VectorXd v = a.data().cwiseMax(lo);
  return unary("clamp_min", a, std::move(v), [an = a.node(), lo](const Node&) -> Eigen::VectorXd {
    return (an->value.array() >= lo).cast<double>().matrix();
  });
}

Tensor softmax(const Tensor& a) {
  require_defined(a, "softmax");
  require(a.rank() >= 1, "softmax", "scalar input");
  const auto cols = static_cast<Eigen::Index>(a.shape().back());
  const auto rows = static_cast<Eigen::Index>(a.numel()) / cols;
  Eigen::Map<const RowMatrix> x(a.data().data(), rows, cols);
  RowMatrix s = (x.colwise() - x.rowwise().maxCoeff()).array().exp();
  s.array().colwise() /= s.rowwise().sum().array();
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(s.data(), s.size());
  auto an = a.node();
  return make_result("softmax", a.shape(), std::move(v), {an}, [an, rows, cols](Node& out) {
    Eigen::Map<const RowMatrix> y(out.value.data(), rows, cols);
    Eigen::Map<const RowMatrix> g(out.grad.data(), rows, cols);
    const Eigen::VectorXd dot = (y.array() * g.array()).rowwise().sum();
    RowMatrix gin = y.array() * (g.colwise() - dot).array();
    an->accumulate(Eigen::Map<const Eigen::VectorXd>(gin.data(), gin.size()));
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  require(a.rank() == 2 && (b.rank() == 2 || b.rank() == 1), "matmul",
          "expected rank-2 x rank-1/2 operands, got " + to_string(a.shape()) + " and " +
              to_string(b.shape()));
  require(a.shape()[1] == b.shape()[0], "matmul",
          "inner dimensions differ: " + to_string(a.shape()) + " and " + to_string(b.shape()));
  RowMatrix c = a.mat() * b.mat();
  Shape shape = b.rank() == 1 ? Shape{a.shape()[0]} : Shape{a.shape()[0], b.shape()[1]};
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(c.data(), c.size());
  auto an = a.node();
  auto bn = b.node();
  return make_result("matmul", std::move(shape), std::move(v), {an, bn}, [an, bn](Node& out) {
    auto g = out.grad_matrix();
    if (an->requires_grad) {
      RowMatrix ga = g * bn->as_matrix().transpose();
      an->accumulate(Eigen::Map<const Eigen::VectorXd>(ga.data(), ga.size()));
    }
    if (bn->requires_grad) {
      RowMatrix gb = an->as_matrix().transpose() * g;
      bn->accumulate(Eigen::Map<const Eigen::VectorXd>(gb.data(), gb.size()));
    }
  });
}

Tensor spectral_norm(const Tensor& w, int iters, Eigen::VectorXd* left_vector) {
  require_defined(w, "spectral_norm");
  require(w.rank() == 2, "spectral_norm", "expected a matrix, got " + to_string(w.shape()));
  if (iters < 1) throw std::invalid_argument("spectral_norm: iters must be >= 1");
  auto W = w.mat();
  const Eigen::Index rows = W.rows();
  Eigen::VectorXd u;
  if (left_vector && left_vector->size() == rows && left_vector->norm() > 0) {
    u = left_vector->normalized();
  } else {
    std::mt19937_64 gen(0x5eed);
    std::normal_distribution<double> normal;
    u = Eigen::VectorXd::NullaryExpr(rows, [&] { return normal(gen); }).normalized();
  }
  Eigen::VectorXd v = Eigen::VectorXd::Zero(W.cols());
  double sigma = 0.0;
  for (int k = 0; k < iters; ++k) {
    v = W.transpose() * u;
    const double vn = v.norm();
    if (vn == 0.0) break;
    v /= vn;
    u = W * v;
    const double un = u.norm();
    if (un == 0.0) break;
    u /= un;
    sigma = u.dot(W * v);
  }
  if (left_vector) *left_vector = u;
  // Zero matrix or u orthogonal to the range: value 0 with zero gradient.
  const bool degenerate = sigma == 0.0;
  auto wn = w.node();
  return make_result("spectral_norm", {}, Eigen::VectorXd::Constant(1, sigma), {wn},
                     [wn, u, v, degenerate](Node& out) {
                       if (degenerate) {
                         wn->accumulate(Eigen::VectorXd::Zero(wn->value.size()));
                         return;
                       }
                       RowMatrix g = out.grad(0) * (u * v.transpose());
                       wn->accumulate(Eigen::Map<const Eigen::VectorXd>(g.data(), g.size()));
                     });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  auto an = a.node();
  return make_result("sum", {}, Eigen::VectorXd::Constant(1, a.data().sum()), {an}, [an](Node& out) {
    an->accumulate(Eigen::VectorXd::Constant(an->value.size(), out.grad(0)));
  });
}

Tensor mean(const Tensor& a) {
  require_defined(a, "mean");
  require(a.numel() > 0, "mean", "empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

namespace {

void check_axis(const Tensor& a, int axis, const char* op) {
  require_defined(a, op);
  require(a.rank() == 1 || a.rank() == 2, op, "expected rank 1 or 2, got " + to_string(a.shape()));
  require(axis == 0 || axis == 1, op, "axis must be 0 or 1");
}

Tensor extremum(const Tensor& a, int axis, bool take_min, const char* op) {
  check_axis(a, axis, op);
  auto m = a.mat();
  const Eigen::Index outer = axis == 1 ? m.rows() : m.cols();
  const Eigen::Index inner = axis == 1 ? m.cols() : m.rows();
  require(inner > 0, op, "empty reduction axis");
  Eigen::VectorXd v(outer);
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(outer));
  for (Eigen::Index o = 0; o < outer; ++o) {
    Eigen::Index best = 0;
    double bv = axis == 1 ? m(o, 0) : m(0, o);
    for (Eigen::Index i = 1; i < inner; ++i) {
      const double x = axis == 1 ? m(o, i) : m(i, o);
      // Strict comparison keeps the lowest index on ties.
      if (take_min ? x < bv : x > bv) {
        bv = x;
        best = i;
      }
    }
    v(o) = bv;
    arg[static_cast<std::size_t>(o)] = best;
  }
  auto an = a.node();
  const Eigen::Index cols = m.cols();
  return make_result(op, {static_cast<std::size_t>(outer)}, std::move(v), {an},
                     [an, arg = std::move(arg), axis, cols](Node& out) {
                       Eigen::VectorXd g = Eigen::VectorXd::Zero(an->value.size());
                       for (std::size_t o = 0; o < arg.size(); ++o) {
                         const auto oi = static_cast<Eigen::Index>(o);
                         const Eigen::Index flat = axis == 1 ? oi * cols + arg[o] : arg[o] * cols + oi;
                         g(flat) += out.grad(oi);
                       }
                       an->accumulate(g);
                     });
}

}  // namespace

Tensor sum(const Tensor& a, int axis) {
  check_axis(a, axis, "sum_axis");
  auto m = a.mat();
  Eigen::VectorXd v = axis == 1 ? Eigen::VectorXd(m.rowwise().sum()) : Eigen::VectorXd(m.colwise().sum().transpose());
  auto an = a.node();
  const Eigen::Index rows = m.rows();
  const Eigen::Index cols = m.cols();
  Shape shape{static_cast<std::size_t>(v.size())};
  return make_result("sum_axis", std::move(shape), std::move(v), {an},
                     [an, axis, rows, cols](Node& out) {
                       RowMatrix g = axis == 1 ? RowMatrix(out.grad.replicate(1, cols))
                                               : RowMatrix(out.grad.transpose().replicate(rows, 1));
                       an->accumulate(Eigen::Map<const Eigen::VectorXd>(g.data(), g.size()));
                     });
}

Tensor min(const Tensor& a, int axis) { return extremum(a, axis, true, "min_axis"); }

Tensor max(const Tensor& a, int axis) { return extremum(a, axis, false, "max_axis"); }

Tensor l2_norm(const Tensor& a) {
  require_defined(a, "l2_norm");
  const double n = a.data().norm();
  auto an = a.node();
  return make_result("l2_norm", {}, Eigen::VectorXd::Constant(1, n), {an}, [an, n](Node& out) {
    if (n == 0.0) {
      an->accumulate(Eigen::VectorXd::Zero(an->value.size()));
    } else {
      an->accumulate(an->value * (out.grad(0) / n));
    }
  });
}

// ---------------------------------------------------------------------------
// Structural

Tensor concat(std::span<const Tensor> parts, int axis) {
  require(!parts.empty(), "concat", "no operands");
  require(axis == 0 || axis == 1, "concat", "axis must be 0 or 1");
  std::vector<NodePtr> inputs;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    require_defined(p, "concat");
    require(p.rank() <= 2, "concat", "rank > 2 operand " + to_string(p.shape()));
    auto m = p.mat();
    if (axis == 0) {
      require(inputs.empty() || m.cols() == cols, "concat",
              "column count mismatch at operand " + to_string(p.shape()));
      cols = m.cols();
      rows += m.rows();
    } else {
      require(inputs.empty() || m.rows() == rows, "concat",
              "row count mismatch at operand " + to_string(p.shape()));
      rows = m.rows();
      cols += m.cols();
    }
    inputs.push_back(p.node());
  }
  RowMatrix out(rows, cols);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> extents;
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    auto m = p.mat();
    if (axis == 0) {
      out.middleRows(offset, m.rows()) = m;
      extents.emplace_back(offset, m.rows());
      offset += m.rows();
    } else {
      out.middleCols(offset, m.cols()) = m;
      extents.emplace_back(offset, m.cols());
      offset += m.cols();
    }
  }
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(out.data(), out.size());
  Shape shape{static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)};
  auto captured = inputs;
  return make_result("concat", std::move(shape), std::move(v), std::move(inputs),
                     [captured, extents, axis](Node& out) {
                       auto g = out.grad_matrix();
                       for (std::size_t i = 0; i < captured.size(); ++i) {
                         if (!captured[i]->requires_grad) continue;
                         auto [off, len] = extents[i];
                         RowMatrix gi = axis == 0 ? RowMatrix(g.middleRows(off, len)) : RowMatrix(g.middleCols(off, len));
                         captured[i]->accumulate(Eigen::Map<const Eigen::VectorXd>(gi.data(), gi.size()));
                       }
                     });
}

Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end) {
  require_defined(a, "slice");
  require(a.rank() == 2, "slice", "expected rank 2, got " + to_string(a.shape()));
  require(axis == 0 || axis == 1, "slice", "axis must be 0 or 1");
  const std::size_t extent = a.shape()[static_cast<std::size_t>(axis)];
  require(begin <= end && end <= extent, "slice",
          "range [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of bounds for " +
              to_string(a.shape()));
  auto m = a.mat();
  const auto b = static_cast<Eigen::Index>(begin);
  const auto len = static_cast<Eigen::Index>(end - begin);
  RowMatrix s = axis == 0 ? RowMatrix(m.middleRows(b, len)) : RowMatrix(m.middleCols(b, len));
  Shape shape = axis == 0 ? Shape{end - begin, a.shape()[1]} : Shape{a.shape()[0], end - begin};
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(s.data(), s.size());
  auto an = a.node();
  return make_result("slice", std::move(shape), std::move(v), {an}, [an, axis, b, len](Node& out) {
    Eigen::VectorXd buffer;
    auto g = grad_matrix_of(*an, buffer);
    if (axis == 0) {
      g.middleRows(b, len) = out.grad_matrix();
    } else {
      g.middleCols(b, len) = out.grad_matrix();
    }
    an->accumulate(buffer);
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  require(numel(shape) == a.numel(), "reshape",
          "cannot reshape " + to_string(a.shape()) + " to " + to_string(shape));
  auto an = a.node();
  return make_result("reshape", std::move(shape), a.data(), {an},
                     [an](Node& out) { an->accumulate(out.grad); });
}

Tensor select_rows(std::span<const Tensor> options, std::span<const std::size_t> index) {
  require(!options.empty(), "select_rows", "no options");
  const Shape& shape = options.front().shape();
  require(shape.size() == 2, "select_rows", "expected rank-2 options, got " + to_string(shape));
  require(index.size() == shape[0], "select_rows", "index length differs from row count");
  std::vector<NodePtr> inputs;
  for (const auto& o : options) {
    require(o.defined() && o.shape() == shape, "select_rows", "option shapes differ");
    inputs.push_back(o.node());
  }
  RowMatrix out(static_cast<Eigen::Index>(shape[0]), static_cast<Eigen::Index>(shape[1]));
  std::vector<std::size_t> idx(index.begin(), index.end());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    require(idx[r] < options.size(), "select_rows", "index out of range");
    out.row(static_cast<Eigen::Index>(r)) = options[idx[r]].mat().row(static_cast<Eigen::Index>(r));
  }
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(out.data(), out.size());
  auto captured = inputs;
  return make_result("select_rows", shape, std::move(v), std::move(inputs), [captured, idx](Node& out) {
    auto g = out.grad_matrix();
    for (std::size_t k = 0; k < captured.size(); ++k) {
      if (!captured[k]->requires_grad) continue;
      Eigen::VectorXd buffer;
      auto gk = grad_matrix_of(*captured[k], buffer);
      for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] == k) gk.row(static_cast<Eigen::Index>(r)) = g.row(static_cast<Eigen::Index>(r));
      }
      captured[k]->accumulate(buffer);
    }
  });
}

std::vector<std::size_t> argmin_rows(const Eigen::Ref<const RowMatrix>& m) {
  std::vector<std::size_t> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < m.cols(); ++c) {
      if (m(r, c) < m(r, best)) best = c;
    }
    out[static_cast<std::size_t>(r)] = static_cast<std::size_t>(best);
  }
  return out;
}

std::vector<std::size_t> argmax_rows(const Eigen::Ref<const RowMatrix>& m) {
  std::vector<std::size_t> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < m.cols(); ++c) {
      if (m(r, c) > m(r, best)) best = c;
    }
    out[static_cast<std::size_t>(r)] = static_cast<std::size_t>(best);
  }
  return out;
}

}  // namespace cae
