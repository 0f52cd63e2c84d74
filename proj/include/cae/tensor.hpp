#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cae {

using Shape = std::vector<std::size_t>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string to_string(const Shape& shape);
std::size_t numel(const Shape& shape);

namespace detail {
struct Node;
}

// Dense row-major f64 tensor with reverse-mode autodiff.
//
// A Tensor is a shared handle: copies alias the same storage and graph node,
// like a torch::Tensor. Use clone() for an independent copy. Rank 0 and 1
// tensors are viewed as column matrices by mat(); rank 2 tensors as
// rows x cols. Operations on tensors that require gradients record a node
// with a backward rule; operations on constants record nothing.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor matrix(const Eigen::Ref<const RowMatrix>& m, bool requires_grad = false);
  static Tensor vector(const Eigen::Ref<const Eigen::VectorXd>& v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t rows() const;
  std::size_t cols() const;

  Eigen::Map<Eigen::VectorXd> data();
  Eigen::Map<const Eigen::VectorXd> data() const;
  MatrixMap mat();
  ConstMatrixMap mat() const;
  double item() const;
  double operator()(std::size_t i) const { return data()(static_cast<Eigen::Index>(i)); }

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  Eigen::Map<Eigen::VectorXd> grad();
  Eigen::Map<const Eigen::VectorXd> grad() const;
  ConstMatrixMap grad_mat() const;
  void zero_grad();

  // Populates grad on every requires_grad leaf reachable from this scalar.
  // Leaf gradients accumulate across calls until zero_grad().
  void backward() const;

  Tensor detach() const;
  Tensor clone() const;
  bool is_leaf() const;
  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  // Internal: used by op implementations.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

struct Node {
  Shape shape;
  Eigen::VectorXd value;
  Eigen::VectorXd grad;  // empty until first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  void accumulate(const Eigen::Ref<const Eigen::VectorXd>& g);
  Eigen::Map<const RowMatrix> as_matrix() const;
  Eigen::Map<const RowMatrix> grad_matrix() const;
};

}  // namespace detail

// Elementwise arithmetic. The right operand may be a same-shape tensor, a
// scalar, or a row vector ([cols] or [1, cols]) broadcast over the rows of a
// rank-2 left operand.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }
inline Tensor operator+(const Tensor& a, double c) { return add_scalar(a, c); }
inline Tensor operator-(const Tensor& a, double c) { return add_scalar(a, -c); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
Tensor clamp_min(const Tensor& a, double lo);
// Softmax along the last axis.
Tensor softmax(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Reductions of a rank-2 tensor along an axis; rank-1 inputs are treated as
// a single column. The result is rank-1.
Tensor sum(const Tensor& a, int axis);
Tensor min(const Tensor& a, int axis);
Tensor max(const Tensor& a, int axis);
Tensor l2_norm(const Tensor& a);

Tensor concat(std::span<const Tensor> parts, int axis);
Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& a, Shape shape);
// Row r of the result is row r of options[index[r]].
Tensor select_rows(std::span<const Tensor> options, std::span<const std::size_t> index);

// Largest singular value of a rank-2 tensor by power iteration. If
// `left_vector` is non-null it warm-starts the iteration and receives the
// final left singular vector. The backward rule is W -> u v^T with u, v
// held constant.
Tensor spectral_norm(const Tensor& w, int iters, Eigen::VectorXd* left_vector = nullptr);

// Index of the first minimum / maximum of each row.
std::vector<std::size_t> argmin_rows(const Eigen::Ref<const RowMatrix>& m);
std::vector<std::size_t> argmax_rows(const Eigen::Ref<const RowMatrix>& m);

}  // namespace cae
