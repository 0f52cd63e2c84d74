#include "cae/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cae {

Mlp::Mlp(MlpSpec spec, std::mt19937_64& gen) : spec_(std::move(spec)) {
  const auto& w = spec_.layer_widths;
  if (w.size() < 2) throw std::invalid_argument("Mlp: need input and output widths");
  if (std::any_of(w.begin(), w.end(), [](std::size_t v) { return v == 0; })) {
    throw std::invalid_argument("Mlp: layer widths must be >= 1");
  }
  for (std::size_t k = 0; k + 1 < w.size(); ++k) {
    const double bound = std::sqrt(6.0 / static_cast<double>(w[k]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    RowMatrix W(static_cast<Eigen::Index>(w[k]), static_cast<Eigen::Index>(w[k + 1]));
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = dist(gen);
    layers_.push_back({Tensor::matrix(W, true), Tensor::zeros({w[k + 1]}, true), {}});
  }
}

Tensor Mlp::forward(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    h = matmul(h, layers_[k].weight) + layers_[k].bias;
    if (k + 1 < layers_.size()) h = relu(h);
  }
  switch (spec_.output) {
    case OutputActivation::sigmoid: return sigmoid(h);
    case OutputActivation::softmax: return softmax(h);
    case OutputActivation::identity: break;
  }
  return h;
}

RowMatrix Mlp::evaluate(const Eigen::Ref<const RowMatrix>& x) const {
  if (static_cast<std::size_t>(x.cols()) != input_dim()) {
    throw ShapeError("Mlp::evaluate: expected " + std::to_string(input_dim()) + " input columns, got " +
                     std::to_string(x.cols()));
  }
  RowMatrix h = x;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    RowMatrix next = h * layers_[k].weight.mat();
    next.rowwise() += layers_[k].bias.data().transpose();
    if (k + 1 < layers_.size()) next = next.cwiseMax(0.0);
    h = std::move(next);
  }
  switch (spec_.output) {
    case OutputActivation::sigmoid:
      h = h.unaryExpr([](double t) {
        if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
        const double e = std::exp(t);
        return e / (1.0 + e);
      });
      break;
    case OutputActivation::softmax:
      for (Eigen::Index r = 0; r < h.rows(); ++r) {
        auto row = h.row(r);
        row.array() = (row.array() - row.maxCoeff()).exp();
        row /= row.sum();
      }
      break;
    case OutputActivation::identity: break;
  }
  return h;
}

void Mlp::append_parameters(std::vector<Tensor>& out) const {
  for (const auto& l : layers_) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.numel() + l.bias.numel();
  return n;
}

double Mlp::weight_norm() const {
  double s = 0.0;
  for (const auto& l : layers_) s += l.weight.data().squaredNorm();
  return std::sqrt(s);
}

Mlp Mlp::clone() const {
  Mlp out;
  out.spec_ = spec_;
  for (const auto& l : layers_) out.layers_.push_back({l.weight.clone(), l.bias.clone(), l.power_u});
  return out;
}

void Mlp::remove_outputs(const std::vector<std::size_t>& units) {
  auto& last = layers_.back();
  const auto W = last.weight.mat();
  const auto b = last.bias.data();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index c = 0; c < W.cols(); ++c) {
    if (std::find(units.begin(), units.end(), static_cast<std::size_t>(c)) == units.end()) keep.push_back(c);
  }
  RowMatrix W2(W.rows(), static_cast<Eigen::Index>(keep.size()));
  Eigen::VectorXd b2(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    W2.col(static_cast<Eigen::Index>(i)) = W.col(keep[i]);
    b2(static_cast<Eigen::Index>(i)) = b(keep[i]);
  }
  last.weight = Tensor::matrix(W2, true);
  last.bias = Tensor::vector(b2, true);
  last.power_u.resize(0);
  spec_.layer_widths.back() = keep.size();
}

void Mlp::remove_inputs(const std::vector<std::size_t>& units) {
  auto& first = layers_.front();
  const auto W = first.weight.mat();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index r = 0; r < W.rows(); ++r) {
    if (std::find(units.begin(), units.end(), static_cast<std::size_t>(r)) == units.end()) keep.push_back(r);
  }
  RowMatrix W2(static_cast<Eigen::Index>(keep.size()), W.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) W2.row(static_cast<Eigen::Index>(i)) = W.row(keep[i]);
  first.weight = Tensor::matrix(W2, true);
  first.power_u.resize(0);
  spec_.layer_widths.front() = keep.size();
}

}  // namespace cae
