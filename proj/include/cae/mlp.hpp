#pragma once

#include "cae/tensor.hpp"

#include <random>
#include <vector>

namespace cae {

enum class OutputActivation { identity, sigmoid, softmax };

struct MlpSpec {
  std::vector<std::size_t> layer_widths;  // input, hidden..., output
  OutputActivation output = OutputActivation::identity;
};

// Fully connected ReLU network, y = x W + b per layer, ReLU on hidden layers.
class Mlp {
 public:
  struct Layer {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]
    Eigen::VectorXd power_u;  // warm start for spectral norm estimation
  };

  Mlp() = default;
  // He-uniform weights, zero biases.
  Mlp(MlpSpec spec, std::mt19937_64& gen);

  Tensor forward(const Tensor& x) const;
  Tensor operator()(const Tensor& x) const { return forward(x); }
  // Same map on plain matrices, no graph recorded.
  RowMatrix evaluate(const Eigen::Ref<const RowMatrix>& x) const;

  const MlpSpec& spec() const { return spec_; }
  std::size_t input_dim() const { return spec_.layer_widths.front(); }
  std::size_t output_dim() const { return spec_.layer_widths.back(); }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  void append_parameters(std::vector<Tensor>& out) const;
  std::size_t parameter_count() const;
  double weight_norm() const;
  Mlp clone() const;

  // Drops output units (columns of the last layer).
  void remove_outputs(const std::vector<std::size_t>& units);
  // Drops input units (rows of the first layer).
  void remove_inputs(const std::vector<std::size_t>& units);

 private:
  MlpSpec spec_;
  std::vector<Layer> layers_;
};

}  // namespace cae
