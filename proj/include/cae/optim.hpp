#pragma once

#include "cae/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace cae {

// ADAM hyperparameters and per-parameter moment buffers. Buffers are sized
// lazily on the first step and must keep the parameter order fixed.
struct AdamState {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Eigen::VectorXd> m;
  std::vector<Eigen::VectorXd> v;

  void reset() {
    step = 0;
    m.clear();
    v.clear();
  }
};

// Bias-corrected ADAM update of every parameter, then zeroes the gradients.
// Throws if a parameter has no populated gradient.
void adam_step(std::span<Tensor> params, AdamState& state);

}  // namespace cae
