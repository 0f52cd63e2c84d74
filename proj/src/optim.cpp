#include "cae/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cae {

void adam_step(std::span<Tensor> params, AdamState& state) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.numel())));
      state.v.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.numel())));
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: parameter count changed from " + std::to_string(state.m.size()) +
                                " to " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      throw std::invalid_argument("adam_step: parameter " + std::to_string(i) + " of shape " +
                                  to_string(params[i].shape()) + " has no gradient");
    }
    if (state.m[i].size() != static_cast<Eigen::Index>(params[i].numel())) {
      throw std::invalid_argument("adam_step: moment buffer shape mismatch at parameter " + std::to_string(i));
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto g = params[i].grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseAbs2();
    params[i].data().array() -=
        state.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
    params[i].zero_grad();
  }
}

}  // namespace cae
