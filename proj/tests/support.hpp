#pragma once

#include "cae/tensor.hpp"

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace test {

using cae::RowMatrix;
using cae::Tensor;

inline RowMatrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n(0.0, scale);
  return RowMatrix::NullaryExpr(r, c, [&] { return n(gen); });
}

// Largest relative deviation between the autodiff gradient of f and a
// central difference, over every entry of every input.
inline double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f, std::vector<Tensor> inputs,
                         double h = 1e-6) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  f(inputs).backward();
  double worst = 0.0;
  for (auto& t : inputs) {
    const Eigen::VectorXd g = t.grad();
    for (Eigen::Index i = 0; i < t.data().size(); ++i) {
      const double x0 = t.data()(i);
      t.data()(i) = x0 + h;
      const double fp = f(inputs).item();
      t.data()(i) = x0 - h;
      const double fm = f(inputs).item();
      t.data()(i) = x0;
      const double fd = (fp - fm) / (2 * h);
      const double denom = std::max({1e-6, std::abs(fd), std::abs(g(i))});
      worst = std::max(worst, std::abs(fd - g(i)) / denom);
    }
  }
  return worst;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("cae_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

}  // namespace test
