#pragma once

#include "cae/manifolds.hpp"
#include "cae/model.hpp"
#include "cae/tensor.hpp"

#include <Eigen/Sparse>

#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cae {

class ComplexError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Vertices as rows; every simplex lists d+1 vertex indices.
struct SimplicialComplex {
  RowMatrix vertices;
  std::vector<std::vector<std::size_t>> simplices;
  std::vector<std::vector<std::size_t>> ring;  // vertex -> incident simplex indices

  // Builds the ring map and validates: affine independence, index range,
  // each facet shared by at most two simplices, and simplices sharing a
  // facet lying on opposite sides of it.
  static SimplicialComplex from(RowMatrix vertices, std::vector<std::vector<std::size_t>> simplices);

  std::size_t dim() const { return static_cast<std::size_t>(vertices.cols()); }
  std::size_t num_vertices() const { return static_cast<std::size_t>(vertices.rows()); }
  std::size_t max_ring() const;

  // Barycentric coordinates of x with respect to simplex s.
  Eigen::VectorXd barycentric(std::size_t s, const Eigen::Ref<const Eigen::VectorXd>& x) const;
  // Index of a simplex containing x (barycentric >= -tol), or npos.
  std::size_t locate(const Eigen::Ref<const Eigen::VectorXd>& x, double tol = 1e-12) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

SimplicialComplex path_complex(const Eigen::Ref<const Eigen::VectorXd>& points);
// Regular grid on [0,1]^2 with nx x ny cells, each split along one diagonal.
SimplicialComplex grid_complex(std::size_t nx, std::size_t ny);
SimplicialComplex delaunay_2d(const Eigen::Ref<const RowMatrix>& points);

std::string complex_to_json(const SimplicialComplex& s);
SimplicialComplex complex_from_json(const std::string& text);

enum class Activation { identity, relu };

struct ReluLayer {
  Eigen::SparseMatrix<double, Eigen::RowMajor> weight;  // out x in
  Eigen::SparseVector<double> bias;                     // out
  Activation activation = Activation::identity;
};

// Explicit affine + ReLU stack. Parameters are counted as stored entries of
// the sparse weights and biases. Depth counts affine maps after merging
// consecutive identity layers, i.e. ReLU layers + 1.
struct ReluNetwork {
  std::size_t input_dim = 0;
  std::vector<ReluLayer> layers;
  std::size_t declared_param_count = 0;
  std::size_t declared_depth = 0;

  std::size_t output_dim() const;
  std::size_t param_count() const;
  std::size_t depth() const;
  Eigen::VectorXd operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  // Rows in, rows out.
  RowMatrix evaluate(const Eigen::Ref<const RowMatrix>& x) const;
};

ReluNetwork relu_min2();
ReluNetwork relu_min_tree(std::size_t k);

ReluNetwork hat_function(const SimplicialComplex& s, std::size_t v);
// values: one row per vertex, q columns.
ReluNetwork compile_pl(const SimplicialComplex& s, const Eigen::Ref<const RowMatrix>& values);

// The bounds n(K(d+1) + 4(2K-1)) + n per output and ceil(log2 K) + 2.
struct CompileBounds {
  std::size_t K = 0;
  std::size_t param_bound = 0;
  std::size_t depth_bound = 0;
  bool params_ok = false;
  bool depth_ok = false;
};
CompileBounds check_bounds(const SimplicialComplex& s, std::size_t q, const ReluNetwork& net);

// Barycentric evaluation of the PL interpolant; x must lie in the complex.
Eigen::VectorXd pl_interpolate(const SimplicialComplex& s, const Eigen::Ref<const RowMatrix>& values,
                               const Eigen::Ref<const Eigen::VectorXd>& x);

void save_network(const ReluNetwork& net, const std::filesystem::path& path);
ReluNetwork load_network(const std::filesystem::path& path);

// Local chart built from samples around a center point.
struct LocalChart {
  std::size_t center = 0;
  std::vector<std::size_t> members;  // rows of the source cloud
  RowMatrix latent;                  // z_i
  RowMatrix points;                  // x_i
  SimplicialComplex complex;         // over latent
  ReluNetwork decoder;

  Eigen::VectorXd encode(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::VectorXd decode(const Eigen::Ref<const Eigen::VectorXd>& z) const;
};

LocalChart build_local_chart(const PointCloud& data, std::size_t center, double radius, double epsilon);

double chi_indicator(double t, double epsilon, double mu);
double chi_indicator_relu(double t, double epsilon, double mu);

struct SampleBound {
  std::size_t d = 0;
  double tau = 0.0;
  double C = 0.0;
  double epsilon = 0.0;
  double nu = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double n_required = 0.0;  // ceil(beta1 (ln beta2 + ln(1/nu)))
};

SampleBound sample_bound(std::size_t d, double tau, double C, double epsilon, double nu);

using PointMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct FaithfulnessResult {
  double sup_error = 0.0;
  bool pass = false;
};

FaithfulnessResult verify_faithfulness(const PointMap& encoder, const PointMap& decoder, const PointCloud& probes,
                                       double epsilon);
FaithfulnessResult verify_faithfulness(const LocalChart& chart, const PointCloud& probes, double epsilon);
// Round trip through the winner chart of the model.
FaithfulnessResult verify_faithfulness(const CaeModel& model, const PointCloud& probes, double epsilon);

}  // namespace cae
