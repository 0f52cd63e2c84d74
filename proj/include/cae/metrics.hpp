#pragma once

#include "cae/manifolds.hpp"
#include "cae/model.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cae {

struct LatentSample {
  std::size_t chart = 0;
  Eigen::VectorXd coords;  // strictly inside (0,1)^d
};

enum class ChartAllocation { uniform, usage };

// Draws `ell` samples: chart first, then coordinates, from one generator.
// With ChartAllocation::usage, `usage` weights the chart draw.
std::vector<LatentSample> sample_latent(const CaeModel& model, std::size_t ell, std::uint64_t seed,
                                        ChartAllocation allocation = ChartAllocation::uniform,
                                        std::span<const std::size_t> usage = {});

// D(D_chart(coords)) for each sample, one row per sample.
RowMatrix decode_samples(const CaeModel& model, std::span<const LatentSample> samples);

// Index of the nearest row of `points` (squared distance, lowest index on ties).
std::size_t nearest_index(const RowMatrix& points, const Eigen::Ref<const Eigen::RowVectorXd>& q, double* sq_dist = nullptr);

double reconstruction_error(const CaeModel& model, const PointCloud& test);
double unfaithfulness(const CaeModel& model, const PointCloud& train, std::size_t ell = 100, std::uint64_t seed = 0);
double coverage(const CaeModel& model, const PointCloud& train, std::size_t ell = 100, std::uint64_t seed = 0);

struct EvalReport {
  double recon_error = 0.0;
  double unfaithfulness = 0.0;
  double coverage = 0.0;
  std::size_t n_test = 0;
  std::size_t ell = 0;
  std::uint64_t seed = 0;
  std::size_t charts_live = 0;
  std::vector<std::size_t> samples_per_chart;

  std::string to_json() const;
};

EvalReport evaluate_metrics(const CaeModel& model, const PointCloud& train, const PointCloud& test, std::size_t ell,
                            std::uint64_t seed);

class DifferentChartsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GeodesicPath {
  std::size_t chart = 0;
  RowMatrix points;  // k decoded points
  double length = 0.0;
};

// Straight line between the chart codes of a and b, decoded and measured.
GeodesicPath geodesic_path(const CaeModel& model, const Eigen::Ref<const Eigen::VectorXd>& a,
                           const Eigen::Ref<const Eigen::VectorXd>& b, std::size_t k);
double geodesic_length(const CaeModel& model, const Eigen::Ref<const Eigen::VectorXd>& a,
                       const Eigen::Ref<const Eigen::VectorXd>& b, std::size_t k);

// Distance between consecutive rows in latent space. A chart change is
// bridged by the transition map into the second row's chart.
std::vector<double> consecutive_latent_distances(const CaeModel& model, const Eigen::Ref<const RowMatrix>& sequence);

}  // namespace cae
