#include "cae/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <random>
#include <set>

namespace cae {

std::vector<LatentSample> sample_latent(const CaeModel& model, std::size_t ell, std::uint64_t seed,
                                        ChartAllocation allocation, std::span<const std::size_t> usage) {
  const std::size_t N = model.num_charts();
  if (N == 0) throw std::invalid_argument("sample_latent: model has no live charts");
  if (ell == 0) throw std::invalid_argument("sample_latent: ell must be >= 1");
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, N - 1);
  std::discrete_distribution<std::size_t> weighted;
  if (allocation == ChartAllocation::usage) {
    if (usage.size() != N) throw std::invalid_argument("sample_latent: usage has wrong length");
    weighted = std::discrete_distribution<std::size_t>(usage.begin(), usage.end());
  }
  const auto d = static_cast<Eigen::Index>(model.config.chart_dim);
  std::vector<LatentSample> out(ell);
  for (auto& s : out) {
    s.chart = allocation == ChartAllocation::usage ? weighted(gen) : pick(gen);
    s.coords.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      double u = 0.0;
      while (u <= 0.0) u = unit(gen);
      s.coords(j) = u;
    }
  }
  return out;
}

RowMatrix decode_samples(const CaeModel& model, std::span<const LatentSample> samples) {
  RowMatrix out(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(model.config.ambient_dim));
  for (std::size_t a = 0; a < model.num_charts(); ++a) {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (samples[i].chart == a) rows.push_back(static_cast<Eigen::Index>(i));
    }
    if (rows.empty()) continue;
    RowMatrix z(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(model.config.chart_dim));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      z.row(static_cast<Eigen::Index>(r)) = samples[static_cast<std::size_t>(rows[r])].coords.transpose();
    }
    const RowMatrix y = decode_chart(model, z, a);
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(rows[r]) = y.row(static_cast<Eigen::Index>(r));
  }
  return out;
}

std::size_t nearest_index(const RowMatrix& points, const Eigen::Ref<const Eigen::RowVectorXd>& q, double* sq_dist) {
  if (points.rows() == 0) throw std::invalid_argument("nearest_index: empty point set");
  std::size_t best = 0;
  double best_d = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < points.cols(); ++j) {
      const double diff = points(i, j) - q(j);
      s += diff * diff;
    }
    if (i == 0 || s < best_d) {
      best_d = s;
      best = static_cast<std::size_t>(i);
    }
  }
  if (sq_dist) *sq_dist = best_d;
  return best;
}

double reconstruction_error(const CaeModel& model, const PointCloud& test) {
  if (test.size() == 0) throw std::invalid_argument("reconstruction_error: empty test set");
  const Evaluation ev = evaluate(model, test.points);
  return (test.points - ev.y).rowwise().squaredNorm().mean();
}

double unfaithfulness(const CaeModel& model, const PointCloud& train, std::size_t ell, std::uint64_t seed) {
  const auto samples = sample_latent(model, ell, seed);
  const RowMatrix y = decode_samples(model, samples);
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    double d2 = 0.0;
    nearest_index(train.points, y.row(i), &d2);
    total += d2;
  }
  return total / static_cast<double>(ell);
}

double coverage(const CaeModel& model, const PointCloud& train, std::size_t ell, std::uint64_t seed) {
  const auto samples = sample_latent(model, ell, seed);
  const RowMatrix y = decode_samples(model, samples);
  std::set<std::size_t> hit;
  for (Eigen::Index i = 0; i < y.rows(); ++i) hit.insert(nearest_index(train.points, y.row(i)));
  return static_cast<double>(hit.size()) / static_cast<double>(ell);
}

EvalReport evaluate_metrics(const CaeModel& model, const PointCloud& train, const PointCloud& test, std::size_t ell,
                            std::uint64_t seed) {
  EvalReport r;
  r.recon_error = reconstruction_error(model, test);
  r.unfaithfulness = unfaithfulness(model, train, ell, seed);
  r.coverage = coverage(model, train, ell, seed);
  r.n_test = test.size();
  r.ell = ell;
  r.seed = seed;
  r.charts_live = model.num_charts();
  r.samples_per_chart.assign(model.num_charts(), 0);
  for (const auto& s : sample_latent(model, ell, seed)) ++r.samples_per_chart[s.chart];
  return r;
}

std::string EvalReport::to_json() const {
  nlohmann::json j{{"recon_error", recon_error},
                   {"unfaithfulness", unfaithfulness},
                   {"coverage", coverage},
                   {"ell", ell},
                   {"seed", seed},
                   {"charts_live", charts_live},
                   {"n_test", n_test},
                   {"n_latent_samples", ell},
                   {"samples_per_chart", samples_per_chart}};
  return j.dump(2);
}

GeodesicPath geodesic_path(const CaeModel& model, const Eigen::Ref<const Eigen::VectorXd>& a,
                           const Eigen::Ref<const Eigen::VectorXd>& b, std::size_t k) {
  if (k < 2) throw std::invalid_argument("geodesic_length: k must be >= 2");
  RowMatrix ends(2, a.size());
  ends.row(0) = a.transpose();
  ends.row(1) = b.transpose();
  const Evaluation ev = evaluate(model, ends);
  if (ev.winner[0] != ev.winner[1]) {
    throw DifferentChartsError("geodesic_length: endpoints fall in charts " + std::to_string(ev.winner[0]) + " and " +
                               std::to_string(ev.winner[1]) + "; paths across charts are not supported");
  }
  GeodesicPath path;
  path.chart = ev.winner[0];
  const Eigen::RowVectorXd za = ev.z_charts[path.chart].row(0);
  const Eigen::RowVectorXd zb = ev.z_charts[path.chart].row(1);
  RowMatrix z(static_cast<Eigen::Index>(k), za.size());
  for (std::size_t i = 0; i < k; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(k - 1);
    z.row(static_cast<Eigen::Index>(i)) = (1.0 - t) * za + t * zb;
  }
  path.points = decode_chart(model, z, path.chart);
  for (Eigen::Index i = 0; i + 1 < path.points.rows(); ++i) {
    path.length += (path.points.row(i + 1) - path.points.row(i)).norm();
  }
  return path;
}

double geodesic_length(const CaeModel& model, const Eigen::Ref<const Eigen::VectorXd>& a,
                       const Eigen::Ref<const Eigen::VectorXd>& b, std::size_t k) {
  if (a == b) return 0.0;
  return geodesic_path(model, a, b, k).length;
}

std::vector<double> consecutive_latent_distances(const CaeModel& model, const Eigen::Ref<const RowMatrix>& sequence) {
  if (sequence.rows() < 2) throw std::invalid_argument("consecutive_latent_distances: need at least two rows");
  const Evaluation ev = evaluate(model, sequence);
  std::vector<double> out;
  for (Eigen::Index t = 0; t + 1 < sequence.rows(); ++t) {
    const auto a = ev.winner[static_cast<std::size_t>(t)];
    const auto b = ev.winner[static_cast<std::size_t>(t) + 1];
    const Eigen::VectorXd next = ev.z_charts[b].row(t + 1).transpose();
    if (a == b) {
      out.push_back((ev.z_charts[a].row(t).transpose() - next).norm());
    } else {
      out.push_back((transition(model, ev.z_charts[a].row(t).transpose(), a, b) - next).norm());
    }
  }
  return out;
}

}  // namespace cae
