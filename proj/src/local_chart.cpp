#include "cae/simplicial.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace cae {

namespace {

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  return a;
}

Eigen::Vector3d sphere_point(double polar, double azimuth) {
  return {std::sin(polar) * std::cos(azimuth), std::sin(polar) * std::sin(azimuth), std::cos(polar)};
}

RowMatrix latent_coordinates(const PointCloud& data, std::size_t center, const std::vector<std::size_t>& members,
                             std::size_t d) {
  const auto n = static_cast<Eigen::Index>(members.size());
  const auto c = static_cast<Eigen::Index>(center);
  RowMatrix z(n, static_cast<Eigen::Index>(d));
  if (data.kind && data.params) {
    const auto& P = *data.params;
    switch (*data.kind) {
      case ManifoldKind::circle:
        for (Eigen::Index i = 0; i < n; ++i) z(i, 0) = wrap_angle(P(static_cast<Eigen::Index>(members[i]), 0) - P(c, 0));
        return z;
      case ManifoldKind::torus:
        for (Eigen::Index i = 0; i < n; ++i) {
          const auto r = static_cast<Eigen::Index>(members[i]);
          z(i, 0) = kTorusMajor * wrap_angle(P(r, 0) - P(c, 0));
          z(i, 1) = kTorusMinor * wrap_angle(P(r, 1) - P(c, 1));
        }
        return z;
      case ManifoldKind::sphere: {
        const Eigen::Vector3d pc = sphere_point(P(c, 0), P(c, 1));
        Eigen::Vector3d helper = std::abs(pc.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
        const Eigen::Vector3d e1 = (helper - helper.dot(pc) * pc).normalized();
        const Eigen::Vector3d e2 = pc.cross(e1);
        for (Eigen::Index i = 0; i < n; ++i) {
          const auto r = static_cast<Eigen::Index>(members[i]);
          const Eigen::Vector3d p = sphere_point(P(r, 0), P(r, 1));
          const double theta = std::acos(std::clamp(pc.dot(p), -1.0, 1.0));
          const Eigen::Vector3d t = p - pc.dot(p) * pc;
          const double tn = t.norm();
          if (tn < 1e-15) {
            z.row(i).setZero();
          } else {
            z(i, 0) = theta * t.dot(e1) / tn;
            z(i, 1) = theta * t.dot(e2) / tn;
          }
        }
        return z;
      }
      default:
        break;
    }
  }
  // Tangent-plane projection from the local principal directions.
  RowMatrix X(n, data.points.cols());
  for (Eigen::Index i = 0; i < n; ++i) X.row(i) = data.points.row(static_cast<Eigen::Index>(members[i]));
  const Eigen::RowVectorXd xc = data.points.row(c);
  const RowMatrix centered = X.rowwise() - X.colwise().mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::MatrixXd W = svd.matrixV().leftCols(static_cast<Eigen::Index>(d));
  z = (X.rowwise() - xc) * W;
  return z;
}

}  // namespace

LocalChart build_local_chart(const PointCloud& data, std::size_t center, double radius, double epsilon) {
  if (center >= data.size()) throw std::out_of_range("build_local_chart: center index out of range");
  if (!(radius > 0.0)) throw std::invalid_argument("build_local_chart: radius must be positive");
  if (!(epsilon > 0.0)) throw std::invalid_argument("build_local_chart: epsilon must be positive");
  if (!data.intrinsic_dim) throw std::invalid_argument("build_local_chart: point cloud has no intrinsic dimension");
  const std::size_t d = *data.intrinsic_dim;
  if (d != 1 && d != 2) throw std::invalid_argument("build_local_chart: only d = 1 or 2 is triangulated");

  LocalChart chart;
  chart.center = center;
  const Eigen::RowVectorXd xc = data.points.row(static_cast<Eigen::Index>(center));
  for (std::size_t i = 0; i < data.size(); ++i) {
    if ((data.points.row(static_cast<Eigen::Index>(i)) - xc).norm() <= radius) chart.members.push_back(i);
  }
  if (chart.members.size() < d + 2) {
    throw std::invalid_argument("build_local_chart: " + std::to_string(chart.members.size()) +
                                " points within radius, need at least " + std::to_string(d + 2));
  }
  chart.latent = latent_coordinates(data, center, chart.members, d);
  chart.points.resize(static_cast<Eigen::Index>(chart.members.size()), data.points.cols());
  for (std::size_t i = 0; i < chart.members.size(); ++i) {
    chart.points.row(static_cast<Eigen::Index>(i)) = data.points.row(static_cast<Eigen::Index>(chart.members[i]));
  }
  chart.complex = d == 1 ? path_complex(chart.latent.col(0)) : delaunay_2d(chart.latent);

  for (std::size_t s = 0; s < chart.complex.simplices.size(); ++s) {
    const auto& idx = chart.complex.simplices[s];
    Eigen::MatrixXd X(chart.points.cols(), static_cast<Eigen::Index>(d));
    for (std::size_t k = 1; k <= d; ++k) {
      X.col(static_cast<Eigen::Index>(k - 1)) =
          (chart.points.row(static_cast<Eigen::Index>(idx[k])) - chart.points.row(static_cast<Eigen::Index>(idx[0]))).transpose();
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(X);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) <= 1e-12 * std::max(1.0, sv(0))) {
      throw std::invalid_argument("build_local_chart: simplex " + std::to_string(s) +
                                  " is degenerate in the ambient space");
    }
  }
  chart.decoder = compile_pl(chart.complex, chart.points);
  return chart;
}

Eigen::VectorXd LocalChart::encode(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const auto d = static_cast<Eigen::Index>(complex.dim());
  double best = std::numeric_limits<double>::infinity();
  double best_clamped = std::numeric_limits<double>::infinity();
  Eigen::VectorXd z_best, z_clamped;
  for (std::size_t s = 0; s < complex.simplices.size(); ++s) {
    const auto& idx = complex.simplices[s];
    const Eigen::VectorXd x0 = points.row(static_cast<Eigen::Index>(idx[0])).transpose();
    Eigen::MatrixXd X(points.cols(), d);
    for (Eigen::Index k = 1; k <= d; ++k) {
      X.col(k - 1) = points.row(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(k)])).transpose() - x0;
    }
    const Eigen::VectorXd c = X.completeOrthogonalDecomposition().solve(x - x0);
    Eigen::VectorXd bary(d + 1);
    bary(0) = 1.0 - c.sum();
    bary.tail(d) = c;
    const auto latent_of = [&](const Eigen::VectorXd& b) {
      Eigen::VectorXd z = Eigen::VectorXd::Zero(d);
      for (Eigen::Index k = 0; k <= d; ++k) z += b(k) * latent.row(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(k)])).transpose();
      return z;
    };
    if (bary.minCoeff() >= -1e-9) {
      const double dist = (x - (X * c + x0)).norm();
      if (dist < best) {
        best = dist;
        z_best = latent_of(bary);
      }
    } else if (!std::isfinite(best)) {
      Eigen::VectorXd b = bary.cwiseMax(0.0);
      b /= b.sum();
      Eigen::VectorXd y = b(0) * x0;
      for (Eigen::Index k = 1; k <= d; ++k) y += b(k) * (X.col(k - 1) + x0);
      const double dist = (x - y).norm();
      if (dist < best_clamped) {
        best_clamped = dist;
        z_clamped = latent_of(b);
      }
    }
  }
  return std::isfinite(best) ? z_best : z_clamped;
}

Eigen::VectorXd LocalChart::decode(const Eigen::Ref<const Eigen::VectorXd>& z) const { return decoder(z); }

double chi_indicator(double t, double epsilon, double mu) {
  if (!(mu > 0.0)) throw std::invalid_argument("chi_indicator: mu must be positive");
  const double e2 = epsilon * epsilon;
  if (t <= e2 + mu) return 1.0;
  if (t >= e2 + 2.0 * mu) return 0.0;
  return (e2 + 2.0 * mu - t) / mu;
}

double chi_indicator_relu(double t, double epsilon, double mu) {
  if (!(mu > 0.0)) throw std::invalid_argument("chi_indicator_relu: mu must be positive");
  const double e2 = epsilon * epsilon;
  const auto relu = [](double v) { return std::max(v, 0.0); };
  return relu(-t + e2 + 2.0 * mu) / mu - relu(-t + e2 + mu) / mu;
}

SampleBound sample_bound(std::size_t d, double tau, double C, double epsilon, double nu) {
  if (d == 0) throw std::invalid_argument("sample_bound: d must be >= 1");
  if (!(tau > 0.0) || !(C > 0.0) || !(epsilon > 0.0)) {
    throw std::invalid_argument("sample_bound: tau, C and epsilon must be positive");
  }
  if (!(nu > 0.0 && nu < 1.0)) throw std::invalid_argument("sample_bound: nu must lie in (0, 1)");
  if (epsilon >= tau / 2.0) {
    throw std::invalid_argument("sample_bound: the sampling theorem requires epsilon < tau/2");
  }
  SampleBound b{d, tau, C, epsilon, nu, 0.0, 0.0, 0.0};
  const double dd = static_cast<double>(d);
  b.beta1 = C * std::pow(epsilon / 4.0, -dd) * std::pow(1.0 - std::pow(epsilon / (8.0 * tau), 2), -dd / 2.0);
  b.beta2 = C * std::pow(epsilon / 8.0, -dd) * std::pow(1.0 - std::pow(epsilon / (16.0 * tau), 2), -dd / 2.0);
  b.n_required = std::ceil(b.beta1 * (std::log(b.beta2) + std::log(1.0 / nu)));
  return b;
}

FaithfulnessResult verify_faithfulness(const PointMap& encoder, const PointMap& decoder, const PointCloud& probes,
                                       double epsilon) {
  FaithfulnessResult r;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const Eigen::VectorXd x = probes.points.row(static_cast<Eigen::Index>(i)).transpose();
    r.sup_error = std::max(r.sup_error, (x - decoder(encoder(x))).norm());
  }
  r.pass = r.sup_error <= epsilon;
  return r;
}

FaithfulnessResult verify_faithfulness(const LocalChart& chart, const PointCloud& probes, double epsilon) {
  return verify_faithfulness([&](const Eigen::VectorXd& x) { return chart.encode(x); },
                             [&](const Eigen::VectorXd& z) { return chart.decode(z); }, probes, epsilon);
}

FaithfulnessResult verify_faithfulness(const CaeModel& model, const PointCloud& probes, double epsilon) {
  FaithfulnessResult r;
  if (probes.size() == 0) {
    r.pass = true;
    return r;
  }
  const auto ev = evaluate(model, probes.points);
  r.sup_error = (probes.points - ev.y).rowwise().norm().maxCoeff();
  r.pass = r.sup_error <= epsilon;
  return r;
}

}  // namespace cae
