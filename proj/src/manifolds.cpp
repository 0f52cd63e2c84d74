#include "cae/manifolds.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace cae {

namespace {

constexpr double kPi = std::numbers::pi;

struct Implicit {
  double value;
  Eigen::Vector3d gradient;
};

// ((x^2 (1 - x^2) - y^2)^2 + z^2 / 4 - 0.01): a thickened figure eight.
Implicit double_torus_field(const Eigen::Vector3d& p) {
  const double x = p.x(), y = p.y(), z = p.z();
  const double g = x * x - x * x * x * x - y * y;
  return {g * g + z * z / 4.0 - 0.01,
          {2.0 * g * (2.0 * x - 4.0 * x * x * x), 2.0 * g * (-2.0 * y), z / 2.0}};
}

// Thickened planar band 0.3 <= P <= 2 where P is the product of squared
// distances to three centers on the unit circle; the band has three holes.
Implicit genus3_field(const Eigen::Vector3d& p) {
  static const std::array<Eigen::Vector2d, 3> centers = [] {
    std::array<Eigen::Vector2d, 3> c;
    for (int k = 0; k < 3; ++k) {
      const double a = kPi / 2.0 + 2.0 * kPi * k / 3.0;
      c[static_cast<std::size_t>(k)] = {std::cos(a), std::sin(a)};
    }
    return c;
  }();
  std::array<double, 3> q{};
  std::array<Eigen::Vector2d, 3> dq;
  for (std::size_t k = 0; k < 3; ++k) {
    const Eigen::Vector2d d = p.head<2>() - centers[k];
    q[k] = d.squaredNorm();
    dq[k] = 2.0 * d;
  }
  const double P = q[0] * q[1] * q[2];
  const Eigen::Vector2d dP = dq[0] * q[1] * q[2] + dq[1] * q[0] * q[2] + dq[2] * q[0] * q[1];
  constexpr double mid = 1.15, half_width = 0.85, z_scale = 16.0;
  const double s = P - mid;
  return {s * s + z_scale * p.z() * p.z() - half_width * half_width,
          {2.0 * s * dP.x(), 2.0 * s * dP.y(), 2.0 * z_scale * p.z()}};
}

// Area-uniform samples of an implicit surface: uniform box samples are
// kept when their first-order distance to the level set is below a thin
// shell width, then projected onto the surface by Newton steps.
RowMatrix sample_implicit(Implicit (*field)(const Eigen::Vector3d&), const Eigen::Vector3d& lo,
                          const Eigen::Vector3d& hi, std::size_t n, std::mt19937_64& gen) {
  constexpr double shell = 2e-3;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  RowMatrix out(static_cast<Eigen::Index>(n), 3);
  std::size_t filled = 0;
  while (filled < n) {
    Eigen::Vector3d p;
    for (int k = 0; k < 3; ++k) p(k) = lo(k) + (hi(k) - lo(k)) * unit(gen);
    auto f = field(p);
    const double gn = f.gradient.norm();
    if (gn == 0.0 || std::abs(f.value) / gn > shell) continue;
    bool converged = false;
    for (int it = 0; it < 50; ++it) {
      f = field(p);
      const double g2 = f.gradient.squaredNorm();
      if (g2 == 0.0) break;
      p -= f.value / g2 * f.gradient;
      if (std::abs(field(p).value) < 1e-13) {
        converged = true;
        break;
      }
    }
    if (!converged) continue;
    out.row(static_cast<Eigen::Index>(filled++)) = p.transpose();
  }
  return out;
}

const std::vector<Eigen::Vector2d>& cat_control_points() {
  static const std::vector<Eigen::Vector2d> pts = {
      {0.0, -1.0}, {0.55, -0.9}, {0.95, -0.45}, {1.05, 0.15}, {0.9, 0.65}, {1.0, 1.35}, {0.55, 0.95},
      {0.0, 1.0},  {-0.55, 0.95}, {-1.0, 1.35}, {-0.9, 0.65}, {-1.05, 0.15}, {-0.95, -0.45}, {-0.55, -0.9}};
  return pts;
}

// Periodic Catmull-Rom spline through the control points, s in [0, 1).
Eigen::Vector2d cat_spline(double s) {
  const auto& c = cat_control_points();
  const auto k = static_cast<double>(c.size());
  double u = s * k;
  u -= k * std::floor(u / k);
  const auto i = static_cast<std::size_t>(std::floor(u)) % c.size();
  const double t = u - std::floor(u);
  const auto at = [&](std::size_t j) -> const Eigen::Vector2d& { return c[j % c.size()]; };
  const auto& p0 = at(i + c.size() - 1);
  const auto& p1 = at(i);
  const auto& p2 = at(i + 1);
  const auto& p3 = at(i + 2);
  const double t2 = t * t, t3 = t2 * t;
  return 0.5 * ((2.0 * p1) + (-p0 + p2) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 +
                (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3);
}

// Cumulative arc length table used to sample the cat curve uniformly.
struct ArcTable {
  std::vector<double> s;
  std::vector<double> length;
};

const ArcTable& cat_arc_table() {
  static const ArcTable table = [] {
    constexpr std::size_t steps = 1 << 14;
    ArcTable t;
    t.s.resize(steps + 1);
    t.length.resize(steps + 1);
    Eigen::Vector2d prev = cat_spline(0.0);
    t.length[0] = 0.0;
    for (std::size_t i = 1; i <= steps; ++i) {
      t.s[i] = static_cast<double>(i) / steps;
      const Eigen::Vector2d p = cat_spline(t.s[i]);
      t.length[i] = t.length[i - 1] + (p - prev).norm();
      prev = p;
    }
    return t;
  }();
  return table;
}

double cat_parameter_at_fraction(double frac) {
  const auto& t = cat_arc_table();
  const double target = frac * t.length.back();
  const auto it = std::lower_bound(t.length.begin(), t.length.end(), target);
  const auto hi = static_cast<std::size_t>(std::max<std::ptrdiff_t>(1, it - t.length.begin()));
  const std::size_t lo = hi - 1;
  const double span = t.length[hi] - t.length[lo];
  const double w = span > 0 ? (target - t.length[lo]) / span : 0.0;
  return t.s[lo] + w * (t.s[hi] - t.s[lo]);
}

}  // namespace

std::string_view to_string(ManifoldKind kind) {
  switch (kind) {
    case ManifoldKind::circle: return "circle";
    case ManifoldKind::sphere: return "sphere";
    case ManifoldKind::torus: return "torus";
    case ManifoldKind::double_torus: return "double_torus";
    case ManifoldKind::genus3: return "genus3";
    case ManifoldKind::cat_curve: return "cat_curve";
  }
  return "unknown";
}

ManifoldKind parse_manifold_kind(std::string_view name) {
  for (auto k : {ManifoldKind::circle, ManifoldKind::sphere, ManifoldKind::torus, ManifoldKind::double_torus,
                 ManifoldKind::genus3, ManifoldKind::cat_curve}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown manifold kind '" + std::string(name) + "'");
}

std::size_t native_dim(ManifoldKind kind) {
  return kind == ManifoldKind::circle || kind == ManifoldKind::cat_curve ? 2 : 3;
}

std::size_t intrinsic_dim(ManifoldKind kind) {
  return kind == ManifoldKind::circle || kind == ManifoldKind::cat_curve ? 1 : 2;
}

PointCloud PointCloud::subset(const std::vector<std::size_t>& rows) const {
  PointCloud out;
  out.intrinsic_dim = intrinsic_dim;
  out.kind = kind;
  out.points.resize(static_cast<Eigen::Index>(rows.size()), points.cols());
  if (params) out.params = RowMatrix(static_cast<Eigen::Index>(rows.size()), params->cols());
  if (labels) out.labels = std::vector<int>();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    const auto o = static_cast<Eigen::Index>(i);
    out.points.row(o) = points.row(r);
    if (params) out.params->row(o) = params->row(r);
    if (labels) out.labels->push_back((*labels)[rows[i]]);
  }
  return out;
}

RowMatrix embedding_map(const ManifoldSpec& spec) {
  const auto k = static_cast<Eigen::Index>(native_dim(spec.kind));
  const auto m = static_cast<Eigen::Index>(spec.ambient_dim);
  if (m < k) {
    throw std::invalid_argument("ambient_dim " + std::to_string(m) + " is below the native dimension " +
                                std::to_string(k) + " of " + std::string(to_string(spec.kind)));
  }
  if (m == k) return RowMatrix::Identity(m, m);
  std::mt19937_64 gen(spec.embed_seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd g = Eigen::MatrixXd::NullaryExpr(m, m, [&] { return normal(gen); });
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m, k);
  return q;
}

RowMatrix cat_curve_points(const Eigen::Ref<const Eigen::VectorXd>& t) {
  RowMatrix out(t.size(), 2);
  for (Eigen::Index i = 0; i < t.size(); ++i) out.row(i) = cat_spline(t(i)).transpose();
  return out;
}

PointCloud sample(const ManifoldSpec& spec, std::size_t n, std::uint64_t rng_seed) {
  if (n == 0) throw std::invalid_argument("sample: n must be >= 1");
  if (spec.noise_sigma < 0) throw std::invalid_argument("sample: noise_sigma must be >= 0");
  const RowMatrix embed = embedding_map(spec);
  std::mt19937_64 gen(rng_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal;
  const auto rows = static_cast<Eigen::Index>(n);

  PointCloud cloud;
  cloud.kind = spec.kind;
  cloud.intrinsic_dim = intrinsic_dim(spec.kind);
  RowMatrix native;

  switch (spec.kind) {
    case ManifoldKind::circle: {
      native.resize(rows, 2);
      RowMatrix params(rows, 1);
      for (Eigen::Index i = 0; i < rows; ++i) {
        const double a = 2.0 * kPi * unit(gen);
        native.row(i) << std::cos(a), std::sin(a);
        params(i, 0) = a;
      }
      cloud.params = std::move(params);
      break;
    }
    case ManifoldKind::sphere: {
      native.resize(rows, 3);
      RowMatrix params(rows, 2);
      for (Eigen::Index i = 0; i < rows; ++i) {
        Eigen::Vector3d g;
        do {
          g = {normal(gen), normal(gen), normal(gen)};
        } while (g.norm() < 1e-12);
        g.normalize();
        native.row(i) = g.transpose();
        params(i, 0) = std::acos(std::clamp(g.z(), -1.0, 1.0));
        params(i, 1) = std::atan2(g.y(), g.x());
      }
      cloud.params = std::move(params);
      break;
    }
    case ManifoldKind::torus: {
      native.resize(rows, 3);
      RowMatrix params(rows, 2);
      // Rejection on the area element (R + r cos v).
      for (Eigen::Index i = 0; i < rows;) {
        const double u = 2.0 * kPi * unit(gen);
        const double v = 2.0 * kPi * unit(gen);
        const double w = unit(gen);
        if (w * (kTorusMajor + kTorusMinor) > kTorusMajor + kTorusMinor * std::cos(v)) continue;
        const double rad = kTorusMajor + kTorusMinor * std::cos(v);
        native.row(i) << rad * std::cos(u), rad * std::sin(u), kTorusMinor * std::sin(v);
        params.row(i) << u, v;
        ++i;
      }
      cloud.params = std::move(params);
      break;
    }
    case ManifoldKind::double_torus:
      native = sample_implicit(&double_torus_field, {-1.1, -0.65, -0.22}, {1.1, 0.65, 0.22}, n, gen);
      break;
    case ManifoldKind::genus3:
      native = sample_implicit(&genus3_field, {-2.2, -2.2, -0.22}, {2.2, 2.2, 0.22}, n, gen);
      break;
    case ManifoldKind::cat_curve: {
      native.resize(rows, 2);
      for (Eigen::Index i = 0; i < rows; ++i) {
        native.row(i) = cat_spline(cat_parameter_at_fraction(unit(gen))).transpose();
      }
      break;
    }
  }

  cloud.points = native * embed.transpose();
  if (spec.noise_sigma > 0) {
    for (Eigen::Index i = 0; i < cloud.points.size(); ++i) {
      cloud.points.data()[i] += spec.noise_sigma * normal(gen);
    }
  }
  return cloud;
}

double delta_density(const PointCloud& X, const PointCloud& probes) {
  if (X.size() == 0) throw std::invalid_argument("delta_density: empty sample set");
  if (X.ambient_dim() != probes.ambient_dim()) throw std::invalid_argument("delta_density: dimension mismatch");
  double worst = 0.0;
  for (Eigen::Index p = 0; p < probes.points.rows(); ++p) {
    const double d2 = (X.points.rowwise() - probes.points.row(p)).rowwise().squaredNorm().minCoeff();
    worst = std::max(worst, d2);
  }
  return std::sqrt(worst);
}

FpsResult farthest_point_sampling(const PointCloud& X, std::size_t count, std::size_t start) {
  const std::size_t n = X.size();
  if (count > n) {
    throw std::invalid_argument("farthest_point_sampling: requested " + std::to_string(count) + " of " +
                                std::to_string(n) + " points");
  }
  if (count > 0 && start >= n) throw std::invalid_argument("farthest_point_sampling: start index out of range");
  FpsResult result;
  if (count == 0) {
    result.min_dist = std::numeric_limits<double>::infinity();
    return result;
  }
  Eigen::VectorXd dist = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n),
                                                   std::numeric_limits<double>::infinity());
  std::size_t next = start;
  for (std::size_t k = 0; k < count; ++k) {
    result.indices.push_back(next);
    const Eigen::VectorXd d =
        (X.points.rowwise() - X.points.row(static_cast<Eigen::Index>(next))).rowwise().squaredNorm();
    dist = dist.cwiseMin(d);
    Eigen::Index arg = 0;
    dist.maxCoeff(&arg);
    next = static_cast<std::size_t>(arg);
  }
  result.min_dist = std::sqrt(dist.maxCoeff());
  return result;
}

}  // namespace cae
