#include "cae/metrics.hpp"
#include "support.hpp"

#include <doctest.h>

#include <json.hpp>

#include <algorithm>
#include <set>

using namespace cae;
using test::random_matrix;

namespace {

CaeModel toy(std::size_t m, std::size_t d, std::size_t N, std::uint64_t seed) {
  CaeConfig c;
  c.ambient_dim = m;
  c.embed_dim = m;
  c.chart_dim = d;
  c.num_charts = N;
  c.preset = Preset::custom;
  c.hidden = {8};
  return CaeModel::create(c, seed);
}

void make_constant(CaeModel& model, const Eigen::RowVectorXd& value) {
  auto& last = model.decoder.layers().back();
  last.weight.data().setZero();
  last.bias.data() = value.transpose();
}

// Unfaithfulness and coverage written out with a double loop over decoded
// samples and training rows.
std::pair<double, double> oracle(const CaeModel& model, const RowMatrix& train, std::size_t ell, std::uint64_t seed) {
  const auto samples = sample_latent(model, ell, seed);
  double total = 0.0;
  std::set<Eigen::Index> hit;
  const RowMatrix Y = decode_samples(model, samples);
  for (Eigen::Index r = 0; r < Y.rows(); ++r) {
    const RowMatrix y = Y.row(r);
    Eigen::Index best = -1;
    double best_d = 0.0;
    for (Eigen::Index i = 0; i < train.rows(); ++i) {
      double d2 = 0.0;
      for (Eigen::Index j = 0; j < train.cols(); ++j) d2 += (train(i, j) - y(0, j)) * (train(i, j) - y(0, j));
      if (best < 0 || d2 < best_d) {
        best = i;
        best_d = d2;
      }
    }
    total += best_d;
    hit.insert(best);
  }
  return {total / double(ell), double(hit.size()) / double(ell)};
}

}  // namespace

TEST_CASE("latent samples are inside the box and reproducible") {
  const CaeModel m = toy(3, 2, 3, 1);
  const auto a = sample_latent(m, 500, 9);
  const auto b = sample_latent(m, 500, 9);
  std::vector<std::size_t> per(3, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].chart == b[i].chart);
    CHECK(a[i].coords == b[i].coords);
    CHECK((a[i].coords.array() > 0).all());
    CHECK((a[i].coords.array() < 1).all());
    ++per[a[i].chart];
  }
  for (auto c : per) CHECK(c > 100);
  const std::vector<std::size_t> usage{0, 5, 0};
  for (const auto& s : sample_latent(m, 50, 2, ChartAllocation::usage, usage)) CHECK(s.chart == 1);
  CHECK_THROWS(sample_latent(m, 0, 1));
  CHECK_THROWS(sample_latent(m, 5, 1, ChartAllocation::usage, std::vector<std::size_t>{1}));
}

TEST_CASE("decode_samples matches per-sample decoding") {
  const CaeModel m = toy(3, 2, 3, 2);
  const auto s = sample_latent(m, 40, 3);
  const RowMatrix y = decode_samples(m, s);
  for (std::size_t i = 0; i < s.size(); ++i)
    CHECK((y.row(Eigen::Index(i)) - decode_chart(m, s[i].coords.transpose(), s[i].chart)).norm() < 1e-14);
}

TEST_CASE("nearest index breaks ties toward the lowest index") {
  RowMatrix P(4, 2);
  P << 1, 0, -1, 0, 0, 1, 1, 0;
  double d2 = -1;
  CHECK(nearest_index(P, Eigen::RowVector2d(2, 0), &d2) == 0);
  CHECK(d2 == 1.0);
  CHECK(nearest_index(P, Eigen::RowVector2d(0, 0)) == 0);
  CHECK(nearest_index(P, Eigen::RowVector2d(0, 0.9)) == 2);
  CHECK_THROWS(nearest_index(RowMatrix(0, 2), Eigen::RowVector2d(0, 0)));
}

TEST_CASE("unfaithfulness and coverage equal the double-loop oracle") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    CaeModel m = toy(3, 2, 3, seed);
    const RowMatrix train = random_matrix(300 + 100 * Eigen::Index(seed), 3, seed + 10, 0.2);
    PointCloud pc;
    pc.points = train;
    for (std::size_t ell : {1u, 17u, 50u}) {
      const auto [u, c] = oracle(m, train, ell, seed);
      CHECK(unfaithfulness(m, pc, ell, seed) == u);
      CHECK(coverage(m, pc, ell, seed) == c);
      CHECK(std::round(c * double(ell)) == doctest::Approx(c * double(ell)).epsilon(1e-12));
    }
  }
}

TEST_CASE("trivial metric values") {
  CaeModel m = toy(3, 1, 2, 4);
  PointCloud train;
  train.points = random_matrix(50, 3, 5);
  SUBCASE("constant decoder at a training point") {
    make_constant(m, train.points.row(7));
    CHECK(unfaithfulness(m, train, 30, 1) == 0.0);
    CHECK(coverage(m, train, 30, 1) == doctest::Approx(1.0 / 30));
  }
  SUBCASE("one sample covers itself") { CHECK(coverage(m, train, 1, 3) == 1.0); }
  SUBCASE("constant offset reconstruction") {
    const Eigen::RowVector3d c(0.1, 0.2, 0.3);
    make_constant(m, c);
    PointCloud test;
    test.points = RowMatrix(1, 3);
    test.points.row(0) = c + Eigen::RowVector3d(0.05, 0, 0);
    CHECK(reconstruction_error(m, test) == doctest::Approx(0.0025).epsilon(1e-12));
  }
}

TEST_CASE("reconstruction error uses the winner chart") {
  const CaeModel m = toy(3, 2, 3, 6);
  PointCloud test;
  test.points = random_matrix(25, 3, 7);
  const Evaluation ev = evaluate(m, test.points);
  double s = 0;
  for (Eigen::Index i = 0; i < 25; ++i) s += (test.points.row(i) - ev.y_charts[ev.winner[std::size_t(i)]].row(i)).squaredNorm();
  CHECK(reconstruction_error(m, test) == doctest::Approx(s / 25).epsilon(1e-14));
  CHECK_THROWS(reconstruction_error(m, PointCloud{}));
}

TEST_CASE("evaluate_metrics report") {
  const CaeModel m = toy(3, 2, 3, 8);
  PointCloud train, test;
  train.points = random_matrix(60, 3, 9);
  test.points = random_matrix(10, 3, 10);
  const EvalReport r = evaluate_metrics(m, train, test, 20, 4);
  CHECK(r.unfaithfulness == unfaithfulness(m, train, 20, 4));
  CHECK(r.coverage == coverage(m, train, 20, 4));
  std::size_t total = 0;
  for (auto c : r.samples_per_chart) total += c;
  CHECK(total == 20);
  const auto j = nlohmann::json::parse(r.to_json());
  for (const char* k : {"recon_error", "unfaithfulness", "coverage", "ell", "seed", "charts_live"}) CHECK(j.contains(k));
}

TEST_CASE("geodesic length basics") {
  const CaeModel m = toy(2, 1, 1, 11);
  const Eigen::Vector2d a(0.6, 0.8), b(0.8, 0.6);
  CHECK(geodesic_length(m, a, a, 10) == 0.0);
  const auto p2 = geodesic_path(m, a, b, 2);
  CHECK(p2.points.rows() == 2);
  CHECK(p2.length == doctest::Approx((p2.points.row(1) - p2.points.row(0)).norm()).epsilon(1e-15));
  const auto p9 = geodesic_path(m, a, b, 9);
  CHECK(p9.points.row(0) == p2.points.row(0));
  CHECK(p9.length >= p2.length - 1e-12);
  CHECK_THROWS(geodesic_path(m, a, b, 1));
}

TEST_CASE("geodesic across charts is refused") {
  CaeModel m = toy(2, 1, 2, 12);
  const RowMatrix X = random_matrix(200, 2, 13);
  const Evaluation ev = evaluate(m, X);
  const auto it = std::find(ev.winner.begin(), ev.winner.end(), ev.winner[0] == 0 ? 1u : 0u);
  REQUIRE(it != ev.winner.end());
  const auto j = Eigen::Index(it - ev.winner.begin());
  CHECK_THROWS_AS(geodesic_length(m, X.row(0).transpose(), X.row(j).transpose(), 8), DifferentChartsError);
}

TEST_CASE("consecutive latent distances") {
  const CaeModel m = toy(2, 1, 2, 14);
  RowMatrix same(5, 2);
  same.rowwise() = Eigen::RowVector2d(0.3, -0.4);
  for (double d : consecutive_latent_distances(m, same)) CHECK(d == 0.0);

  const RowMatrix X = random_matrix(100, 2, 15);
  const Evaluation ev = evaluate(m, X);
  const auto dists = consecutive_latent_distances(m, X);
  CHECK(dists.size() == 99);
  for (std::size_t t = 0; t + 1 < 100; ++t) {
    const auto a = ev.winner[t], b = ev.winner[t + 1];
    const Eigen::VectorXd next = ev.z_charts[b].row(Eigen::Index(t) + 1).transpose();
    const Eigen::VectorXd from = a == b ? Eigen::VectorXd(ev.z_charts[a].row(Eigen::Index(t)).transpose())
                                        : transition(m, ev.z_charts[a].row(Eigen::Index(t)).transpose(), a, b);
    CHECK(std::isfinite(dists[t]));
    CHECK(dists[t] == doctest::Approx((from - next).norm()).epsilon(1e-14));
  }
  CHECK_THROWS(consecutive_latent_distances(m, X.topRows(1)));
}
