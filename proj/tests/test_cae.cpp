#include "cae/checkpoint.hpp"
#include "cae/model.hpp"
#include "support.hpp"

#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <fstream>

using namespace cae;
using test::grad_check;
using test::random_matrix;

namespace {

// Straight loop over layers: relu on hidden layers, then the output map.
Eigen::VectorXd run(const Mlp& net, Eigen::VectorXd x) {
  const auto& L = net.layers();
  for (std::size_t k = 0; k < L.size(); ++k) {
    Eigen::VectorXd y = L[k].bias.data();
    const auto W = L[k].weight.mat();
    for (Eigen::Index j = 0; j < W.cols(); ++j)
      for (Eigen::Index i = 0; i < W.rows(); ++i) y(j) += x(i) * W(i, j);
    if (k + 1 < L.size()) {
      x = y.cwiseMax(0.0);
    } else if (net.spec().output == OutputActivation::sigmoid) {
      x = (1.0 + (-y.array()).exp()).inverse().matrix();
    } else if (net.spec().output == OutputActivation::softmax) {
      const Eigen::ArrayXd e = (y.array() - y.maxCoeff()).exp();
      x = (e / e.sum()).matrix();
    } else {
      x = y;
    }
  }
  return x;
}

CaeConfig small(std::size_t m, std::size_t l, std::size_t d, std::size_t N) {
  CaeConfig c;
  c.ambient_dim = m;
  c.embed_dim = l;
  c.chart_dim = d;
  c.num_charts = N;
  c.preset = Preset::custom;
  c.hidden = {5};
  return c;
}

void perturb_biases(CaeModel& m, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n(0.0, 0.3);
  for (auto& t : m.parameters())
    if (t.rank() == 1) t.data() = Eigen::VectorXd::NullaryExpr(t.data().size(), [&] { return n(gen); });
}

}  // namespace

TEST_CASE("config validation and presets") {
  CaeConfig c = small(3, 2, 1, 2);
  CHECK_NOTHROW(c.validate());
  c.chart_dim = 3;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = small(3, 2, 1, 0);
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CaeConfig p;
  CHECK(p.hidden_widths() == std::vector<std::size_t>{100, 100});
  p.preset = Preset::large_cae;
  CHECK(p.hidden_widths().size() == 4);
  CHECK(parse_predictor_input("z_alpha_distances") == PredictorInput::z_alpha_distances);
  CHECK(parse_lipschitz_scope("chart_function") == LipschitzScope::chart_function);
  CHECK_THROWS_AS(parse_preset("huge"), std::invalid_argument);
}

TEST_CASE("forward matches a loop oracle") {
  for (auto input : {PredictorInput::x, PredictorInput::z, PredictorInput::z_alpha_distances}) {
    CaeConfig c = small(4, 3, 2, 3);
    c.predictor_input = input;
    CaeModel m = CaeModel::create(c, 5);
    perturb_biases(m, 6);
    const RowMatrix X = random_matrix(7, 4, 8);
    const ForwardResult fr = forward(m, Tensor::matrix(X));
    for (Eigen::Index i = 0; i < 7; ++i) {
      const Eigen::VectorXd x = X.row(i).transpose();
      const Eigen::VectorXd z = run(m.encoder, x);
      Eigen::VectorXd e(3), dist(3);
      std::vector<Eigen::VectorXd> ys;
      for (std::size_t a = 0; a < 3; ++a) {
        const Eigen::VectorXd za = run(m.chart_encoders[a], z);
        CHECK((za.array() > 0).all());
        CHECK((za.array() < 1).all());
        dist(Eigen::Index(a)) = (za.array() - 0.5).square().sum();
        ys.push_back(run(m.decoder, run(m.chart_decoders[a], za)));
        e(Eigen::Index(a)) = (x - ys.back()).squaredNorm();
      }
      const Eigen::VectorXd pin = input == PredictorInput::x ? x : input == PredictorInput::z ? z : dist;
      const Eigen::VectorXd p = run(m.predictor, pin);
      CHECK((fr.e.mat().row(i).transpose() - e).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((fr.p.mat().row(i).transpose() - p).cwiseAbs().maxCoeff() < 1e-12);
      CHECK(std::abs(fr.p.mat().row(i).sum() - 1.0) < 1e-12);
      CHECK(std::abs(fr.ell.mat().row(i).sum() - 1.0) < 1e-12);
      Eigen::Index w;
      p.maxCoeff(&w);
      CHECK(fr.winner[std::size_t(i)] == std::size_t(w));
      CHECK(fr.y.mat().row(i) == fr.y_charts[std::size_t(w)].mat().row(i));
    }
    const Evaluation ev = evaluate(m, X);
    CHECK((ev.e - fr.e.mat()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(ev.winner == fr.winner);
  }
  CaeModel m = CaeModel::create(small(4, 3, 2, 3), 1);
  CHECK_THROWS_AS(forward(m, Tensor::matrix(RowMatrix::Zero(2, 3))), ShapeError);
}

TEST_CASE("single chart and cloned charts") {
  CaeModel one = CaeModel::create(small(3, 2, 1, 1), 2);
  const RowMatrix X = random_matrix(5, 3, 3);
  const ForwardResult f1 = forward(one, Tensor::matrix(X));
  CHECK(f1.p.mat().isOnes());
  CHECK(loss(f1).item() == doctest::Approx(f1.e.mat().mean()).epsilon(1e-14));

  CaeModel two = CaeModel::create(small(3, 2, 1, 2), 2);
  two.chart_encoders[1] = two.chart_encoders[0].clone();
  two.chart_decoders[1] = two.chart_decoders[0].clone();
  const ForwardResult f2 = forward(two, Tensor::matrix(X));
  CHECK(f2.e.mat().col(0) == f2.e.mat().col(1));
  CHECK((f2.ell.mat().array() - 0.5).abs().maxCoeff() < 1e-15);
}

TEST_CASE("loss matches a scalar recomputation") {
  CaeModel m = CaeModel::create(small(4, 3, 2, 3), 11);
  perturb_biases(m, 12);
  const RowMatrix X = random_matrix(6, 4, 13);
  const ForwardResult fr = forward(m, Tensor::matrix(X));
  const RowMatrix E = fr.e.mat(), P = fr.p.mat();
  double expect = 0.0;
  for (Eigen::Index i = 0; i < 6; ++i) {
    double mn = 1e300, zsum = 0.0;
    for (Eigen::Index a = 0; a < 3; ++a) {
      mn = std::min(mn, E(i, a));
      zsum += std::exp(-E(i, a));
    }
    double ce = 0.0;
    for (Eigen::Index a = 0; a < 3; ++a) ce -= std::exp(-E(i, a)) / zsum * std::log(P(i, a));
    expect += (mn + ce) / 6.0;
  }
  CHECK(std::abs(loss(fr).item() - expect) < 1e-10);
  CHECK_FALSE(fr.ell.requires_grad());
}

TEST_CASE("uniform prediction on perfect reconstruction gives log N") {
  ForwardResult fr;
  fr.e = Tensor::zeros({4, 3});
  fr.ell = Tensor::full({4, 3}, 1.0 / 3);
  fr.p = Tensor::full({4, 3}, 1.0 / 3);
  CHECK(loss(fr).item() == doctest::Approx(std::log(3.0)).epsilon(1e-14));
}

TEST_CASE("lipschitz regularizer against dense SVD") {
  CaeModel m = CaeModel::create(small(4, 3, 2, 3), 21);
  for (int iters : {300}) {
    const double got = lipschitz_regularizer(m, iters).item();
    std::vector<double> prods;
    for (const auto& ch : m.chart_encoders) {
      double p = 1.0;
      for (const auto& L : ch.layers()) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(L.weight.mat()));
        p *= svd.singularValues()(0);
      }
      prods.push_back(p);
    }
    double mx = 0, mean = 0;
    for (double p : prods) {
      mx = std::max(mx, p);
      mean += p / 3.0;
    }
    CHECK(std::abs(got - (mx + mean)) < 1e-6);
  }
  double shared = 1.0;
  for (const auto& L : m.encoder.layers())
    shared *= Eigen::JacobiSVD<Eigen::MatrixXd>(Eigen::MatrixXd(L.weight.mat())).singularValues()(0);
  const double enc = lipschitz_regularizer(m, 300).item();
  CHECK(std::abs(lipschitz_regularizer(m, 300, LipschitzScope::chart_function).item() - shared * enc) < 1e-6);

  SUBCASE("single 1x1 weight") {
    CaeModel one = CaeModel::create(small(1, 1, 1, 1), 0);
    auto& layers = one.chart_encoders[0].layers();
    layers.resize(1);
    layers[0].weight = Tensor::from({1, 1}, {2.0});
    layers[0].power_u.resize(0);
    CHECK(lipschitz_regularizer(one).item() == doctest::Approx(4.0));
  }
  SUBCASE("identical charts") {
    CaeModel two = CaeModel::create(small(3, 2, 1, 2), 4);
    two.chart_encoders[1] = two.chart_encoders[0].clone();
    const double r = lipschitz_regularizer(two, 300).item();
    double p = 1.0;
    for (const auto& L : two.chart_encoders[0].layers())
      p *= Eigen::JacobiSVD<Eigen::MatrixXd>(Eigen::MatrixXd(L.weight.mat())).singularValues()(0);
    CHECK(r == doctest::Approx(2 * p).epsilon(1e-9));
  }
}

TEST_CASE("full objective gradient matches finite differences") {
  CaeModel m = CaeModel::create(small(4, 3, 2, 2), 31);
  perturb_biases(m, 32);
  const RowMatrix X = random_matrix(5, 4, 33);
  // enough iterations that the power vectors are converged and stay put
  lipschitz_regularizer(m, 500);
  // ell is a constant target, so the difference quotient holds it fixed too
  const Tensor ell = forward(m, Tensor::matrix(X)).ell;
  auto params = m.parameters();
  const double worst = grad_check(
      [&](const std::vector<Tensor>&) {
        ForwardResult fr = forward(m, Tensor::matrix(X));
        fr.ell = ell;
        return loss(fr) + 1e-2 * lipschitz_regularizer(m, 50);
      },
      params);
  CHECK(worst <= 1e-4);
}

TEST_CASE("pretrain loss matches a scalar recomputation") {
  CaeModel m = CaeModel::create(small(3, 3, 2, 2), 41);
  perturb_biases(m, 42);
  const Eigen::Vector3d x(0.3, -0.2, 0.9);
  for (std::size_t a = 0; a < 2; ++a) {
    const Eigen::VectorXd z = run(m.encoder, x);
    const Eigen::VectorXd za = run(m.chart_encoders[a], z);
    const Eigen::VectorXd y = run(m.decoder, run(m.chart_decoders[a], za));
    const double pa = run(m.predictor, x)(Eigen::Index(a));
    const double base = (x - y).squaredNorm() + (za.array() - 0.5).square().sum();
    CHECK(std::abs(pretrain_loss(m, x, a).item() - (base - std::log(pa))) < 1e-10);
    CHECK(std::abs(pretrain_loss(m, x, a, true).item() - (base + std::log(pa))) < 1e-10);
  }
  CHECK_THROWS(pretrain_loss(m, x, 2));
  CHECK_THROWS_AS(pretrain_loss(m, Eigen::Vector2d(0, 0), 0), ShapeError);
}

TEST_CASE("pca frame") {
  SUBCASE("segment in R3") {
    const Eigen::RowVector3d dir = Eigen::RowVector3d(1, 2, -2).normalized();
    RowMatrix N(6, 3);
    for (int i = 0; i < 6; ++i) N.row(i) = Eigen::RowVector3d(0.1, 0.2, 0.3) + (i - 2.5) * 0.1 * dir;
    const PcaFrame f = pca_frame(N, 1);
    CHECK(std::abs(f.W.row(0).dot(dir)) >= 1 - 1e-9);
    CHECK(std::abs((f.W * N.row(0).transpose() / f.C + f.b)(0) - 0.5) < 1e-12);
  }
  SUBCASE("planar patch in R10") {
    const RowMatrix basis = random_matrix(2, 10, 5);
    const RowMatrix coef = random_matrix(20, 2, 6);
    RowMatrix N = coef * basis;
    N.rowwise() += random_matrix(1, 10, 7).row(0);
    const PcaFrame f = pca_frame(N, 2);
    const Eigen::RowVectorXd mu = N.colwise().mean();
    const RowMatrix C = N.rowwise() - mu;
    const RowMatrix resid = C - C * f.W.transpose() * f.W;
    CHECK(resid.cwiseAbs().maxCoeff() <= 1e-9);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd{Eigen::MatrixXd(C)};
    CHECK(f.C == doctest::Approx(svd.singularValues()(0) / 0.5).epsilon(1e-12));
  }
  CHECK_THROWS_AS(pca_frame(RowMatrix::Ones(4, 3), 1), RankDeficientNeighborhood);
  CHECK_THROWS_AS(pca_frame(RowMatrix::Ones(1, 3), 1), std::invalid_argument);
}

TEST_CASE("orientation regularizer against a double loop") {
  CaeModel m = CaeModel::create(small(3, 3, 2, 2), 51);
  std::vector<RowMatrix> hoods{random_matrix(6, 3, 52), random_matrix(6, 3, 53)};
  std::vector<PcaFrame> frames{pca_frame(hoods[0], 2), pca_frame(hoods[1], 2)};
  double expect = 0.0;
  for (std::size_t a = 0; a < 2; ++a) {
    for (Eigen::Index i = 0; i < 6; ++i) {
      const Eigen::VectorXd x = hoods[a].row(i).transpose();
      const Eigen::VectorXd za = run(m.chart_encoders[a], run(m.encoder, x));
      const Eigen::VectorXd xh = frames[a].W * x / frames[a].C + frames[a].b;
      for (Eigen::Index k = 0; k < 2; ++k) expect += za(k) * xh(k);
    }
  }
  CHECK(std::abs(orientation_regularizer(m, hoods, frames, OrientationReg::as_written).item() - expect) < 1e-12);
  CHECK(std::abs(orientation_regularizer(m, hoods, frames, OrientationReg::neg_alignment).item() + expect) < 1e-12);
  CHECK(orientation_regularizer(m, hoods, frames, OrientationReg::off).item() == 0.0);
  CHECK_THROWS(orientation_regularizer(m, std::span(hoods).first(1), frames, OrientationReg::as_written));
}

TEST_CASE("transition and cycle residual") {
  CaeModel m = CaeModel::create(small(3, 2, 2, 2), 61);
  const Eigen::VectorXd t = transition(m, Eigen::Vector2d(0.3, 0.7), 0, 1);
  CHECK((t.array() > 0).all());
  CHECK((t.array() < 1).all());
  const Eigen::Vector3d x(0.2, 0.4, -0.1);
  const RowMatrix twice = reconstruct_through(m, reconstruct_through(m, x.transpose(), 1), 1);
  CHECK(cycle_residual(m, x, 1, 1) == doctest::Approx(2 * (x.transpose() - twice).norm()).epsilon(1e-12));
  CHECK_THROWS(transition(m, Eigen::Vector2d(0.5, 0.5), 0, 2));
}

TEST_CASE("prune charts") {
  CaeModel m = CaeModel::create(small(3, 2, 1, 3), 71);
  perturb_biases(m, 72);
  SUBCASE("nothing below threshold") {
    const auto r = prune_charts(m);
    CHECK(r.removed.empty());
    CHECK(r.model.num_charts() == 3);
  }
  SUBCASE("zeroed decoder is removed") {
    for (auto& L : m.chart_decoders[1].layers()) L.weight.mat().setZero();
    const RowMatrix X = random_matrix(200, 3, 73);
    const Evaluation before = evaluate(m, X);
    const auto r = prune_charts(m);
    CHECK(r.removed == std::vector<std::size_t>{1});
    CHECK(r.model.num_charts() == 2);
    CHECK(r.model.config.num_charts == 2);
    CHECK(r.model.chart_ids == std::vector<std::size_t>{0, 2});
    CHECK(r.model.predictor.output_dim() == 2);
    const Evaluation after = evaluate(r.model, X);
    std::size_t kept = 0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      CHECK(std::abs(after.p.row(i).sum() - 1.0) < 1e-12);
      const auto w = before.winner[std::size_t(i)];
      if (w == 1) continue;
      ++kept;
      CHECK(r.model.chart_ids[after.winner[std::size_t(i)]] == w);
      CHECK((after.y.row(i) - before.y.row(i)).cwiseAbs().maxCoeff() <= 1e-12);
    }
    CHECK(kept > 0);
  }
  SUBCASE("all charts dead") {
    for (auto& d : m.chart_decoders)
      for (auto& L : d.layers()) L.weight.mat().setZero();
    CHECK_THROWS_AS(prune_charts(m), PruneError);
  }
}

TEST_CASE("save and load") {
  test::TempDir dir;
  CaeConfig c = small(4, 3, 2, 3);
  c.predictor_input = PredictorInput::z;
  CaeModel m = CaeModel::create(c, 81);
  perturb_biases(m, 82);
  lipschitz_regularizer(m);
  save_model(m, dir / "m.cae");
  CHECK(std::filesystem::exists(sidecar_path(dir / "m.cae")));
  const auto side = nlohmann::json::parse(std::ifstream(sidecar_path(dir / "m.cae")));
  CHECK(side.at("N") == 3);
  CHECK(side.at("predictor_input") == "z");

  const CaeModel back = load_model(dir / "m.cae");
  const RowMatrix X = random_matrix(9, 4, 83);
  CHECK(evaluate(back, X).y == evaluate(m, X).y);
  CHECK(back.initial_decoder_norms == m.initial_decoder_norms);
  CHECK(back.chart_encoders[2].layers()[0].power_u == m.chart_encoders[2].layers()[0].power_u);

  CaeConfig other = c;
  other.num_charts = 2;
  CHECK_THROWS_AS(load_model(dir / "m.cae", other), ConfigMismatch);
  std::filesystem::remove(sidecar_path(dir / "m.cae"));
  CHECK_THROWS_AS(load_model(dir / "m.cae"), CheckpointError);
}
