#include "cae/model.hpp"

#include <algorithm>
#include <array>
#include <random>

namespace cae {

namespace {

template <typename Enum, std::size_t K>
Enum parse_enum(std::string_view s, const std::array<std::pair<std::string_view, Enum>, K>& table,
                const char* what) {
  for (const auto& [name, value] : table) {
    if (name == s) return value;
  }
  throw std::invalid_argument(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

constexpr std::array<std::pair<std::string_view, Preset>, 3> kPresets{
    {{"small_cae", Preset::small_cae}, {"large_cae", Preset::large_cae}, {"custom", Preset::custom}}};
constexpr std::array<std::pair<std::string_view, PredictorInput>, 3> kPredictorInputs{
    {{"x", PredictorInput::x}, {"z", PredictorInput::z}, {"z_alpha_distances", PredictorInput::z_alpha_distances}}};
constexpr std::array<std::pair<std::string_view, OrientationReg>, 3> kOrientation{
    {{"off", OrientationReg::off},
     {"as_written", OrientationReg::as_written},
     {"neg_alignment", OrientationReg::neg_alignment}}};

constexpr std::array<std::pair<std::string_view, LipschitzScope>, 2> kScopes{
    {{"chart_encoder", LipschitzScope::chart_encoder}, {"chart_function", LipschitzScope::chart_function}}};

std::vector<std::size_t> widths(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

std::size_t predictor_input_dim(const CaeConfig& c) {
  switch (c.predictor_input) {
    case PredictorInput::z: return c.embed_dim;
    case PredictorInput::z_alpha_distances: return c.num_charts;
    case PredictorInput::x: break;
  }
  return c.ambient_dim;
}

// Squared distance of each chart code to the chart-box center, one column
// per chart.
Tensor center_distances(std::span<const Tensor> z_charts) {
  std::vector<Tensor> cols;
  cols.reserve(z_charts.size());
  for (const auto& za : z_charts) cols.push_back(sum(square(za - 0.5), 1));
  return concat(cols, 1);
}

Tensor predictor_input(const CaeModel& model, const Tensor& x, const Tensor& z, std::span<const Tensor> z_charts) {
  switch (model.config.predictor_input) {
    case PredictorInput::z: return z;
    case PredictorInput::z_alpha_distances: return center_distances(z_charts);
    case PredictorInput::x: break;
  }
  return x;
}

void check_chart(const CaeModel& model, std::size_t alpha, const char* op) {
  if (alpha >= model.num_charts()) {
    throw std::out_of_range(std::string(op) + ": chart index " + std::to_string(alpha) + " out of range (N = " +
                            std::to_string(model.num_charts()) + ")");
  }
}

double weights_norm(const Mlp& mlp) { return mlp.weight_norm(); }

}  // namespace

std::string_view to_string(Preset p) { return kPresets[static_cast<std::size_t>(p)].first; }
std::string_view to_string(PredictorInput p) { return kPredictorInputs[static_cast<std::size_t>(p)].first; }
std::string_view to_string(OrientationReg r) { return kOrientation[static_cast<std::size_t>(r)].first; }
Preset parse_preset(std::string_view s) { return parse_enum(s, kPresets, "preset"); }
PredictorInput parse_predictor_input(std::string_view s) {
  return parse_enum(s, kPredictorInputs, "predictor input");
}
OrientationReg parse_orientation_reg(std::string_view s) {
  return parse_enum(s, kOrientation, "orientation_reg mode");
}
std::string_view to_string(LipschitzScope s) { return kScopes[static_cast<std::size_t>(s)].first; }
LipschitzScope parse_lipschitz_scope(std::string_view s) { return parse_enum(s, kScopes, "lipschitz scope"); }

std::vector<std::size_t> CaeConfig::hidden_widths() const {
  switch (preset) {
    case Preset::small_cae: return {100, 100};
    case Preset::large_cae: return {100, 100, 100, 100};
    case Preset::custom: break;
  }
  return hidden;
}

void CaeConfig::validate() const {
  if (chart_dim < 1) throw std::invalid_argument("CaeConfig: chart_dim must be >= 1");
  if (num_charts < 1) throw std::invalid_argument("CaeConfig: num_charts must be >= 1");
  if (!(chart_dim <= embed_dim && embed_dim <= ambient_dim)) {
    throw std::invalid_argument("CaeConfig: need d <= l <= m, got d=" + std::to_string(chart_dim) +
                                " l=" + std::to_string(embed_dim) + " m=" + std::to_string(ambient_dim));
  }
  const auto h = hidden_widths();
  if (std::any_of(h.begin(), h.end(), [](std::size_t w) { return w == 0; })) {
    throw std::invalid_argument("CaeConfig: hidden widths must be >= 1");
  }
}

CaeModel CaeModel::create(const CaeConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 gen(seed);
  const auto h = config.hidden_widths();
  const auto m = config.ambient_dim, l = config.embed_dim, d = config.chart_dim, n = config.num_charts;

  CaeModel model;
  model.config = config;
  model.encoder = Mlp({widths(m, h, l), OutputActivation::identity}, gen);
  for (std::size_t a = 0; a < n; ++a) {
    model.chart_encoders.emplace_back(MlpSpec{widths(l, h, d), OutputActivation::sigmoid}, gen);
    model.chart_decoders.emplace_back(MlpSpec{widths(d, h, l), OutputActivation::identity}, gen);
  }
  model.predictor = Mlp({widths(predictor_input_dim(config), h, n), OutputActivation::softmax}, gen);
  model.decoder = Mlp({widths(l, h, m), OutputActivation::identity}, gen);
  for (std::size_t a = 0; a < n; ++a) {
    model.initial_decoder_norms.push_back(weights_norm(model.chart_decoders[a]));
    model.chart_ids.push_back(a);
  }
  return model;
}

std::vector<Tensor> CaeModel::parameters() const {
  std::vector<Tensor> out;
  encoder.append_parameters(out);
  for (const auto& e : chart_encoders) e.append_parameters(out);
  for (const auto& dd : chart_decoders) dd.append_parameters(out);
  predictor.append_parameters(out);
  decoder.append_parameters(out);
  return out;
}

std::size_t CaeModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : parameters()) n += t.numel();
  return n;
}

CaeModel CaeModel::clone() const {
  CaeModel out;
  out.config = config;
  out.encoder = encoder.clone();
  for (const auto& e : chart_encoders) out.chart_encoders.push_back(e.clone());
  for (const auto& dd : chart_decoders) out.chart_decoders.push_back(dd.clone());
  out.predictor = predictor.clone();
  out.decoder = decoder.clone();
  out.initial_decoder_norms = initial_decoder_norms;
  out.chart_ids = chart_ids;
  return out;
}

ForwardResult forward(const CaeModel& model, const Tensor& x) {
  if (x.rank() != 2 || x.cols() != model.config.ambient_dim) {
    throw ShapeError("forward: expected input [B, " + std::to_string(model.config.ambient_dim) + "], got " +
                     to_string(x.shape()));
  }
  const std::size_t B = x.rows();
  const std::size_t N = model.num_charts();
  ForwardResult fr;
  fr.z = model.encoder(x);
  for (std::size_t a = 0; a < N; ++a) {
    fr.z_charts.push_back(model.chart_encoders[a](fr.z));
    fr.w_charts.push_back(model.chart_decoders[a](fr.z_charts.back()));
  }
  // One pass of the final decoder over all charts stacked row-wise.
  const Tensor stacked = model.decoder(N == 1 ? fr.w_charts[0] : concat(fr.w_charts, 0));
  std::vector<Tensor> errors;
  for (std::size_t a = 0; a < N; ++a) {
    fr.y_charts.push_back(N == 1 ? stacked : slice(stacked, 0, a * B, (a + 1) * B));
    errors.push_back(sum(square(x - fr.y_charts.back()), 1));
  }
  fr.e = concat(errors, 1);
  fr.ell = softmax(-fr.e).detach();
  fr.p = model.predictor(predictor_input(model, x, fr.z, fr.z_charts));
  fr.winner = argmax_rows(fr.p.mat());
  fr.y = select_rows(fr.y_charts, fr.winner);
  return fr;
}

Tensor loss(const ForwardResult& fr) {
  const double B = static_cast<double>(fr.e.rows());
  const Tensor recon = mean(min(fr.e, 1));
  const Tensor xent = sum(fr.ell * log(clamp_min(fr.p, 1e-12))) * (-1.0 / B);
  return recon + xent;
}

Tensor lipschitz_regularizer(CaeModel& model, int power_iters, LipschitzScope scope) {
  Tensor shared;
  if (scope == LipschitzScope::chart_function) {
    for (auto& layer : model.encoder.layers()) {
      Tensor s = spectral_norm(layer.weight, power_iters, &layer.power_u);
      shared = shared.defined() ? shared * s : s;
    }
  }
  std::vector<Tensor> products;
  for (auto& chart : model.chart_encoders) {
    Tensor prod = shared;
    for (auto& layer : chart.layers()) {
      Tensor s = spectral_norm(layer.weight, power_iters, &layer.power_u);
      prod = prod.defined() ? prod * s : s;
    }
    products.push_back(prod);
  }
  const Tensor stacked = concat(products, 0);
  return sum(max(stacked, 0)) + mean(stacked);
}

Tensor pretrain_loss(const CaeModel& model, const Eigen::Ref<const Eigen::VectorXd>& seed_point, std::size_t alpha,
                     bool literal_sign) {
  check_chart(model, alpha, "pretrain_loss");
  if (static_cast<std::size_t>(seed_point.size()) != model.config.ambient_dim) {
    throw ShapeError("pretrain_loss: seed point has dimension " + std::to_string(seed_point.size()) +
                     ", model expects " + std::to_string(model.config.ambient_dim));
  }
  const Tensor x = Tensor::matrix(seed_point.transpose());
  const Tensor z = model.encoder(x);
  std::vector<Tensor> z_charts;
  if (model.config.predictor_input == PredictorInput::z_alpha_distances) {
    for (const auto& e : model.chart_encoders) z_charts.push_back(e(z));
  } else {
    z_charts.resize(model.num_charts());
    z_charts[alpha] = model.chart_encoders[alpha](z);
  }
  const Tensor& za = z_charts[alpha];
  const Tensor y = model.decoder(model.chart_decoders[alpha](za));
  const Tensor p = model.predictor(predictor_input(model, x, z, z_charts));
  const Tensor log_pa = log(clamp_min(slice(p, 1, alpha, alpha + 1), 1e-12));
  const Tensor pred = sum(log_pa) * (literal_sign ? 1.0 : -1.0);
  return sum(square(x - y)) + sum(square(za - 0.5)) + pred;
}

PcaFrame pca_frame(const Eigen::Ref<const RowMatrix>& neighborhood, std::size_t d) {
  const auto k = static_cast<std::size_t>(neighborhood.rows());
  if (d < 1 || k < d + 1) {
    throw std::invalid_argument("pca_frame: need at least d+1 = " + std::to_string(d + 1) + " points, got " +
                                std::to_string(k));
  }
  if (d > static_cast<std::size_t>(neighborhood.cols())) {
    throw std::invalid_argument("pca_frame: d exceeds ambient dimension");
  }
  const Eigen::RowVectorXd mu = neighborhood.colwise().mean();
  const RowMatrix centered = neighborhood.rowwise() - mu;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv(static_cast<Eigen::Index>(d) - 1) < 1e-12) {
    throw RankDeficientNeighborhood("pca_frame: neighborhood spans fewer than " + std::to_string(d) +
                                    " dimensions (singular value " + std::to_string(sv(static_cast<Eigen::Index>(d) - 1)) +
                                    ")");
  }
  PcaFrame f;
  f.W = svd.matrixV().leftCols(static_cast<Eigen::Index>(d)).transpose();
  f.C = sv(0) / 0.5;
  f.b = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d), 0.5) - f.W * neighborhood.row(0).transpose() / f.C;
  return f;
}

Tensor orientation_regularizer(const CaeModel& model, std::span<const RowMatrix> neighborhoods,
                               std::span<const PcaFrame> frames, OrientationReg mode) {
  if (neighborhoods.size() != frames.size() || frames.size() != model.num_charts()) {
    throw std::invalid_argument("orientation_regularizer: " + std::to_string(neighborhoods.size()) +
                                " neighborhoods and " + std::to_string(frames.size()) + " frames for " +
                                std::to_string(model.num_charts()) + " charts");
  }
  if (mode == OrientationReg::off) return Tensor::scalar(0.0);
  Tensor total;
  for (std::size_t a = 0; a < frames.size(); ++a) {
    const auto& X = neighborhoods[a];
    const auto& f = frames[a];
    RowMatrix xhat = X * f.W.transpose() / f.C;
    xhat.rowwise() += f.b.transpose();
    const Tensor za = model.chart_encoders[a](model.encoder(Tensor::matrix(X)));
    const Tensor term = sum(za * Tensor::matrix(xhat));
    total = total.defined() ? total + term : term;
  }
  return mode == OrientationReg::neg_alignment ? -total : total;
}

Evaluation evaluate(const CaeModel& model, const Eigen::Ref<const RowMatrix>& x) {
  if (static_cast<std::size_t>(x.cols()) != model.config.ambient_dim) {
    throw ShapeError("evaluate: expected " + std::to_string(model.config.ambient_dim) + " input columns, got " +
                     std::to_string(x.cols()));
  }
  const auto N = static_cast<Eigen::Index>(model.num_charts());
  Evaluation ev;
  const RowMatrix z = model.encoder.evaluate(x);
  ev.e.resize(x.rows(), N);
  for (Eigen::Index a = 0; a < N; ++a) {
    const auto i = static_cast<std::size_t>(a);
    ev.z_charts.push_back(model.chart_encoders[i].evaluate(z));
    ev.y_charts.push_back(model.decoder.evaluate(model.chart_decoders[i].evaluate(ev.z_charts.back())));
    ev.e.col(a) = (x - ev.y_charts.back()).rowwise().squaredNorm();
  }
  switch (model.config.predictor_input) {
    case PredictorInput::x: ev.p = model.predictor.evaluate(x); break;
    case PredictorInput::z: ev.p = model.predictor.evaluate(z); break;
    case PredictorInput::z_alpha_distances: {
      RowMatrix dist(x.rows(), N);
      for (Eigen::Index a = 0; a < N; ++a) {
        dist.col(a) = (ev.z_charts[static_cast<std::size_t>(a)].array() - 0.5).matrix().rowwise().squaredNorm();
      }
      ev.p = model.predictor.evaluate(dist);
      break;
    }
  }
  ev.winner = argmax_rows(ev.p);
  ev.y.resize(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) ev.y.row(r) = ev.y_charts[ev.winner[static_cast<std::size_t>(r)]].row(r);
  return ev;
}

RowMatrix encode_chart(const CaeModel& model, const Eigen::Ref<const RowMatrix>& x, std::size_t alpha) {
  check_chart(model, alpha, "encode_chart");
  return model.chart_encoders[alpha].evaluate(model.encoder.evaluate(x));
}

RowMatrix decode_chart(const CaeModel& model, const Eigen::Ref<const RowMatrix>& z_alpha, std::size_t alpha) {
  check_chart(model, alpha, "decode_chart");
  return model.decoder.evaluate(model.chart_decoders[alpha].evaluate(z_alpha));
}

RowMatrix reconstruct_through(const CaeModel& model, const Eigen::Ref<const RowMatrix>& x, std::size_t alpha) {
  return decode_chart(model, encode_chart(model, x, alpha), alpha);
}

Eigen::VectorXd transition(const CaeModel& model, const Eigen::Ref<const Eigen::VectorXd>& z_alpha, std::size_t alpha,
                           std::size_t beta) {
  check_chart(model, alpha, "transition");
  check_chart(model, beta, "transition");
  const RowMatrix x = decode_chart(model, z_alpha.transpose(), alpha);
  return encode_chart(model, x, beta).row(0).transpose();
}

double cycle_residual(const CaeModel& model, const Eigen::Ref<const Eigen::VectorXd>& x, std::size_t alpha,
                      std::size_t beta) {
  check_chart(model, alpha, "cycle_residual");
  check_chart(model, beta, "cycle_residual");
  const RowMatrix xr = x.transpose();
  const RowMatrix ab = reconstruct_through(model, reconstruct_through(model, xr, alpha), beta);
  const RowMatrix ba = reconstruct_through(model, reconstruct_through(model, xr, beta), alpha);
  return (xr - ab).norm() + (xr - ba).norm();
}

double decoder_weight_norm(const CaeModel& model, std::size_t alpha) {
  check_chart(model, alpha, "decoder_weight_norm");
  return weights_norm(model.chart_decoders[alpha]);
}

PruneResult prune_charts(const CaeModel& model, double rel_threshold) {
  if (model.initial_decoder_norms.size() != model.num_charts()) {
    throw PruneError("prune_charts: model has no recorded initial decoder norms");
  }
  std::vector<std::size_t> removed;
  for (std::size_t a = 0; a < model.num_charts(); ++a) {
    const double ref = model.initial_decoder_norms[a];
    if (decoder_weight_norm(model, a) < rel_threshold * ref) removed.push_back(a);
  }
  if (removed.size() == model.num_charts()) {
    throw PruneError("prune_charts: every chart is below the threshold; at least one must survive");
  }
  PruneResult result{model.clone(), removed};
  if (removed.empty()) return result;
  auto& out = result.model;
  for (auto it = removed.rbegin(); it != removed.rend(); ++it) {
    const auto i = static_cast<std::ptrdiff_t>(*it);
    out.chart_encoders.erase(out.chart_encoders.begin() + i);
    out.chart_decoders.erase(out.chart_decoders.begin() + i);
    out.initial_decoder_norms.erase(out.initial_decoder_norms.begin() + i);
    out.chart_ids.erase(out.chart_ids.begin() + i);
  }
  out.predictor.remove_outputs(removed);
  if (out.config.predictor_input == PredictorInput::z_alpha_distances) out.predictor.remove_inputs(removed);
  out.config.num_charts = out.num_charts();
  return result;
}

}  // namespace cae
