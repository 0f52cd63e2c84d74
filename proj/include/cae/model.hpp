#pragma once

#include "cae/mlp.hpp"
#include "cae/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cae {

enum class Preset { small_cae, large_cae, custom };
enum class PredictorInput { x, z, z_alpha_distances };
enum class OrientationReg { off, as_written, neg_alignment };
// Layers entering each chart's spectral-norm product.
enum class LipschitzScope { chart_encoder, chart_function };

std::string_view to_string(Preset p);
std::string_view to_string(PredictorInput p);
std::string_view to_string(OrientationReg r);
std::string_view to_string(LipschitzScope s);
Preset parse_preset(std::string_view s);
PredictorInput parse_predictor_input(std::string_view s);
OrientationReg parse_orientation_reg(std::string_view s);
LipschitzScope parse_lipschitz_scope(std::string_view s);

struct CaeConfig {
  std::size_t ambient_dim = 2;  // m
  std::size_t embed_dim = 2;    // l
  std::size_t chart_dim = 1;    // d
  std::size_t num_charts = 1;   // N
  Preset preset = Preset::small_cae;
  std::vector<std::size_t> hidden;  // hidden widths for Preset::custom
  PredictorInput predictor_input = PredictorInput::x;

  std::vector<std::size_t> hidden_widths() const;
  void validate() const;
};

// Bundle of the five component networks. Chart slots are indexed 0..N-1;
// chart_ids keeps the index each chart had at construction so pruning can
// be reported against the original numbering.
struct CaeModel {
  CaeConfig config;
  Mlp encoder;                     // E: m -> l
  std::vector<Mlp> chart_encoders;  // E_a: l -> d, sigmoid output
  std::vector<Mlp> chart_decoders;  // D_a: d -> l
  Mlp predictor;                   // P: input -> N, softmax output
  Mlp decoder;                     // D: l -> m
  std::vector<double> initial_decoder_norms;
  std::vector<std::size_t> chart_ids;

  static CaeModel create(const CaeConfig& config, std::uint64_t seed);

  std::size_t num_charts() const { return chart_encoders.size(); }
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
  CaeModel clone() const;
};

struct ForwardResult {
  Tensor z;                      // [B, l]
  std::vector<Tensor> z_charts;  // N x [B, d]
  std::vector<Tensor> w_charts;  // N x [B, l]
  std::vector<Tensor> y_charts;  // N x [B, m]
  Tensor e;                      // [B, N]
  Tensor ell;                    // [B, N], constant
  Tensor p;                      // [B, N]
  std::vector<std::size_t> winner;
  Tensor y;                      // [B, m]
};

ForwardResult forward(const CaeModel& model, const Tensor& x);
Tensor loss(const ForwardResult& fr);

// Max plus mean of the per-chart spectral-norm products; updates the
// persistent power vectors. chart_function also multiplies in the layers of E.
Tensor lipschitz_regularizer(CaeModel& model, int power_iters = 5,
                             LipschitzScope scope = LipschitzScope::chart_encoder);

Tensor pretrain_loss(const CaeModel& model, const Eigen::Ref<const Eigen::VectorXd>& seed_point, std::size_t alpha,
                     bool literal_sign = false);

struct PcaFrame {
  RowMatrix W;  // d x m
  Eigen::VectorXd b;
  double C = 1.0;
};

class RankDeficientNeighborhood : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Row 0 of the neighborhood is taken as the chart center.
PcaFrame pca_frame(const Eigen::Ref<const RowMatrix>& neighborhood, std::size_t d);

// as_written returns the inner-product sum, neg_alignment its negation, off
// a zero scalar.
Tensor orientation_regularizer(const CaeModel& model, std::span<const RowMatrix> neighborhoods,
                               std::span<const PcaFrame> frames, OrientationReg mode);

// Forward pass on plain matrices, no graph recorded.
struct Evaluation {
  std::vector<RowMatrix> z_charts;
  std::vector<RowMatrix> y_charts;
  RowMatrix e;  // [B, N]
  RowMatrix p;  // [B, N]
  std::vector<std::size_t> winner;
  RowMatrix y;
};

Evaluation evaluate(const CaeModel& model, const Eigen::Ref<const RowMatrix>& x);

// Evaluation helpers without graph recording.
RowMatrix encode_chart(const CaeModel& model, const Eigen::Ref<const RowMatrix>& x, std::size_t alpha);
RowMatrix decode_chart(const CaeModel& model, const Eigen::Ref<const RowMatrix>& z_alpha, std::size_t alpha);
RowMatrix reconstruct_through(const CaeModel& model, const Eigen::Ref<const RowMatrix>& x, std::size_t alpha);

Eigen::VectorXd transition(const CaeModel& model, const Eigen::Ref<const Eigen::VectorXd>& z_alpha, std::size_t alpha,
                           std::size_t beta);
double cycle_residual(const CaeModel& model, const Eigen::Ref<const Eigen::VectorXd>& x, std::size_t alpha,
                      std::size_t beta);

struct PruneResult {
  CaeModel model;
  std::vector<std::size_t> removed;  // slot indices in the input model
};

class PruneError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double decoder_weight_norm(const CaeModel& model, std::size_t alpha);
PruneResult prune_charts(const CaeModel& model, double rel_threshold = 1e-2);

// Checkpoint plus JSON sidecar (path + ".json").
class ConfigMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_model(const CaeModel& model, const std::filesystem::path& path);
CaeModel load_model(const std::filesystem::path& path);
// Fails with ConfigMismatch when the sidecar disagrees with `expected`.
CaeModel load_model(const std::filesystem::path& path, const CaeConfig& expected);
std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint);

}  // namespace cae
