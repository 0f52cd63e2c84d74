#pragma once

#include "cae/manifolds.hpp"
#include "cae/model.hpp"
#include "cae/optim.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cae {

struct TrainConfig {
  double lr = 3e-4;
  std::size_t batch_size = 64;
  std::size_t epochs = 100;
  double lipschitz_weight = 1e-2;
  LipschitzScope lipschitz_scope = LipschitzScope::chart_encoder;
  int power_iters = 5;
  std::size_t pretrain_steps = 2000;
  bool pretrain_literal_sign = false;
  OrientationReg orientation_reg = OrientationReg::off;
  std::size_t orientation_neighbors = 16;
  double orientation_weight = 1.0;
  double prune_rel_threshold = 1e-2;
  std::size_t prune_start = 20;  // first epoch at which pruning is checked
  std::size_t prune_every = 10;
  bool prune = true;
  // Decoupled decay of chart-decoder weights, w <- (1 - lr * decay) w after
  // every ADAM step. A decoder that no longer wins any point shrinks
  // geometrically until pruning removes it.
  double decoder_weight_decay = 5.0;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // epochs; 0 disables
  std::filesystem::path checkpoint_dir;

  void validate(std::size_t dataset_size) const;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double mean_min_recon = 0.0;
  double regularizer = 0.0;
  std::size_t live_charts = 0;
  std::vector<std::size_t> usage;  // winner counts over the training set
  std::vector<std::size_t> removed_chart_ids;
};

struct PretrainStats {
  std::vector<std::size_t> seeds;
  std::vector<double> seed_recon_error;    // ||x_a - reconstruction through a||
  std::vector<double> seed_center_offset;  // ||E_a E(x_a) - 0.5||_inf
  std::vector<double> seed_probability;    // p_a(x_a)
  double final_loss = 0.0;
};

struct TrainReport {
  std::optional<PretrainStats> pretrain;
  std::vector<EpochStats> epochs;
  std::vector<std::string> warnings;
  std::filesystem::path last_checkpoint;
  double wall_time_s = 0.0;

  std::string to_csv() const;
  std::string to_json() const;  // summary
};

class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, std::filesystem::path last_good)
      : std::runtime_error(what), last_checkpoint(std::move(last_good)) {}
  std::filesystem::path last_checkpoint;
};

// Pre-trains each chart on its farthest-point seed. The per-seed objectives
// are summed and optimized jointly since E, D and P are shared.
CaeModel pretrain(const CaeModel& model, const PointCloud& data, const TrainConfig& cfg,
                  TrainReport* report = nullptr);

struct TrainResult {
  CaeModel model;
  TrainReport report;
};

TrainResult train(const CaeModel& model, const PointCloud& data, const TrainConfig& cfg);

struct Split {
  PointCloud train;
  PointCloud test;
};

// Shuffled split with `test_fraction` of the rows held out.
Split holdout_split(const PointCloud& data, double test_fraction, std::uint64_t seed);

struct CheckpointEval {
  std::size_t n = 0;
  double recon_error = 0.0;     // mean ||x - y||^2 with y from the winner
  double mean_min_recon = 0.0;  // mean min_a e_a
  std::vector<std::size_t> usage;
};

CheckpointEval evaluate_model(const CaeModel& model, const PointCloud& data);
CheckpointEval evaluate_checkpoint(const std::filesystem::path& path, const PointCloud& data);

// Winner chart per row, evaluated without a graph.
std::vector<std::size_t> winners(const CaeModel& model, const Eigen::Ref<const RowMatrix>& x);

}  // namespace cae
