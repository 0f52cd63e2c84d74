#include "cae/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace cae {

namespace {

// Two-sweep diameter estimate: within a factor 2 of the true diameter.
double diameter_estimate(const RowMatrix& X) {
  Eigen::Index far = 0;
  (X.rowwise() - X.row(0)).rowwise().squaredNorm().maxCoeff(&far);
  return std::sqrt((X.rowwise() - X.row(far)).rowwise().squaredNorm().maxCoeff());
}

std::vector<std::size_t> nearest_rows(const RowMatrix& X, Eigen::Index center, std::size_t k) {
  const Eigen::VectorXd dist = (X.rowwise() - X.row(center)).rowwise().squaredNorm();
  std::vector<std::size_t> idx(static_cast<std::size_t>(X.rows()));
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), [&](auto a, auto b) {
    const auto da = dist(static_cast<Eigen::Index>(a)), db = dist(static_cast<Eigen::Index>(b));
    return da < db || (da == db && a < b);
  });
  idx.resize(k);
  // Center first even if duplicates tie with it.
  auto it = std::find(idx.begin(), idx.end(), static_cast<std::size_t>(center));
  if (it == idx.end()) {
    idx.back() = static_cast<std::size_t>(center);
    it = idx.end() - 1;
  }
  std::iter_swap(idx.begin(), it);
  return idx;
}

RowMatrix gather_rows(const RowMatrix& X, std::span<const std::size_t> rows) {
  RowMatrix out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

std::vector<std::size_t> usage_counts(const CaeModel& model, const RowMatrix& X) {
  std::vector<std::size_t> usage(model.num_charts(), 0);
  constexpr Eigen::Index kChunk = 4096;
  for (Eigen::Index r = 0; r < X.rows(); r += kChunk) {
    const auto rows = std::min(kChunk, X.rows() - r);
    for (auto w : winners(model, X.middleRows(r, rows))) ++usage[w];
  }
  return usage;
}

std::string join(const std::vector<std::size_t>& v, char sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(v[i]);
  }
  return s;
}

}  // namespace

void TrainConfig::validate(std::size_t dataset_size) const {
  if (!(lr > 0)) throw std::invalid_argument("TrainConfig: lr must be positive");
  if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be positive");
  if (batch_size > dataset_size) {
    throw std::invalid_argument("TrainConfig: batch_size " + std::to_string(batch_size) + " exceeds dataset size " +
                                std::to_string(dataset_size));
  }
  if (lipschitz_weight < 0) throw std::invalid_argument("TrainConfig: lipschitz_weight must be >= 0");
  if (decoder_weight_decay < 0) throw std::invalid_argument("TrainConfig: decoder_weight_decay must be >= 0");
  if (lr * decoder_weight_decay >= 1) throw std::invalid_argument("TrainConfig: lr * decoder_weight_decay must be < 1");
  if (!(prune_rel_threshold > 0)) throw std::invalid_argument("TrainConfig: prune_rel_threshold must be positive");
  if (prune_every == 0) throw std::invalid_argument("TrainConfig: prune_every must be positive");
  if (power_iters < 1) throw std::invalid_argument("TrainConfig: power_iters must be >= 1");
}

std::vector<std::size_t> winners(const CaeModel& model, const Eigen::Ref<const RowMatrix>& x) {
  return evaluate(model, x).winner;
}

CaeModel pretrain(const CaeModel& model, const PointCloud& data, const TrainConfig& cfg, TrainReport* report) {
  const std::size_t N = model.num_charts();
  if (N > data.size()) {
    throw std::invalid_argument("pretrain: " + std::to_string(N) + " charts but only " +
                                std::to_string(data.size()) + " samples");
  }
  CaeModel out = model.clone();
  PretrainStats stats;
  stats.seeds = farthest_point_sampling(data, N, 0).indices;
  const RowMatrix seeds = gather_rows(data.points, stats.seeds);

  OrientationReg orientation = cfg.orientation_reg;
  std::vector<RowMatrix> neighborhoods;
  std::vector<PcaFrame> frames;
  std::vector<std::string> warnings;
  if (orientation != OrientationReg::off) {
    try {
      for (auto s : stats.seeds) {
        neighborhoods.push_back(
            gather_rows(data.points, nearest_rows(data.points, static_cast<Eigen::Index>(s), cfg.orientation_neighbors)));
        frames.push_back(pca_frame(neighborhoods.back(), out.config.chart_dim));
      }
    } catch (const RankDeficientNeighborhood& e) {
      warnings.push_back(std::string("orientation term disabled: ") + e.what());
      orientation = OrientationReg::off;
    }
  }

  AdamState adam;
  adam.lr = cfg.lr;
  auto params = out.parameters();
  for (std::size_t step = 0; step < cfg.pretrain_steps; ++step) {
    Tensor total;
    for (std::size_t a = 0; a < N; ++a) {
      Tensor t = pretrain_loss(out, seeds.row(static_cast<Eigen::Index>(a)).transpose(), a, cfg.pretrain_literal_sign);
      total = total.defined() ? total + t : t;
    }
    if (orientation != OrientationReg::off) {
      total = total + cfg.orientation_weight * orientation_regularizer(out, neighborhoods, frames, orientation);
    }
    stats.final_loss = total.item();
    total.backward();
    adam_step(params, adam);
  }

  const double diam = diameter_estimate(data.points);
  const Evaluation ev = evaluate(out, seeds);
  for (std::size_t a = 0; a < N; ++a) {
    const auto r = static_cast<Eigen::Index>(a);
    const double recon = (seeds.row(r) - ev.y_charts[a].row(r)).norm();
    const double offset = (ev.z_charts[a].row(r).array() - 0.5).abs().maxCoeff();
    stats.seed_recon_error.push_back(recon);
    stats.seed_center_offset.push_back(offset);
    stats.seed_probability.push_back(ev.p(r, r));
    if (recon > 0.1 * diam) {
      warnings.push_back("pretrain: chart " + std::to_string(a) + " seed reconstruction error " +
                         std::to_string(recon) + " exceeds 0.1 x diameter");
    }
    if (offset > 0.2) {
      warnings.push_back("pretrain: chart " + std::to_string(a) + " seed code is " + std::to_string(offset) +
                         " from the chart center");
    }
  }
  if (report) {
    report->pretrain = std::move(stats);
    report->warnings.insert(report->warnings.end(), warnings.begin(), warnings.end());
  }
  return out;
}

TrainResult train(const CaeModel& model, const PointCloud& data, const TrainConfig& cfg) {
  cfg.validate(data.size());
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result{model.clone(), {}};
  CaeModel& m = result.model;
  TrainReport& report = result.report;

  std::mt19937_64 gen(cfg.seed);
  AdamState adam;
  adam.lr = cfg.lr;
  auto params = m.parameters();
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t B = cfg.batch_size;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), gen);
    double loss_sum = 0.0, recon_sum = 0.0, reg_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += B) {
      const std::size_t stop = std::min(start + B, order.size());
      const std::span<const std::size_t> rows(order.data() + start, stop - start);
      const Tensor x = Tensor::matrix(gather_rows(data.points, rows));
      const ForwardResult fr = forward(m, x);
      Tensor total = loss(fr);
      const double batch_loss = total.item();
      double reg_value = 0.0;
      if (cfg.lipschitz_weight > 0) {
        const Tensor reg = lipschitz_regularizer(m, cfg.power_iters, cfg.lipschitz_scope);
        reg_value = reg.item();
        total = total + cfg.lipschitz_weight * reg;
      }
      if (!std::isfinite(total.item())) {
        throw TrainingAborted("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                  std::to_string(batches) + "; last good checkpoint: " +
                                  (report.last_checkpoint.empty() ? "none" : report.last_checkpoint.string()),
                              report.last_checkpoint);
      }
      total.backward();
      adam_step(params, adam);
      if (cfg.decoder_weight_decay > 0) {
        const double keep = 1.0 - cfg.lr * cfg.decoder_weight_decay;
        for (auto& dec : m.chart_decoders)
          for (auto& layer : dec.layers()) layer.weight.data() *= keep;
      }

      const double w = static_cast<double>(rows.size());
      loss_sum += batch_loss * w;
      recon_sum += fr.e.mat().rowwise().minCoeff().sum();
      reg_sum += reg_value;
      ++batches;
    }

    EpochStats es;
    es.epoch = epoch;
    const double n = static_cast<double>(order.size());
    es.mean_loss = loss_sum / n;
    es.mean_min_recon = recon_sum / n;
    es.regularizer = reg_sum / static_cast<double>(batches);

    if (cfg.prune && epoch >= cfg.prune_start && (epoch - cfg.prune_start) % cfg.prune_every == 0) {
      std::optional<PruneResult> pr;
      try {
        pr = prune_charts(m, cfg.prune_rel_threshold);
      } catch (const PruneError& e) {
        report.warnings.push_back("epoch " + std::to_string(epoch) + ": pruning skipped: " + e.what());
      }
      if (pr && !pr->removed.empty()) {
        for (auto a : pr->removed) es.removed_chart_ids.push_back(m.chart_ids[a]);
        m = std::move(pr->model);
        params = m.parameters();
        adam.reset();
      }
    }
    es.live_charts = m.num_charts();
    es.usage = usage_counts(m, data.points);
    report.epochs.push_back(std::move(es));

    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty() && epoch % cfg.checkpoint_every == 0) {
      std::filesystem::create_directories(cfg.checkpoint_dir);
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04zu.cae", epoch);
      report.last_checkpoint = cfg.checkpoint_dir / name;
      save_model(m, report.last_checkpoint);
    }
  }
  report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

Split holdout_split(const PointCloud& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0 && test_fraction < 1)) {
    throw std::invalid_argument("holdout_split: test fraction must be in [0, 1)");
  }
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 gen(seed);
  std::shuffle(idx.begin(), idx.end(), gen);
  const auto n_test = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(data.size())));
  std::vector<std::size_t> test(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {data.subset(train), data.subset(test)};
}

CheckpointEval evaluate_model(const CaeModel& model, const PointCloud& data) {
  if (data.size() == 0) throw std::invalid_argument("evaluate_model: empty data");
  const Evaluation ev = evaluate(model, data.points);
  CheckpointEval out;
  out.n = data.size();
  out.recon_error = (data.points - ev.y).rowwise().squaredNorm().mean();
  out.mean_min_recon = ev.e.rowwise().minCoeff().mean();
  out.usage.assign(model.num_charts(), 0);
  for (auto w : ev.winner) ++out.usage[w];
  return out;
}

CheckpointEval evaluate_checkpoint(const std::filesystem::path& path, const PointCloud& data) {
  return evaluate_model(load_model(path), data);
}

std::string TrainReport::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,mean_loss,mean_min_recon,regularizer,live_charts,usage,removed\n";
  for (const auto& e : epochs) {
    os << e.epoch << ',' << e.mean_loss << ',' << e.mean_min_recon << ',' << e.regularizer << ',' << e.live_charts
       << ',' << join(e.usage, ';') << ',' << join(e.removed_chart_ids, ';') << '\n';
  }
  return os.str();
}

std::string TrainReport::to_json() const {
  nlohmann::json j;
  j["epochs"] = epochs.size();
  if (!epochs.empty()) {
    const auto& last = epochs.back();
    j["final_mean_loss"] = last.mean_loss;
    j["final_mean_min_recon"] = last.mean_min_recon;
    j["final_regularizer"] = last.regularizer;
    j["live_charts"] = last.live_charts;
    j["usage"] = last.usage;
  }
  std::vector<std::size_t> removed;
  for (const auto& e : epochs) removed.insert(removed.end(), e.removed_chart_ids.begin(), e.removed_chart_ids.end());
  j["removed_chart_ids"] = removed;
  if (pretrain) {
    j["pretrain"] = {{"seeds", pretrain->seeds},
                     {"seed_recon_error", pretrain->seed_recon_error},
                     {"seed_center_offset", pretrain->seed_center_offset},
                     {"seed_probability", pretrain->seed_probability},
                     {"final_loss", pretrain->final_loss}};
  }
  j["warnings"] = warnings;
  j["last_checkpoint"] = last_checkpoint.string();
  j["wall_time_s"] = wall_time_s;
  return j.dump(2);
}

}  // namespace cae
