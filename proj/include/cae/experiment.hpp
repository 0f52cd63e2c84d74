#pragma once

#include "cae/manifolds.hpp"
#include "cae/model.hpp"
#include "cae/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

namespace cae {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DataSource { manifold, idx, csv };

struct DataConfig {
  DataSource source = DataSource::manifold;
  ManifoldSpec manifold;
  std::size_t n = 2000;
  std::uint64_t seed = 0;
  std::filesystem::path images;
  std::filesystem::path labels;
  std::filesystem::path csv;
  std::size_t limit = 0;  // keep the first `limit` rows; 0 keeps all
};

struct MetricConfig {
  std::size_t ell = 100;
  std::uint64_t seed = 0;
  double holdout = 0.1;
};

// Sections [data], [model], [train], [metrics], [output] of a key=value file.
struct ExperimentConfig {
  DataConfig data;
  CaeConfig model;
  TrainConfig train;
  MetricConfig metrics;
  std::filesystem::path output_dir;
};

ExperimentConfig parse_experiment(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment(const std::filesystem::path& path);

PointCloud load_data(const DataConfig& cfg);

}  // namespace cae
