#include "cae/experiment.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace cae {

namespace {

namespace pt = boost::property_tree;

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "data.source", "data.kind", "data.n", "data.seed", "data.ambient", "data.embed_seed", "data.noise",
      "data.images", "data.labels", "data.path", "data.limit",
      "model.charts", "model.chart_dim", "model.embed_dim", "model.preset", "model.hidden", "model.predictor_input",
      "train.lr", "train.batch_size", "train.epochs", "train.lipschitz_weight", "train.lipschitz_scope", "train.power_iters",
      "train.pretrain_steps", "train.pretrain_literal_sign", "train.orientation_reg", "train.orientation_neighbors",
      "train.orientation_weight", "train.prune", "train.prune_rel_threshold", "train.prune_start",
      "train.prune_every", "train.decoder_weight_decay", "train.seed", "train.checkpoint_every",
      "metrics.ell", "metrics.seed", "metrics.holdout",
      "output.dir"};
  return keys;
}

class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  template <class T>
  T get(const std::string& key, T fallback) const {
    const auto node = tree_.get_optional<std::string>(key);
    return node ? convert<T>(key, *node) : fallback;
  }

  template <class T>
  T require(const std::string& key) const {
    const auto node = tree_.get_optional<std::string>(key);
    if (!node) throw ConfigError("missing required config key '" + key + "'");
    return convert<T>(key, *node);
  }

  bool has(const std::string& key) const { return tree_.get_optional<std::string>(key).has_value(); }

 private:
  template <class T>
  static T convert(const std::string& key, const std::string& raw) {
    if constexpr (std::is_same_v<T, std::string>) {
      return raw;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") return true;
      if (raw == "false" || raw == "0" || raw == "no" || raw == "off") return false;
      throw ConfigError("config key '" + key + "': expected a boolean, got '" + raw + "'");
    } else {
      std::istringstream in(raw);
      T value{};
      in >> value;
      if (in.fail() || !(in >> std::ws).eof()) {
        throw ConfigError("config key '" + key + "': cannot parse '" + raw + "'");
      }
      if constexpr (std::is_unsigned_v<T>) {
        if (raw.find('-') != std::string::npos) throw ConfigError("config key '" + key + "' must be non-negative");
      }
      return value;
    }
  }

  const pt::ptree& tree_;
};

std::vector<std::size_t> parse_widths(const std::string& key, const std::string& raw) {
  std::vector<std::size_t> widths;
  std::istringstream in(raw);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      const auto w = std::stoul(item, &used);
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
      widths.push_back(w);
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': bad width '" + item + "'");
    }
  }
  return widths;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

void require_file(const std::string& key, const std::filesystem::path& p) {
  if (!std::filesystem::is_regular_file(p)) {
    throw ConfigError("config key '" + key + "': file not found: " + p.string());
  }
}

}  // namespace

ExperimentConfig parse_experiment(const std::string& text, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config parse error at line " + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config key '" + section + "' is outside any section");
    for (const auto& [key, value] : body) {
      const auto full = section + "." + key;
      if (!known_keys().count(full)) throw ConfigError("unknown config key '" + full + "'");
    }
  }
  const Reader r(tree);
  ExperimentConfig cfg;

  auto& d = cfg.data;
  const auto source = r.require<std::string>("data.source");
  if (source == "manifold") {
    d.source = DataSource::manifold;
    try {
      d.manifold.kind = parse_manifold_kind(r.require<std::string>("data.kind"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config key 'data.kind': ") + e.what());
    }
    d.manifold.ambient_dim = r.get<std::size_t>("data.ambient", native_dim(d.manifold.kind));
    d.manifold.embed_seed = r.get<std::uint64_t>("data.embed_seed", 0);
    d.manifold.noise_sigma = r.get<double>("data.noise", 0.0);
    d.n = r.get<std::size_t>("data.n", d.n);
    d.seed = r.get<std::uint64_t>("data.seed", 0);
  } else if (source == "idx") {
    d.source = DataSource::idx;
    d.images = resolve(base_dir, r.require<std::string>("data.images"));
    require_file("data.images", d.images);
    if (r.has("data.labels")) {
      d.labels = resolve(base_dir, r.get<std::string>("data.labels", ""));
      require_file("data.labels", d.labels);
    }
  } else if (source == "csv") {
    d.source = DataSource::csv;
    d.csv = resolve(base_dir, r.require<std::string>("data.path"));
    require_file("data.path", d.csv);
  } else {
    throw ConfigError("config key 'data.source': expected manifold, idx or csv, got '" + source + "'");
  }
  d.limit = r.get<std::size_t>("data.limit", 0);

  auto& m = cfg.model;
  m.num_charts = r.require<std::size_t>("model.charts");
  m.chart_dim = r.require<std::size_t>("model.chart_dim");
  m.embed_dim = r.require<std::size_t>("model.embed_dim");
  try {
    m.preset = parse_preset(r.get<std::string>("model.preset", "small_cae"));
    m.predictor_input = parse_predictor_input(r.get<std::string>("model.predictor_input", "x"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model section: ") + e.what());
  }
  if (r.has("model.hidden")) m.hidden = parse_widths("model.hidden", r.get<std::string>("model.hidden", ""));

  auto& t = cfg.train;
  t.lr = r.get("train.lr", t.lr);
  t.batch_size = r.get("train.batch_size", t.batch_size);
  t.epochs = r.get("train.epochs", t.epochs);
  t.lipschitz_weight = r.get("train.lipschitz_weight", t.lipschitz_weight);
  try {
    t.lipschitz_scope = parse_lipschitz_scope(r.get<std::string>("train.lipschitz_scope", std::string(to_string(t.lipschitz_scope))));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config key 'train.lipschitz_scope': ") + e.what());
  }
  t.power_iters = r.get("train.power_iters", t.power_iters);
  t.pretrain_steps = r.get("train.pretrain_steps", t.pretrain_steps);
  t.pretrain_literal_sign = r.get("train.pretrain_literal_sign", t.pretrain_literal_sign);
  try {
    t.orientation_reg = parse_orientation_reg(r.get<std::string>("train.orientation_reg", "off"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config key 'train.orientation_reg': ") + e.what());
  }
  t.orientation_neighbors = r.get("train.orientation_neighbors", t.orientation_neighbors);
  t.orientation_weight = r.get("train.orientation_weight", t.orientation_weight);
  t.prune = r.get("train.prune", t.prune);
  t.prune_rel_threshold = r.get("train.prune_rel_threshold", t.prune_rel_threshold);
  t.prune_start = r.get("train.prune_start", t.prune_start);
  t.prune_every = r.get("train.prune_every", t.prune_every);
  t.decoder_weight_decay = r.get("train.decoder_weight_decay", t.decoder_weight_decay);
  t.seed = r.get("train.seed", t.seed);
  t.checkpoint_every = r.get("train.checkpoint_every", t.checkpoint_every);

  cfg.metrics.ell = r.get("metrics.ell", cfg.metrics.ell);
  cfg.metrics.seed = r.get("metrics.seed", cfg.metrics.seed);
  cfg.metrics.holdout = r.get("metrics.holdout", cfg.metrics.holdout);
  if (!(cfg.metrics.holdout >= 0.0 && cfg.metrics.holdout < 1.0)) {
    throw ConfigError("config key 'metrics.holdout' must lie in [0, 1)");
  }
  if (cfg.metrics.ell == 0) throw ConfigError("config key 'metrics.ell' must be positive");

  cfg.output_dir = resolve(base_dir, r.require<std::string>("output.dir"));
  const auto existing = [](std::filesystem::path p) {
    while (!p.empty() && !std::filesystem::exists(p)) {
      const auto parent = p.parent_path();
      if (parent == p) break;
      p = parent;
    }
    return p.empty() ? std::filesystem::current_path() : p;
  };
  if (!std::filesystem::is_directory(existing(cfg.output_dir))) {
    throw ConfigError("config key 'output.dir': cannot create " + cfg.output_dir.string());
  }
  t.checkpoint_dir = cfg.output_dir / "checkpoints";
  return cfg;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_experiment(text.str(), path.parent_path());
}

PointCloud load_data(const DataConfig& cfg) {
  PointCloud cloud;
  switch (cfg.source) {
    case DataSource::manifold: cloud = sample(cfg.manifold, cfg.n, cfg.seed); break;
    case DataSource::idx: cloud = load_idx_images(cfg.images, cfg.labels, true); break;
    case DataSource::csv: cloud = read_csv(cfg.csv); break;
  }
  if (cfg.limit > 0 && cfg.limit < cloud.size()) {
    std::vector<std::size_t> rows(cfg.limit);
    for (std::size_t i = 0; i < cfg.limit; ++i) rows[i] = i;
    cloud = cloud.subset(rows);
  }
  return cloud;
}

}  // namespace cae
