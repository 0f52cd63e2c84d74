#include "cae/checkpoint.hpp"
#include "cae/model.hpp"

#include <json.hpp>

#include <fstream>

namespace cae {

namespace {

using Tensors = std::map<std::string, NamedTensor>;
using nlohmann::json;

void put(Tensors& out, const std::string& prefix, const Mlp& mlp) {
  for (std::size_t k = 0; k < mlp.layers().size(); ++k) {
    const auto& layer = mlp.layers()[k];
    const auto base = prefix + "." + std::to_string(k);
    out[base + ".weight"] = {layer.weight.shape(), layer.weight.data()};
    out[base + ".bias"] = {layer.bias.shape(), layer.bias.data()};
    if (layer.power_u.size() > 0) {
      out[base + ".power_u"] = {{static_cast<std::size_t>(layer.power_u.size())}, layer.power_u};
    }
  }
}

const NamedTensor& fetch(const Tensors& in, const std::string& name, const Shape& shape) {
  const auto it = in.find(name);
  if (it == in.end()) throw CorruptCheckpoint("checkpoint is missing tensor '" + name + "'");
  if (it->second.shape != shape) {
    throw ConfigMismatch("tensor '" + name + "' has shape " + to_string(it->second.shape) + ", sidecar implies " +
                         to_string(shape));
  }
  return it->second;
}

void take(const Tensors& in, const std::string& prefix, Mlp& mlp) {
  for (std::size_t k = 0; k < mlp.layers().size(); ++k) {
    auto& layer = mlp.layers()[k];
    const auto base = prefix + "." + std::to_string(k);
    layer.weight.data() = fetch(in, base + ".weight", layer.weight.shape()).values;
    layer.bias.data() = fetch(in, base + ".bias", layer.bias.shape()).values;
    if (const auto it = in.find(base + ".power_u"); it != in.end()) layer.power_u = it->second.values;
  }
}

json config_json(const CaeConfig& c) {
  return {{"m", c.ambient_dim},
          {"l", c.embed_dim},
          {"d", c.chart_dim},
          {"N", c.num_charts},
          {"preset", std::string(to_string(c.preset))},
          {"predictor_input", std::string(to_string(c.predictor_input))},
          {"hidden", c.hidden_widths()}};
}

CaeConfig config_from_json(const json& j) {
  try {
    CaeConfig c;
    c.ambient_dim = j.at("m").get<std::size_t>();
    c.embed_dim = j.at("l").get<std::size_t>();
    c.chart_dim = j.at("d").get<std::size_t>();
    c.num_charts = j.at("N").get<std::size_t>();
    c.preset = parse_preset(j.at("preset").get<std::string>());
    c.predictor_input = parse_predictor_input(j.at("predictor_input").get<std::string>());
    if (j.contains("hidden")) c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    return c;
  } catch (const json::exception& e) {
    throw CorruptCheckpoint(std::string("malformed sidecar: ") + e.what());
  }
}

bool same_config(const CaeConfig& a, const CaeConfig& b) {
  return a.ambient_dim == b.ambient_dim && a.embed_dim == b.embed_dim && a.chart_dim == b.chart_dim &&
         a.num_charts == b.num_charts && a.preset == b.preset && a.predictor_input == b.predictor_input &&
         a.hidden_widths() == b.hidden_widths();
}

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint) {
  return std::filesystem::path(checkpoint.string() + ".json");
}

void save_model(const CaeModel& model, const std::filesystem::path& path) {
  Tensors t;
  put(t, "E", model.encoder);
  for (std::size_t a = 0; a < model.num_charts(); ++a) {
    put(t, "E_chart" + std::to_string(a), model.chart_encoders[a]);
    put(t, "D_chart" + std::to_string(a), model.chart_decoders[a]);
  }
  put(t, "P", model.predictor);
  put(t, "D", model.decoder);
  const auto n = model.num_charts();
  t["initial_decoder_norms"] = {{n}, Eigen::Map<const Eigen::VectorXd>(model.initial_decoder_norms.data(),
                                                                         static_cast<Eigen::Index>(n))};
  Eigen::VectorXd ids(static_cast<Eigen::Index>(n));
  for (std::size_t a = 0; a < n; ++a) ids(static_cast<Eigen::Index>(a)) = static_cast<double>(model.chart_ids[a]);
  t["chart_ids"] = {{n}, ids};
  write_tensors(path, t);

  std::ofstream side(sidecar_path(path), std::ios::trunc);
  if (!side) throw CheckpointError("cannot write sidecar " + sidecar_path(path).string());
  side << config_json(model.config).dump(2) << '\n';
}

CaeModel load_model(const std::filesystem::path& path) {
  std::ifstream side(sidecar_path(path));
  if (!side) throw CheckpointError("missing sidecar " + sidecar_path(path).string());
  json j;
  try {
    side >> j;
  } catch (const json::exception& e) {
    throw CorruptCheckpoint("unreadable sidecar " + sidecar_path(path).string() + ": " + e.what());
  }
  const CaeConfig config = config_from_json(j);
  const Tensors t = read_tensors(path);

  CaeModel model = CaeModel::create(config, 0);
  take(t, "E", model.encoder);
  for (std::size_t a = 0; a < model.num_charts(); ++a) {
    take(t, "E_chart" + std::to_string(a), model.chart_encoders[a]);
    take(t, "D_chart" + std::to_string(a), model.chart_decoders[a]);
  }
  take(t, "P", model.predictor);
  take(t, "D", model.decoder);
  const auto n = model.num_charts();
  const auto& norms = fetch(t, "initial_decoder_norms", {n}).values;
  const auto& ids = fetch(t, "chart_ids", {n}).values;
  for (std::size_t a = 0; a < n; ++a) {
    model.initial_decoder_norms[a] = norms(static_cast<Eigen::Index>(a));
    model.chart_ids[a] = static_cast<std::size_t>(ids(static_cast<Eigen::Index>(a)));
  }
  return model;
}

CaeModel load_model(const std::filesystem::path& path, const CaeConfig& expected) {
  CaeModel model = load_model(path);
  if (!same_config(model.config, expected)) {
    throw ConfigMismatch("checkpoint " + path.string() + " was saved with config " +
                         config_json(model.config).dump() + ", expected " + config_json(expected).dump());
  }
  return model;
}

}  // namespace cae
