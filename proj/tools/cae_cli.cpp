#include "cae/experiment.hpp"
#include "cae/metrics.hpp"
#include "cae/model.hpp"
#include "cae/simplicial.hpp"
#include "cae/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

namespace {

using namespace cae;
using nlohmann::json;

Eigen::VectorXd parse_point(const std::string& text) {
  std::vector<double> v;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) v.push_back(std::stod(item));
  if (v.empty()) throw std::invalid_argument("empty point '" + text + "'");
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Plain numeric CSV; a first line that does not parse as numbers is a header.
RowMatrix read_numeric_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ls, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t\r", used) != std::string::npos) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;
      }
      throw std::runtime_error(path.string() + ": non-numeric row '" + line + "'");
    }
    first = false;
    if (!rows.empty() && row.size() != rows.front().size()) throw std::runtime_error(path.string() + ": ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error(path.string() + ": no data rows");
  RowMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return m;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

int run_train(const std::filesystem::path& config_path, std::optional<std::size_t> epochs) {
  auto cfg = load_experiment(config_path);
  if (epochs) cfg.train.epochs = *epochs;
  const PointCloud data = load_data(cfg.data);
  const Split split = cfg.metrics.holdout > 0 ? holdout_split(data, cfg.metrics.holdout, cfg.metrics.seed)
                                               : Split{data, data};
  cfg.model.ambient_dim = data.ambient_dim();
  cfg.model.validate();
  cfg.train.validate(split.train.size());
  std::filesystem::create_directories(cfg.output_dir);

  const CaeModel init = CaeModel::create(cfg.model, cfg.train.seed);
  TrainReport pre_report;
  const CaeModel pre = pretrain(init, split.train, cfg.train, &pre_report);
  TrainResult result = train(pre, split.train, cfg.train);
  result.report.pretrain = pre_report.pretrain;
  result.report.warnings.insert(result.report.warnings.begin(), pre_report.warnings.begin(), pre_report.warnings.end());
  for (const auto& w : result.report.warnings) std::cerr << "warning: " << w << "\n";

  save_model(result.model, cfg.output_dir / "model.cae");
  write_text(cfg.output_dir / "report.csv", result.report.to_csv());
  write_text(cfg.output_dir / "report.json", result.report.to_json());
  const EvalReport ev = evaluate_metrics(result.model, split.train, split.test, cfg.metrics.ell, cfg.metrics.seed);
  write_text(cfg.output_dir / "eval.json", ev.to_json());
  std::cout << ev.to_json() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chart auto-encoder tools"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Sample a synthetic manifold to CSV");
  std::string kind = "circle";
  std::size_t n = 1000, ambient = 0;
  std::uint64_t seed = 0, embed_seed = 0;
  double noise = 0.0;
  std::string out;
  gen->add_option("--kind", kind, "circle, sphere, torus, double_torus, genus3, cat_curve");
  gen->add_option("--n", n, "number of samples");
  gen->add_option("--seed", seed, "sampling seed");
  gen->add_option("--ambient", ambient, "ambient dimension (default: native)");
  gen->add_option("--embed-seed", embed_seed, "seed of the random isometric embedding");
  gen->add_option("--noise", noise, "Gaussian noise sigma");
  gen->add_option("--out", out, "output CSV (default: stdout)");

  // train
  auto* tr = app.add_subcommand("train", "Pretrain and train a CAE from a config file");
  std::string config;
  std::optional<std::size_t> epochs;
  tr->add_option("config", config, "experiment config (key=value with sections)")->required();
  tr->add_option("--epochs", epochs, "override train.epochs");

  // eval
  auto* ev = app.add_subcommand("eval", "Reconstruction, unfaithfulness and coverage of a checkpoint");
  std::string checkpoint, data_path, test_path;
  std::size_t ell = 100;
  ev->add_option("--checkpoint", checkpoint)->required();
  ev->add_option("--data", data_path, "training CSV")->required();
  ev->add_option("--test", test_path, "held-out CSV (default: --data)");
  ev->add_option("--ell", ell, "latent samples");
  ev->add_option("--seed", seed, "latent sampling seed");

  // geodesic
  auto* geo = app.add_subcommand("geodesic", "Decode a straight latent segment between two points");
  std::string a_text, b_text;
  std::size_t k = 100;
  geo->add_option("--checkpoint", checkpoint)->required();
  geo->add_option("--a", a_text, "first endpoint, comma separated")->required();
  geo->add_option("--b", b_text, "second endpoint, comma separated")->required();
  geo->add_option("--k", k, "number of polyline points");
  geo->add_option("--out", out, "polyline CSV")->required();

  // compile-simplex
  auto* cs = app.add_subcommand("compile-simplex", "Compile a PL function on a simplicial complex to a ReLU network");
  std::string complex_path, values_path;
  std::size_t probes = 10000;
  cs->add_option("--complex", complex_path, "complex JSON {vertices, simplices}")->required();
  cs->add_option("--values", values_path, "per-vertex values CSV")->required();
  cs->add_option("--out", out, "network checkpoint")->required();
  cs->add_option("--probes", probes, "random interior probes for the exactness report");
  cs->add_option("--seed", seed, "probe seed");

  // sample-bound
  auto* sb = app.add_subcommand("sample-bound", "Sample count for an epsilon-dense cover with confidence 1 - nu");
  std::size_t d = 1;
  double tau = 1.0, C = 1.0, eps = 0.1, nu = 0.1;
  sb->add_option("--d", d)->required();
  sb->add_option("--tau", tau)->required();
  sb->add_option("--C", C, "vol(M) / vol(unit d-ball)")->required();
  sb->add_option("--eps", eps)->required();
  sb->add_option("--nu", nu)->required();

  // prune-report
  auto* pr = app.add_subcommand("prune-report", "Chart-decoder norm ratios of a checkpoint");
  double threshold = 1e-2;
  std::string report_path;
  pr->add_option("--checkpoint", checkpoint)->required();
  pr->add_option("--threshold", threshold, "relative norm threshold");
  pr->add_option("--report", report_path, "training report CSV to list removal events from");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      ManifoldSpec spec;
      spec.kind = parse_manifold_kind(kind);
      spec.ambient_dim = ambient == 0 ? native_dim(spec.kind) : ambient;
      spec.embed_seed = embed_seed;
      spec.noise_sigma = noise;
      const PointCloud cloud = sample(spec, n, seed);
      if (out.empty()) {
        std::cout << to_csv(cloud);
      } else {
        write_csv(out, cloud);
      }
      return 0;
    }
    if (*tr) return run_train(config, epochs);
    if (*ev) {
      const CaeModel model = load_model(checkpoint);
      const PointCloud train_data = read_csv(data_path);
      const PointCloud test_data = test_path.empty() ? train_data : read_csv(test_path);
      std::cout << evaluate_metrics(model, train_data, test_data, ell, seed).to_json() << "\n";
      return 0;
    }
    if (*geo) {
      const CaeModel model = load_model(checkpoint);
      const Eigen::VectorXd a = parse_point(a_text), b = parse_point(b_text);
      if (a == b) {
        PointCloud single;
        single.points = a.transpose();
        write_csv(out, single);
        std::cout << json{{"chart", nullptr}, {"k", k}, {"length", 0.0}}.dump() << "\n";
        return 0;
      }
      const GeodesicPath path = geodesic_path(model, a, b, k);
      PointCloud poly;
      poly.points = path.points;
      write_csv(out, poly);
      std::cout << json{{"chart", model.chart_ids[path.chart]}, {"k", k}, {"length", path.length}}.dump() << "\n";
      return 0;
    }
    if (*cs) {
      const SimplicialComplex s = complex_from_json(slurp(complex_path));
      const RowMatrix values = read_numeric_csv(values_path);
      const ReluNetwork net = compile_pl(s, values);
      save_network(net, out);
      const CompileBounds b = check_bounds(s, static_cast<std::size_t>(values.cols()), net);
      std::mt19937_64 rng(seed);
      std::exponential_distribution<double> expo(1.0);
      std::uniform_int_distribution<std::size_t> pick(0, s.simplices.size() - 1);
      double max_err = 0.0;
      for (std::size_t i = 0; i < probes; ++i) {
        const auto t = pick(rng);
        Eigen::VectorXd w(static_cast<Eigen::Index>(s.dim() + 1));
        for (auto& x : w) x = expo(rng);
        w /= w.sum();
        Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.dim()));
        Eigen::VectorXd ref = Eigen::VectorXd::Zero(values.cols());
        for (std::size_t j = 0; j <= s.dim(); ++j) {
          const auto v = static_cast<Eigen::Index>(s.simplices[t][j]);
          x += w(static_cast<Eigen::Index>(j)) * s.vertices.row(v).transpose();
          ref += w(static_cast<Eigen::Index>(j)) * values.row(v).transpose();
        }
        max_err = std::max(max_err, (net(x) - ref).cwiseAbs().maxCoeff());
      }
      const json report{{"vertices", s.num_vertices()},
                        {"simplices", s.simplices.size()},
                        {"K", b.K},
                        {"params", net.declared_param_count},
                        {"param_bound", b.param_bound},
                        {"depth", net.declared_depth},
                        {"depth_bound", b.depth_bound},
                        {"params_ok", b.params_ok},
                        {"depth_ok", b.depth_ok},
                        {"probes", probes},
                        {"max_probe_error", max_err}};
      std::cout << report.dump(2) << "\n";
      return b.params_ok && b.depth_ok && max_err <= 1e-9 ? 0 : 1;
    }
    if (*sb) {
      const SampleBound r = sample_bound(d, tau, C, eps, nu);
      std::cout << std::setprecision(17)
                << json{{"d", r.d},         {"tau", r.tau},     {"C", r.C},
                        {"epsilon", r.epsilon}, {"nu", r.nu},   {"beta1", r.beta1},
                        {"beta2", r.beta2}, {"n_required", r.n_required}}
                       .dump(2)
                << "\n";
      return 0;
    }
    if (*pr) {
      const CaeModel model = load_model(checkpoint);
      json charts = json::array();
      for (std::size_t a = 0; a < model.num_charts(); ++a) {
        const double norm = decoder_weight_norm(model, a);
        const double ratio = norm / model.initial_decoder_norms[a];
        charts.push_back({{"chart", model.chart_ids[a]},
                          {"norm", norm},
                          {"initial_norm", model.initial_decoder_norms[a]},
                          {"ratio", ratio},
                          {"below_threshold", ratio < threshold}});
      }
      json report{{"live_charts", model.num_charts()}, {"threshold", threshold}, {"charts", charts}};
      if (!report_path.empty()) {
        json events = json::array();
        std::istringstream lines(slurp(report_path));
        std::string line;
        std::getline(lines, line);
        while (std::getline(lines, line)) {
          const auto last = line.rfind(',');
          const auto epoch = line.substr(0, line.find(','));
          if (last != std::string::npos && last + 1 < line.size()) {
            events.push_back({{"epoch", std::stoul(epoch)}, {"removed", line.substr(last + 1)}});
          }
        }
        report["removals"] = events;
      }
      std::cout << report.dump(2) << "\n";
      return 0;
    }
  } catch (const TrainingAborted& e) {
    std::cerr << "error: " << e.what() << " (last checkpoint: " << e.last_checkpoint << ")\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
