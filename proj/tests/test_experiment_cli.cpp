#include "cae/experiment.hpp"
#include "cae/simplicial.hpp"
#include "support.hpp"

#include <doctest.h>

#include <json.hpp>

#include <array>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <sys/wait.h>

using namespace cae;
using nlohmann::json;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

// stdout only; stderr is folded into the string when err is set
Run cli(const std::string& args, bool err = false) {
  const std::string cmd = std::string(CAE_CLI_PATH) + " " + args + (err ? " 2>&1" : " 2>/dev/null");
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 4096> buf{};
  std::size_t got = 0;
  while ((got = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), got);
  const int raw = pclose(p);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const char* kCircle = R"([data]
source = manifold
kind = circle
n = 200
seed = 1
[model]
charts = 2
chart_dim = 1
embed_dim = 2
preset = custom
hidden = 12
[train]
epochs = 2
pretrain_steps = 40
batch_size = 32
[metrics]
ell = 20
[output]
dir = out
)";

std::string without_line(std::string text, const std::string& line) {
  const auto at = text.find(line + "\n");
  REQUIRE(at != std::string::npos);
  return text.erase(at, line.size() + 1);
}

}  // namespace

TEST_CASE("experiment config parsing") {
  test::TempDir dir;
  const auto cfg = parse_experiment(kCircle, dir.path);
  CHECK(cfg.data.manifold.kind == ManifoldKind::circle);
  CHECK(cfg.data.n == 200);
  CHECK(cfg.model.num_charts == 2);
  CHECK(cfg.model.hidden == std::vector<std::size_t>{12});
  CHECK(cfg.train.epochs == 2);
  CHECK(cfg.train.lipschitz_scope == LipschitzScope::chart_encoder);
  CHECK(cfg.output_dir == dir / "out");
  CHECK(cfg.train.checkpoint_dir == dir / "out" / "checkpoints");

  for (const char* key : {"charts", "chart_dim", "source"}) {
    const std::string line = std::string(key) + (key == std::string("source") ? " = manifold" : key == std::string("charts") ? " = 2" : " = 1");
    try {
      parse_experiment(without_line(kCircle, line), dir.path);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(key) != std::string::npos);
    }
  }
  std::string unknown = kCircle;
  unknown.replace(unknown.find("[train]\n"), 8, "[train]\nlearning_rate = 1\n");
  CHECK_THROWS_WITH_AS(parse_experiment(unknown, dir.path), doctest::Contains("train.learning_rate"), ConfigError);
  std::string scoped = kCircle;
  scoped.replace(scoped.find("[train]\n"), 8, "[train]\nlipschitz_scope = chart_function\n");
  CHECK(parse_experiment(scoped, dir.path).train.lipschitz_scope == LipschitzScope::chart_function);
  scoped.replace(scoped.find("chart_function"), 14, "everything");
  CHECK_THROWS_AS(parse_experiment(scoped, dir.path), ConfigError);
  std::string bad_n = kCircle;
  bad_n.replace(bad_n.find("n = 200"), 7, "n = -5");
  CHECK_THROWS_AS(parse_experiment(bad_n, dir.path), ConfigError);
  std::string idx = kCircle;
  const std::string manifold = "source = manifold\nkind = circle\nn = 200\nseed = 1\n";
  idx.replace(idx.find(manifold), manifold.size(), "source = idx\nimages = nowhere.idx\n");
  CHECK_THROWS_WITH_AS(parse_experiment(idx, dir.path), doctest::Contains("data.images"), ConfigError);
  CHECK_THROWS_AS(load_experiment(dir / "absent.ini"), ConfigError);
}

TEST_CASE("cli generate") {
  test::TempDir dir;
  const std::string a = (dir / "a.csv").string(), b = (dir / "b.csv").string();
  REQUIRE(cli("generate --kind circle --n 1000 --seed 7 --out " + a).status == 0);
  REQUIRE(cli("generate --kind circle --n 1000 --seed 7 --out " + b).status == 0);
  CHECK(slurp(a) == slurp(b));
  const PointCloud c = read_csv(a);
  CHECK(c.points.rows() == 1000);
  CHECK(c.points.cols() == 2);
  for (Eigen::Index i = 0; i < 1000; ++i) CHECK(std::abs(c.points.row(i).norm() - 1) <= 1e-12);

  const std::string s = (dir / "s.csv").string();
  REQUIRE(cli("generate --kind sphere --n 1000 --ambient 50 --embed-seed 3 --out " + s).status == 0);
  const PointCloud sp = read_csv(s);
  CHECK(sp.points.cols() == 50);
  CHECK((sp.points.rowwise().norm().array() - 1).abs().maxCoeff() <= 1e-9);

  const Run bad = cli("generate --kind klein", true);
  CHECK(bad.status != 0);
  CHECK(bad.out.find("klein") != std::string::npos);
}

TEST_CASE("cli train, eval, geodesic and prune-report") {
  test::TempDir dir;
  std::ofstream(dir / "exp.ini") << kCircle;
  const Run tr = cli("train " + (dir / "exp.ini").string());
  REQUIRE(tr.status == 0);
  CHECK(json::parse(tr.out).contains("recon_error"));
  for (const char* f : {"model.cae", "model.cae.json", "report.csv", "report.json", "eval.json"})
    CHECK(std::filesystem::exists(dir / "out" / f));

  const std::string ckpt = (dir / "out" / "model.cae").string();
  const std::string data = (dir / "d.csv").string();
  REQUIRE(cli("generate --kind circle --n 150 --seed 4 --out " + data).status == 0);
  const Run e1 = cli("eval --checkpoint " + ckpt + " --data " + data + " --ell 30 --seed 5");
  const Run e2 = cli("eval --checkpoint " + ckpt + " --data " + data + " --ell 30 --seed 5");
  REQUIRE(e1.status == 0);
  CHECK(e1.out == e2.out);
  CHECK(json::parse(e1.out).at("ell") == 30);

  const std::string poly = (dir / "g.csv").string();
  const Run same = cli("geodesic --checkpoint " + ckpt + " --a 1,0 --b 1,0 --k 10 --out " + poly);
  REQUIRE(same.status == 0);
  CHECK(json::parse(same.out).at("length") == 0.0);
  const Run g = cli("geodesic --checkpoint " + ckpt + " --a 1,0 --b 0.995,0.0998 --k 2 --out " + poly);
  if (g.status == 0) {
    const PointCloud p = read_csv(poly);
    CHECK(p.points.rows() == 2);
    CHECK(json::parse(g.out).at("length").get<double>() ==
          doctest::Approx((p.points.row(1) - p.points.row(0)).norm()).epsilon(1e-9));
  } else {
    // the endpoints fell into different charts
    CHECK(g.status == 2);
  }

  const Run pr = cli("prune-report --checkpoint " + ckpt + " --report " + (dir / "out" / "report.csv").string());
  REQUIRE(pr.status == 0);
  const auto rep = json::parse(pr.out);
  CHECK(rep.at("live_charts") == rep.at("charts").size());
  CHECK(rep.contains("removals"));

  CHECK(cli("eval --checkpoint " + (dir / "nothing.cae").string() + " --data " + data).status == 2);
}

TEST_CASE("cli train with zero epochs keeps the pretrained model") {
  test::TempDir dir;
  std::ofstream(dir / "exp.ini") << kCircle;
  REQUIRE(cli("train " + (dir / "exp.ini").string() + " --epochs 0").status == 0);
  const auto cfg = load_experiment(dir / "exp.ini");
  const PointCloud data = load_data(cfg.data);
  const Split split = holdout_split(data, cfg.metrics.holdout, cfg.metrics.seed);
  CaeConfig mc = cfg.model;
  mc.ambient_dim = data.ambient_dim();
  const CaeModel pre = pretrain(CaeModel::create(mc, cfg.train.seed), split.train, cfg.train);
  const CaeModel saved = load_model(dir / "out" / "model.cae");
  CHECK(evaluate(saved, data.points).y == evaluate(pre, data.points).y);
}

TEST_CASE("cli missing config key") {
  test::TempDir dir;
  std::ofstream(dir / "exp.ini") << without_line(kCircle, "embed_dim = 2");
  const Run r = cli("train " + (dir / "exp.ini").string(), true);
  CHECK(r.status == 2);
  CHECK(r.out.find("model.embed_dim") != std::string::npos);
}

TEST_CASE("cli compile-simplex") {
  test::TempDir dir;
  const SimplicialComplex s = grid_complex(3, 3);
  std::ofstream(dir / "c.json") << complex_to_json(s);
  {
    std::ofstream v(dir / "v.csv");
    v << std::setprecision(17) << "x,y\n";
    for (Eigen::Index i = 0; i < s.vertices.rows(); ++i) v << s.vertices(i, 0) << "," << s.vertices(i, 1) << "\n";
  }
  const std::string net = (dir / "net.cae").string();
  const Run r = cli("compile-simplex --complex " + (dir / "c.json").string() + " --values " + (dir / "v.csv").string() +
                    " --out " + net + " --probes 2000");
  REQUIRE(r.status == 0);
  const auto rep = json::parse(r.out);
  CHECK(rep.at("params_ok") == true);
  CHECK(rep.at("depth_ok") == true);
  CHECK(rep.at("max_probe_error").get<double>() <= 1e-10);
  const ReluNetwork n = load_network(net);
  CHECK((n(Eigen::Vector2d(0.2, 0.9)) - Eigen::Vector2d(0.2, 0.9)).norm() <= 1e-10);

  std::ofstream(dir / "short.csv") << "1\n2\n";
  CHECK(cli("compile-simplex --complex " + (dir / "c.json").string() + " --values " + (dir / "short.csv").string() +
            " --out " + net)
            .status == 2);
}

TEST_CASE("cli sample-bound") {
  const Run r = cli("sample-bound --d 2 --tau 1 --C 1 --eps 0.1 --nu 0.05");
  REQUIRE(r.status == 0);
  const auto j = json::parse(r.out);
  const SampleBound b = sample_bound(2, 1, 1, 0.1, 0.05);
  CHECK(j.at("beta1").get<double>() == b.beta1);
  CHECK(j.at("n_required").get<double>() == b.n_required);
  const Run bad = cli("sample-bound --d 2 --tau 1 --C 1 --eps 0.6 --nu 0.05", true);
  CHECK(bad.status == 2);
  CHECK(bad.out.find("epsilon < tau/2") != std::string::npos);
}
