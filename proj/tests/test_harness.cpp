#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fimvar/harness.hpp"

using namespace fimvar;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("fimvar_test_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

ExperimentConfig tiny_classification_config(const std::string& out_dir) {
  ExperimentConfig cfg;
  cfg.task = Task::Classification;
  cfg.dataset = DatasetKind::SyntheticGaussianBlobs;
  cfg.layer_dims = {2, 6, 6, 3};
  cfg.activation = Activation::Sigmoid;
  cfg.epochs = 3;
  cfg.learning_rate = 0.4;
  cfg.n_fim_samples = 50;
  cfg.probe_inputs = 2;
  cfg.seed = 5;
  cfg.output_dir = out_dir;
  return cfg;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("fimvar");
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

struct ParsedTrace {
  // (epoch, group, quantity) -> value
  std::map<std::string, double> values;
  std::vector<std::string> lines;
};

ParsedTrace parse_trace(const fs::path& p) {
  ParsedTrace out;
  std::ifstream in(p, std::ios::binary);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    out.lines.push_back(line);
    std::stringstream ss(line);
    std::string epoch, group, quantity, value;
    std::getline(ss, epoch, ',');
    std::getline(ss, group, ',');
    std::getline(ss, quantity, ',');
    std::getline(ss, value, ',');
    out.values[epoch + "," + group + "," + quantity] = std::stod(value);
  }
  return out;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("config json round trip and validation") {
  TempDir dir("config");
  const fs::path cfg_path = dir.path / "cfg.json";
  ExperimentConfig cfg = tiny_classification_config((dir.path / "out").string());
  write_file(cfg_path, cfg.to_json_string());
  const ExperimentConfig loaded = ExperimentConfig::from_json_file(cfg_path.string());
  CHECK(loaded.to_json_string() == cfg.to_json_string());

  write_file(cfg_path, "{not json");
  CHECK_THROWS_AS(ExperimentConfig::from_json_file(cfg_path.string()),
                  std::invalid_argument);
  write_file(cfg_path, "{\"task\": \"classification\"}");
  CHECK_THROWS_AS(ExperimentConfig::from_json_file(cfg_path.string()),
                  std::invalid_argument);

  ExperimentConfig bad = cfg;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.n_fim_samples = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.layer_dims = {2};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("zero learning rate leaves the parameters untouched") {
  TempDir dir("lr0");
  const ExperimentConfig cfg = tiny_classification_config(dir.str());
  const ExperimentData data = make_dataset(cfg);
  const NaturalParamHead head(Family::Categorical, 3);
  MlpNetwork net = MlpNetwork::random_init(cfg.layer_dims, cfg.activation, 9);
  const Vec before = net.theta();
  Rng rng(1);
  train_epoch(net, head, data.train, 0.0, rng);
  CHECK(net.theta() == before);
}

TEST_CASE("sgd step matches the chain-rule gradient") {
  // One sample, one batch: theta' = theta - lr * grad, and the NLL gradient
  // is jac^T (eta - t) by the chain rule.
  const NaturalParamHead head(Family::Categorical, 3);
  MlpNetwork net = MlpNetwork::random_init({2, 5, 3}, Activation::Tanh, 77);
  const Vec before = net.theta();
  const Vec x{0.8, -0.3};
  Dataset single;
  single.inputs.push_back(x);
  single.targets.push_back({0.0, 1.0, 0.0});

  const DerivativeBundle d = net.derivatives(x);
  const Vec eta = mean_params(head, d.h);
  Rng rng(6);
  const double lr = 0.01;
  train_epoch(net, head, single, lr, rng);
  for (std::size_t i = 0; i < before.size(); ++i) {
    double grad = 0.0;
    for (std::size_t a = 0; a < 3; ++a)
      grad += d.jac(i, a) * (eta[a] - single.targets[0][a]);
    const double step = (before[i] - net.theta()[i]) / lr;
    CHECK(step == doctest::Approx(grad).epsilon(1e-9));
  }
}

TEST_CASE("training reduces the loss on separable blobs") {
  TempDir dir("train");
  ExperimentConfig cfg = tiny_classification_config(dir.str());
  cfg.layer_dims = {2, 8, 3};
  const ExperimentData data = make_dataset(cfg);
  const NaturalParamHead head(Family::Categorical, 3);
  MlpNetwork net = MlpNetwork::random_init(cfg.layer_dims, cfg.activation, 33);
  Rng rng(2);
  const double initial = mean_nll(net, head, data.train);
  double last = initial;
  for (int epoch = 0; epoch < 20; ++epoch)
    last = train_epoch(net, head, data.train, 0.5, rng);
  CHECK(last < initial);
}

TEST_CASE("linear regression approaches the irreducible noise floor") {
  TempDir dir("reg");
  ExperimentConfig cfg = tiny_classification_config(dir.str());
  cfg.task = Task::Regression;
  cfg.layer_dims = {2, 3};
  cfg.activation = Activation::Identity;
  const ExperimentData data = make_dataset(cfg);
  const NaturalParamHead head(Family::IsotropicGaussian, 3);
  MlpNetwork net = MlpNetwork::random_init(cfg.layer_dims, cfg.activation, 21);
  Rng rng(3);
  double loss = 0.0;
  for (int epoch = 0; epoch < 60; ++epoch)
    loss = train_epoch(net, head, data.train, 0.05, rng);
  // Unit output noise leaves a mean NLL of T/2.
  CHECK(std::abs(loss - 1.5) <= 0.25);
}

TEST_CASE("training aborts when the loss diverges") {
  TempDir dir("diverge");
  ExperimentConfig cfg = tiny_classification_config(dir.str());
  cfg.task = Task::Regression;
  cfg.layer_dims = {2, 3};
  cfg.activation = Activation::Identity;
  const ExperimentData data = make_dataset(cfg);
  const NaturalParamHead head(Family::IsotropicGaussian, 3);
  MlpNetwork net = MlpNetwork::random_init(cfg.layer_dims, cfg.activation, 22);
  Rng rng(4);
  CHECK_THROWS_AS(
      [&] {
        for (int epoch = 0; epoch < 200; ++epoch)
          train_epoch(net, head, data.train, 1e6, rng);
      }(),
      std::runtime_error);
}

TEST_CASE("regression traces carry the equality of bounds and values") {
  TempDir dir("regtrace");
  ExperimentConfig cfg = tiny_classification_config((dir.path / "out").string());
  cfg.task = Task::Regression;
  cfg.layer_dims = {2, 6, 3};
  cfg.learning_rate = 0.05;
  cfg.epochs = 2;
  const ExperimentTrace trace = run_experiment(cfg);
  REQUIRE(!trace.rows.empty());
  const ParsedTrace parsed = parse_trace(dir.path / "out" / "trace.csv");
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (const char* group : {"layer_1", "layer_2"}) {
      for (const char* qty : {"var1", "var2"}) {
        const std::string key =
            std::to_string(epoch) + "," + group + "," + qty;
        const double v = parsed.values.at(key);
        const double ub = parsed.values.at(key + "_ub");
        const double lb = parsed.values.at(key + "_lb");
        CHECK(std::abs(v - ub) <= 1e-9 * std::max(1.0, std::abs(ub)));
        CHECK(std::abs(v - lb) <= 1e-9 * std::max(1.0, std::abs(ub)));
      }
    }
  }
}

TEST_CASE("classification traces: last group var2 rows are identically zero") {
  TempDir dir("clstrace");
  ExperimentConfig cfg = tiny_classification_config((dir.path / "out").string());
  run_experiment(cfg);
  const ParsedTrace parsed = parse_trace(dir.path / "out" / "trace.csv");
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::string e = std::to_string(epoch);
    CHECK(parsed.values.at(e + ",layer_3,var2") == 0.0);
    CHECK(parsed.values.at(e + ",layer_3,var1") > 0.0);
    // Log-ratio rows appear exactly where the variance clears the floor.
    for (std::size_t g = 1; g <= 3; ++g) {
      for (const std::string qty : {"var1", "var2"}) {
        const std::string key = e + ",layer_" + std::to_string(g) + "," + qty;
        const bool has_logratio =
            parsed.values.count(e + ",layer_" + std::to_string(g) +
                                ",logratio_ub_" + qty) > 0;
        CHECK(has_logratio == (parsed.values.at(key) > 1e-12));
      }
    }
  }
}

TEST_CASE("identical seeds give byte-identical traces, threads included") {
  TempDir dir("determ");
  ExperimentConfig cfg = tiny_classification_config((dir.path / "a").string());
  run_experiment(cfg);
  cfg.output_dir = (dir.path / "b").string();
  run_experiment(cfg);
  cfg.output_dir = (dir.path / "c").string();
  cfg.threads = 2;
  run_experiment(cfg);
  const std::string a = slurp(dir.path / "a" / "trace.csv");
  CHECK(a == slurp(dir.path / "b" / "trace.csv"));
  CHECK(a == slurp(dir.path / "c" / "trace.csv"));
  CHECK(!a.empty());
  CHECK(a.find('\r') == std::string::npos);  // LF endings only
}

TEST_CASE("trace csv schema") {
  TempDir dir("schema");
  ExperimentConfig cfg = tiny_classification_config((dir.path / "out").string());
  cfg.epochs = 1;
  run_experiment(cfg);
  const std::string text = slurp(dir.path / "out" / "trace.csv");
  REQUIRE(text.rfind("epoch,group,quantity,value\n", 0) == 0);
  const ParsedTrace parsed = parse_trace(dir.path / "out" / "trace.csv");
  for (const auto& line : parsed.lines) {
    std::stringstream ss(line);
    std::string epoch, group, quantity, value;
    std::getline(ss, epoch, ',');
    std::getline(ss, group, ',');
    std::getline(ss, quantity, ',');
    std::getline(ss, value, ',');
    CHECK(std::stoul(epoch) >= 1);
    CHECK(group.rfind("layer_", 0) == 0);
    const std::vector<std::string> known{
        "fim",     "var1",    "var2",    "var1_ub",          "var1_lb",
        "var2_ub", "var2_lb", "logratio_ub_var1", "logratio_ub_var2"};
    CHECK(std::find(known.begin(), known.end(), quantity) != known.end());
    CHECK(std::isfinite(std::stod(value)));
  }
  // config echo and final checkpoint land next to the trace
  CHECK(fs::exists(dir.path / "out" / "config.json"));
  CHECK(fs::exists(dir.path / "out" / "checkpoint_final.json"));
}

TEST_CASE("csv datasets load, hold out probes, and reject malformed rows") {
  TempDir dir("csv");
  const fs::path csv = dir.path / "data.csv";
  std::string rows;
  for (int k = 0; k < 12; ++k)
    rows += std::to_string(k % 3) + "," + std::to_string(0.1 * k) + "," +
            std::to_string(1.0 - 0.05 * k) + "\n";
  write_file(csv, rows);

  ExperimentConfig cfg = tiny_classification_config(dir.str());
  cfg.dataset = DatasetKind::ImageSubsetCsv;
  cfg.dataset_csv = csv.string();
  cfg.layer_dims = {2, 4, 3};
  cfg.probe_inputs = 2;
  const ExperimentData data = make_dataset(cfg);
  CHECK(data.train.inputs.size() == 10);
  CHECK(data.probes.size() == 2);
  CHECK(data.train.targets[4][1] == 1.0);  // row 4 has label 1

  write_file(csv, "0,0.1\n");  // wrong arity
  CHECK_THROWS_AS(make_dataset(cfg), std::invalid_argument);
  write_file(csv, "7,0.1,0.2\n0,0.3,0.4\n1,0.5,0.6\n");  // label out of range
  CHECK_THROWS_AS(make_dataset(cfg), std::invalid_argument);
}

TEST_CASE("csv-backed experiments run end to end") {
  TempDir dir("csvrun");
  const fs::path csv = dir.path / "data.csv";
  Rng rng(9);
  std::string rows;
  for (int k = 0; k < 40; ++k)
    rows += std::to_string(k % 2) + "," +
            std::to_string((k % 2 ? 1.0 : -1.0) + 0.2 * rng.normal()) + "," +
            std::to_string(0.1 * rng.normal()) + "\n";
  write_file(csv, rows);

  ExperimentConfig cfg = tiny_classification_config((dir.path / "out").string());
  cfg.dataset = DatasetKind::ImageSubsetCsv;
  cfg.dataset_csv = csv.string();
  cfg.layer_dims = {2, 4, 2};
  cfg.epochs = 2;
  cfg.probe_inputs = 2;
  const ExperimentTrace trace = run_experiment(cfg);
  CHECK(trace.rows.size() >= 2 * 2 * 7);  // epochs x groups x base quantities
  CHECK(fs::exists(dir.path / "out" / "trace.csv"));
}

TEST_CASE("cli run creates the trace and honors overrides") {
  TempDir dir("cli");
  const fs::path cfg_path = dir.path / "cfg.json";
  ExperimentConfig cfg = tiny_classification_config((dir.path / "ignored").string());
  write_file(cfg_path, cfg.to_json_string());
  const std::string out = (dir.path / "cli_out").string();
  CHECK(run_cli({"run", "--config", cfg_path.string(), "--output-dir", out}) == 0);
  const std::string text = slurp(fs::path(out) / "trace.csv");
  CHECK(text.rfind("epoch,group,quantity,value\n", 0) == 0);
}

TEST_CASE("cli bounds prints a sandwich table for a saved checkpoint") {
  TempDir dir("clibounds");
  const fs::path cfg_path = dir.path / "cfg.json";
  ExperimentConfig cfg = tiny_classification_config((dir.path / "out").string());
  cfg.epochs = 1;
  write_file(cfg_path, cfg.to_json_string());
  REQUIRE(run_cli({"run", "--config", cfg_path.string()}) == 0);
  const std::string ckpt = (dir.path / "out" / "checkpoint_final.json").string();
  CHECK(run_cli({"bounds", "--checkpoint", ckpt, "--input", "0.4,-0.2",
                 "--family", "categorical", "--n", "100"}) == 0);
  CHECK(run_cli({"bounds", "--checkpoint", ckpt, "--input", "0.4"}) == 1);
  CHECK(run_cli({"bounds", "--checkpoint", ckpt, "--input", "0.4,-0.2",
                 "--family", "poisson"}) == 1);
}

TEST_CASE("cli rejects unknown flags and missing configs") {
  CHECK(run_cli({"run", "--config", "/nonexistent/cfg.json"}) == 1);
  CHECK(run_cli({"run", "--bogus-flag"}) == 1);
  CHECK(run_cli({"frobnicate"}) == 1);
}

TEST_CASE("cli treats malformed checkpoints as validation errors") {
  TempDir dir("badckpt");
  const fs::path ckpt = dir.path / "broken.json";
  write_file(ckpt, "{\"layer_dims\": [2, 2]}");
  CHECK(run_cli({"bounds", "--checkpoint", ckpt.string(), "--input", "0.1,0.2"}) == 1);
}

}  // TEST_SUITE
