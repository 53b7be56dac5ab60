#include "fimvar/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fimvar/bounds.hpp"
#include "fimvar/estimators.hpp"

namespace fimvar {

namespace {

constexpr std::size_t kTrainPoints = 600;
constexpr std::size_t kBatchSize = 32;
constexpr double kSandwichSlack = 1e-9;
constexpr double kLogRatioFloor = 1e-12;

std::string task_name(Task t) {
  return t == Task::Classification ? "classification" : "regression";
}

Task task_from_name(const std::string& s) {
  if (s == "classification") return Task::Classification;
  if (s == "regression") return Task::Regression;
  throw std::invalid_argument("unknown task: " + s);
}

std::string dataset_name(DatasetKind d) {
  return d == DatasetKind::SyntheticGaussianBlobs ? "synthetic_blobs"
                                                  : "image_subset_csv";
}

DatasetKind dataset_from_name(const std::string& s) {
  if (s == "synthetic_blobs") return DatasetKind::SyntheticGaussianBlobs;
  if (s == "image_subset_csv") return DatasetKind::ImageSubsetCsv;
  throw std::invalid_argument("unknown dataset: " + s);
}

Vec one_hot(std::size_t k, std::size_t dim) {
  Vec v(dim, 0.0);
  v[k] = 1.0;
  return v;
}

ExperimentData synthetic_classification(const ExperimentConfig& cfg) {
  const std::size_t in_dim = cfg.layer_dims.front();
  const std::size_t classes = cfg.layer_dims.back();
  Rng rng(Rng::derive(cfg.seed, 1));

  // Class centers on a circle in the first two coordinates (on a line for
  // one-dimensional inputs).
  std::vector<Vec> centers(classes, Vec(in_dim, 0.0));
  for (std::size_t c = 0; c < classes; ++c) {
    const double angle = 2.0 * 3.14159265358979323846 * double(c) / double(classes);
    centers[c][0] = 3.0 * std::cos(angle);
    if (in_dim > 1) centers[c][1] = 3.0 * std::sin(angle);
  }

  auto draw_point = [&](std::size_t c) {
    Vec x = centers[c];
    for (auto& v : x) v += 0.7 * rng.normal();
    return x;
  };

  ExperimentData data;
  for (std::size_t k = 0; k < kTrainPoints; ++k) {
    const std::size_t c = k % classes;
    data.train.inputs.push_back(draw_point(c));
    data.train.targets.push_back(one_hot(c, classes));
  }
  for (std::size_t k = 0; k < cfg.probe_inputs; ++k)
    data.probes.push_back(draw_point(k % classes));
  return data;
}

ExperimentData synthetic_regression(const ExperimentConfig& cfg) {
  const std::size_t in_dim = cfg.layer_dims.front();
  const std::size_t out_dim = cfg.layer_dims.back();
  Rng rng(Rng::derive(cfg.seed, 1));

  // Fixed random linear map; targets are its output plus unit noise.
  Mat a(out_dim, in_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
  for (auto& v : a.data) v = rng.uniform(-1.0, 1.0) * scale;

  auto draw_x = [&]() {
    Vec x(in_dim);
    for (auto& v : x) v = rng.normal();
    return x;
  };

  ExperimentData data;
  for (std::size_t k = 0; k < kTrainPoints; ++k) {
    Vec x = draw_x();
    Vec y = mat_vec(a, x);
    for (auto& v : y) v += rng.normal();
    data.train.inputs.push_back(std::move(x));
    data.train.targets.push_back(std::move(y));
  }
  for (std::size_t k = 0; k < cfg.probe_inputs; ++k) data.probes.push_back(draw_x());
  return data;
}

ExperimentData csv_classification(const ExperimentConfig& cfg) {
  const std::size_t in_dim = cfg.layer_dims.front();
  const std::size_t classes = cfg.layer_dims.back();
  std::ifstream in(cfg.dataset_csv);
  if (!in)
    throw std::runtime_error("cannot open dataset csv: " + cfg.dataset_csv);

  std::vector<Vec> inputs;
  std::vector<Vec> targets;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<double> values;
    while (std::getline(ss, field, ',')) {
      try {
        values.push_back(std::stod(field));
      } catch (const std::exception&) {
        throw std::invalid_argument("dataset csv " + cfg.dataset_csv + " line " +
                                    std::to_string(line_no) + ": bad number '" +
                                    field + "'");
      }
    }
    if (values.size() != in_dim + 1)
      throw std::invalid_argument("dataset csv " + cfg.dataset_csv + " line " +
                                  std::to_string(line_no) + ": expected " +
                                  std::to_string(in_dim + 1) + " fields");
    const double label = values.front();
    const auto cls = static_cast<long long>(label);
    if (label != static_cast<double>(cls) || cls < 0 ||
        cls >= static_cast<long long>(classes))
      throw std::invalid_argument("dataset csv " + cfg.dataset_csv + " line " +
                                  std::to_string(line_no) + ": bad label");
    inputs.emplace_back(values.begin() + 1, values.end());
    targets.push_back(one_hot(static_cast<std::size_t>(cls), classes));
  }
  if (inputs.size() <= cfg.probe_inputs)
    throw std::invalid_argument("dataset csv has too few rows for the requested probes");

  // The trailing rows are held out as probe inputs.
  ExperimentData data;
  const std::size_t train_count = inputs.size() - cfg.probe_inputs;
  for (std::size_t k = 0; k < train_count; ++k) {
    data.train.inputs.push_back(std::move(inputs[k]));
    data.train.targets.push_back(std::move(targets[k]));
  }
  for (std::size_t k = train_count; k < inputs.size(); ++k)
    data.probes.push_back(std::move(inputs[k]));
  return data;
}

double nll(const NaturalParamHead& head, const Vec& h, const Vec& target) {
  if (head.family == Family::IsotropicGaussian) {
    double s = 0.0;
    for (std::size_t a = 0; a < h.size(); ++a) {
      const double d = target[a] - h[a];
      s += d * d;
    }
    return 0.5 * s;
  }
  return log_partition(head, h) - dot(target, h);
}

// Classic backprop for the NLL gradient; dLoss/dh = eta - t for both
// families.
void accumulate_nll_gradient(const MlpNetwork& net, const NaturalParamHead& head,
                             const Vec& x, const Vec& target, Vec& grad) {
  const std::size_t depth = net.layer_count();
  const auto& dims = net.layer_dims();
  const Vec& theta = net.theta();
  const auto& groups = net.param_groups();

  std::vector<Vec> acts(depth + 1);
  std::vector<Vec> pre(depth + 1);
  acts[0] = x;
  for (std::size_t l = 1; l <= depth; ++l) {
    const std::size_t din = dims[l - 1];
    const std::size_t dout = dims[l];
    const double* w = &theta[groups[l - 1].begin];
    const double* b = w + dout * din;
    Vec z(dout);
    for (std::size_t p = 0; p < dout; ++p) {
      double s = b[p];
      for (std::size_t q = 0; q < din; ++q) s += w[p * din + q] * acts[l - 1][q];
      z[p] = s;
    }
    pre[l] = z;
    if (l < depth)
      for (auto& v : z) v = activation_value(net.activation(), v);
    acts[l] = std::move(z);
  }

  const Vec eta = mean_params(head, acts[depth]);
  Vec delta(dims[depth]);
  for (std::size_t a = 0; a < delta.size(); ++a) delta[a] = eta[a] - target[a];

  for (std::size_t l = depth; l >= 1; --l) {
    const std::size_t din = dims[l - 1];
    const std::size_t dout = dims[l];
    const std::size_t woff = groups[l - 1].begin;
    const std::size_t boff = woff + dout * din;
    for (std::size_t p = 0; p < dout; ++p) {
      for (std::size_t q = 0; q < din; ++q)
        grad[woff + p * din + q] += delta[p] * acts[l - 1][q];
      grad[boff + p] += delta[p];
    }
    if (l == 1) break;
    const double* w = &theta[woff];
    Vec prev(din, 0.0);
    for (std::size_t q = 0; q < din; ++q) {
      double s = 0.0;
      for (std::size_t p = 0; p < dout; ++p) s += w[p * din + q] * delta[p];
      prev[q] = s;
    }
    for (std::size_t q = 0; q < din; ++q)
      prev[q] *= activation_derivative(net.activation(), pre[l - 1][q]);
    delta = std::move(prev);
  }
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("failed writing: " + path);
}

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Per-group running sums of everything one probe evaluation produces.
struct GroupAccumulator {
  double fim = 0.0;
  double var1 = 0.0, var1_lb = 0.0, var1_ub = 0.0;
  double var2 = 0.0, var2_lb = 0.0, var2_ub = 0.0;
  std::size_t count = 0;
};

std::vector<GroupAccumulator> evaluate_probe(const MlpNetwork& net,
                                             const NaturalParamHead& head,
                                             const Vec& x, std::size_t n_samples) {
  const auto& groups = net.param_groups();
  std::vector<GroupAccumulator> acc(groups.size());
  const ConditionalBoundContext ctx =
      make_conditional_bound_context(net, head, x, n_samples);
  const ExactConditionalReport exact = exact_conditional(net, head, x, n_samples);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t i = groups[g].begin; i < groups[g].end; ++i) {
      const ConditionalBounds b = conditional_bounds_at(ctx, i);
      acc[g].fim += exact.fim_diag[i];
      acc[g].var1 += exact.var1[i];
      acc[g].var1_lb += b.var1.lower;
      acc[g].var1_ub += b.var1.upper;
      acc[g].var2 += exact.var2[i];
      acc[g].var2_lb += b.var2.lower;
      acc[g].var2_ub += b.var2.upper;
      ++acc[g].count;
    }
  }
  return acc;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config " + path + " is not valid JSON: " + e.what());
  }
  ExperimentConfig cfg;
  try {
    cfg.task = task_from_name(doc.at("task").get<std::string>());
    cfg.dataset = dataset_from_name(doc.at("dataset").get<std::string>());
    if (doc.contains("dataset_csv"))
      cfg.dataset_csv = doc.at("dataset_csv").get<std::string>();
    cfg.layer_dims = doc.at("layer_dims").get<std::vector<std::size_t>>();
    cfg.activation = activation_from_name(doc.at("activation").get<std::string>());
    cfg.epochs = doc.at("epochs").get<std::size_t>();
    cfg.learning_rate = doc.at("learning_rate").get<double>();
    cfg.n_fim_samples = doc.at("n_fim_samples").get<std::size_t>();
    cfg.probe_inputs = doc.at("probe_inputs").get<std::size_t>();
    cfg.seed = doc.at("seed").get<std::uint64_t>();
    cfg.output_dir = doc.at("output_dir").get<std::string>();
    if (doc.contains("threads")) cfg.threads = doc.at("threads").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config " + path + ": " + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string ExperimentConfig::to_json_string() const {
  nlohmann::json doc;
  doc["task"] = task_name(task);
  doc["dataset"] = dataset_name(dataset);
  if (!dataset_csv.empty()) doc["dataset_csv"] = dataset_csv;
  doc["layer_dims"] = layer_dims;
  doc["activation"] = activation_name(activation);
  doc["epochs"] = epochs;
  doc["learning_rate"] = learning_rate;
  doc["n_fim_samples"] = n_fim_samples;
  doc["probe_inputs"] = probe_inputs;
  doc["seed"] = seed;
  doc["output_dir"] = output_dir;
  doc["threads"] = threads;
  return doc.dump(2) + "\n";
}

void ExperimentConfig::validate() const {
  if (layer_dims.size() < 2)
    throw std::invalid_argument("layer_dims needs at least input and output");
  for (std::size_t d : layer_dims)
    if (d == 0) throw std::invalid_argument("layer_dims entries must be positive");
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (n_fim_samples < 2) throw std::invalid_argument("n_fim_samples must be at least 2");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (probe_inputs < 1) throw std::invalid_argument("probe_inputs must be at least 1");
  if (threads < 1) throw std::invalid_argument("threads must be at least 1");
  if (task == Task::Classification && layer_dims.back() < 2)
    throw std::invalid_argument("classification needs at least 2 classes");
  if (task == Task::Classification && layer_dims.back() > 32)
    throw std::invalid_argument("classification is limited to 32 classes");
  if (dataset == DatasetKind::ImageSubsetCsv && dataset_csv.empty())
    throw std::invalid_argument("image_subset_csv dataset needs dataset_csv");
  if (dataset == DatasetKind::ImageSubsetCsv && task != Task::Classification)
    throw std::invalid_argument("image_subset_csv supports only classification");
  if (output_dir.empty()) throw std::invalid_argument("output_dir must be set");
}

ExperimentData make_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset == DatasetKind::ImageSubsetCsv) return csv_classification(cfg);
  return cfg.task == Task::Classification ? synthetic_classification(cfg)
                                          : synthetic_regression(cfg);
}

double mean_nll(const MlpNetwork& net, const NaturalParamHead& head,
                const Dataset& data) {
  double total = 0.0;
  for (std::size_t k = 0; k < data.inputs.size(); ++k)
    total += nll(head, net.forward(data.inputs[k]), data.targets[k]);
  return total / static_cast<double>(data.inputs.size());
}

double train_epoch(MlpNetwork& net, const NaturalParamHead& head,
                   const Dataset& data, double learning_rate, Rng& rng) {
  if (data.inputs.empty()) throw std::invalid_argument("empty training set");
  const std::size_t n = data.inputs.size();
  std::vector<std::size_t> order(n);
  for (std::size_t k = 0; k < n; ++k) order[k] = k;
  for (std::size_t k = n; k > 1; --k) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform01() * double(k));
    std::swap(order[k - 1], order[std::min(j, k - 1)]);
  }

  double loss_sum = 0.0;
  Vec grad(net.param_count());
  for (std::size_t start = 0; start < n; start += kBatchSize) {
    const std::size_t stop = std::min(start + kBatchSize, n);
    const double batch = static_cast<double>(stop - start);
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t k = start; k < stop; ++k) {
      const Vec& x = data.inputs[order[k]];
      const Vec& t = data.targets[order[k]];
      loss_sum += nll(head, net.forward(x), t);
      accumulate_nll_gradient(net, head, x, t, grad);
    }
    Vec theta = net.theta();
    const double step = learning_rate / batch;
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= step * grad[i];
    net.set_theta(std::move(theta));
  }

  const double mean_loss = loss_sum / static_cast<double>(n);
  if (!std::isfinite(mean_loss))
    throw std::runtime_error("training diverged: loss is not finite");
  return mean_loss;
}

ExperimentTrace run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const NaturalParamHead head(cfg.task == Task::Classification
                                  ? Family::Categorical
                                  : Family::IsotropicGaussian,
                              cfg.layer_dims.back());
  const ExperimentData data = make_dataset(cfg);
  MlpNetwork net =
      MlpNetwork::random_init(cfg.layer_dims, cfg.activation, Rng::derive(cfg.seed, 2));
  Rng train_rng(Rng::derive(cfg.seed, 3));

  const auto& groups = net.param_groups();
  ExperimentTrace trace;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    train_epoch(net, head, data.train, cfg.learning_rate, train_rng);

    // Probe evaluations are pure; fan out in waves of at most cfg.threads,
    // merging in probe order.
    std::vector<std::vector<GroupAccumulator>> per_probe(data.probes.size());
    if (cfg.threads > 1 && data.probes.size() > 1) {
      for (std::size_t wave = 0; wave < data.probes.size(); wave += cfg.threads) {
        const std::size_t stop =
            std::min(wave + cfg.threads, data.probes.size());
        std::vector<std::future<std::vector<GroupAccumulator>>> futures;
        for (std::size_t k = wave; k < stop; ++k) {
          const Vec& x = data.probes[k];
          futures.push_back(std::async(std::launch::async, [&net, &head, &cfg, &x] {
            return evaluate_probe(net, head, x, cfg.n_fim_samples);
          }));
        }
        for (std::size_t k = wave; k < stop; ++k)
          per_probe[k] = futures[k - wave].get();
      }
    } else {
      for (std::size_t k = 0; k < data.probes.size(); ++k)
        per_probe[k] = evaluate_probe(net, head, data.probes[k], cfg.n_fim_samples);
    }

    for (std::size_t g = 0; g < groups.size(); ++g) {
      GroupAccumulator total;
      for (const auto& probe : per_probe) {
        total.fim += probe[g].fim;
        total.var1 += probe[g].var1;
        total.var1_lb += probe[g].var1_lb;
        total.var1_ub += probe[g].var1_ub;
        total.var2 += probe[g].var2;
        total.var2_lb += probe[g].var2_lb;
        total.var2_ub += probe[g].var2_ub;
        total.count += probe[g].count;
      }
      const double m = static_cast<double>(total.count);
      const double fim = total.fim / m;
      const double var1 = total.var1 / m, var1_lb = total.var1_lb / m,
                   var1_ub = total.var1_ub / m;
      const double var2 = total.var2 / m, var2_lb = total.var2_lb / m,
                   var2_ub = total.var2_ub / m;

      const auto check_sandwich = [&](double lb, double v, double ub,
                                      const char* what) {
        const double slack = kSandwichSlack * std::max(1.0, std::abs(ub));
        if (v < lb - slack || v > ub + slack)
          throw std::runtime_error(std::string("bound violation for ") + what +
                                   " in " + groups[g].name + " at epoch " +
                                   std::to_string(epoch));
      };
      check_sandwich(var1_lb, var1, var1_ub, "var1");
      check_sandwich(var2_lb, var2, var2_ub, "var2");

      const auto push = [&](const char* quantity, double value) {
        trace.rows.push_back({epoch, groups[g].name, quantity, value});
      };
      push("fim", fim);
      push("var1", var1);
      push("var2", var2);
      push("var1_ub", var1_ub);
      push("var1_lb", var1_lb);
      push("var2_ub", var2_ub);
      push("var2_lb", var2_lb);
      if (var1 > kLogRatioFloor) push("logratio_ub_var1", std::log(var1_ub / var1));
      if (var2 > kLogRatioFloor) push("logratio_ub_var2", std::log(var2_ub / var2));
    }
  }

  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  std::string csv = "epoch,group,quantity,value\n";
  for (const auto& row : trace.rows)
    csv += std::to_string(row.epoch) + "," + row.group + "," + row.quantity + "," +
           format_value(row.value) + "\n";
  write_text_file((fs::path(cfg.output_dir) / "trace.csv").string(), csv);
  write_text_file((fs::path(cfg.output_dir) / "config.json").string(),
                  cfg.to_json_string());
  net.save_checkpoint((fs::path(cfg.output_dir) / "checkpoint_final.json").string());
  return trace;
}

}  // namespace fimvar
