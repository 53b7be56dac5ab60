#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fimvar/bounds.hpp"
#include "fimvar/estimators.hpp"
#include "fimvar/harness.hpp"
#include "fimvar/oracle.hpp"
#include "fimvar/rng.hpp"

namespace fimvar {

namespace {

std::string scientific(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2e", v);
  return buf;
}

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;

Vec parse_csv_row(const std::string& text) {
  Vec out;
  std::stringstream ss(text);
  std::string field;
  while (std::getline(ss, field, ',')) {
    try {
      out.push_back(std::stod(field));
    } catch (const std::exception&) {
      throw std::invalid_argument("--input: bad number '" + field + "'");
    }
  }
  if (out.empty()) throw std::invalid_argument("--input: empty row");
  return out;
}

int run_subcommand(const std::string& config_path, const std::string& output_dir,
                   bool seed_set, std::uint64_t seed, std::size_t threads_override) {
  ExperimentConfig cfg = ExperimentConfig::from_json_file(config_path);
  if (!output_dir.empty()) cfg.output_dir = output_dir;
  if (seed_set) cfg.seed = seed;
  if (threads_override > 0) cfg.threads = threads_override;
  cfg.validate();
  run_experiment(cfg);
  std::printf("wrote %s/trace.csv\n", cfg.output_dir.c_str());
  return kExitOk;
}

int bounds_subcommand(const std::string& checkpoint_path, const std::string& input_row,
                      const std::string& family_name, std::size_t n,
                      std::size_t restarts) {
  const MlpNetwork net = MlpNetwork::load_checkpoint(checkpoint_path);
  const Vec x = parse_csv_row(input_row);
  if (x.size() != net.input_dim())
    throw std::invalid_argument("--input has " + std::to_string(x.size()) +
                                " values, network expects " +
                                std::to_string(net.input_dim()));
  Family family;
  if (family_name == "categorical") {
    family = Family::Categorical;
  } else if (family_name == "gaussian") {
    family = Family::IsotropicGaussian;
  } else {
    throw std::invalid_argument("--family must be categorical or gaussian");
  }
  const NaturalParamHead head(family, net.output_dim());

  ZEigOptions opts;
  opts.restarts = restarts;
  const ConditionalBoundContext ctx =
      make_conditional_bound_context(net, head, x, n, opts);
  const ExactConditionalReport exact = exact_conditional(net, head, x, n);

  std::printf("%-10s %-5s %14s %14s %14s\n", "group", "qty", "LB", "value", "UB");
  bool ok = true;
  for (const auto& group : net.param_groups()) {
    double fim = 0.0, var1 = 0.0, var2 = 0.0;
    ConditionalBounds sum{};
    const double m = static_cast<double>(group.end - group.begin);
    for (std::size_t i = group.begin; i < group.end; ++i) {
      const ConditionalBounds b = conditional_bounds_at(ctx, i);
      fim += exact.fim_diag[i];
      var1 += exact.var1[i];
      var2 += exact.var2[i];
      sum.fim.lower += b.fim.lower;
      sum.fim.upper += b.fim.upper;
      sum.var1.lower += b.var1.lower;
      sum.var1.upper += b.var1.upper;
      sum.var2.lower += b.var2.lower;
      sum.var2.upper += b.var2.upper;
    }
    const auto line = [&](const char* qty, double lb, double v, double ub) {
      const double slack = 1e-9 * std::max(1.0, std::abs(ub));
      const bool inside = v >= lb - slack && v <= ub + slack;
      ok = ok && inside;
      std::printf("%-10s %-5s %14.6e %14.6e %14.6e%s\n", group.name.c_str(), qty,
                  lb / m, v / m, ub / m, inside ? "" : "  <-- violation");
    };
    line("fim", sum.fim.lower, fim, sum.fim.upper);
    line("var1", sum.var1.lower, var1, sum.var1.upper);
    line("var2", sum.var2.lower, var2, sum.var2.upper);
  }
  if (!ok) {
    std::fprintf(stderr, "bound violation detected\n");
    return kExitNumerical;
  }
  return kExitOk;
}

struct CheckOutcome {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Consistency suite behind `fimvar verify`: every check pits an analytic
// path against an independent reference.
std::vector<CheckOutcome> run_verification() {
  std::vector<CheckOutcome> results;
  const auto record = [&](const std::string& name, bool pass,
                          const std::string& detail) {
    results.push_back({name, pass, detail});
  };

  {  // Analytic Jacobian and diagonal Hessian vs central differences.
    double worst_jac = 0.0, worst_hess = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      const MlpNetwork net = MlpNetwork::random_init({3, 6, 5, 2},
                                                     Activation::Sigmoid, 100 + s);
      Rng rng(200 + s);
      Vec x(3);
      for (auto& v : x) v = rng.normal();
      const DerivativeBundle d = net.derivatives(x);
      const Mat fd_j = oracle::fd_jacobian(net, x, 1e-4);
      const Mat fd_h = oracle::fd_diag_hessian(net, x, 1e-4);
      for (std::size_t k = 0; k < d.jac.data.size(); ++k) {
        worst_jac = std::max(worst_jac,
                             std::abs(d.jac.data[k] - fd_j.data[k]) /
                                 std::max(1.0, std::abs(fd_j.data[k])));
        worst_hess = std::max(worst_hess,
                              std::abs(d.dhess.data[k] - fd_h.data[k]) /
                                  std::max(1.0, std::abs(fd_h.data[k])));
      }
    }
    record("jacobian vs finite differences", worst_jac <= 1e-5,
           "max rel err " + scientific(worst_jac));
    record("diag hessian vs finite differences", worst_hess <= 1e-4,
           "max rel err " + scientific(worst_hess));
  }

  {  // Closed-form conditional statistics vs categorical enumeration.
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      const MlpNetwork net = MlpNetwork::random_init({2, 5, 3},
                                                     Activation::Tanh, 300 + s);
      const NaturalParamHead head(Family::Categorical, 3);
      Rng rng(400 + s);
      Vec x(2);
      for (auto& v : x) v = rng.normal();
      const auto exact = exact_conditional(net, head, x, 10);
      const auto enumerated =
          oracle::enumerate_categorical_statistics(net, head, x, 10);
      for (std::size_t i = 0; i < exact.fim_diag.size(); ++i) {
        // Relative below the 1e-8 floor is dominated by cancellation noise;
        // flooring the denominator there amounts to an absolute check.
        const auto rel = [](double a, double b) {
          return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)});
        };
        worst = std::max({worst, rel(exact.fim_diag[i], enumerated.fim_diag[i]),
                          rel(exact.var1[i], enumerated.var1[i]),
                          rel(exact.var2[i], enumerated.var2[i])});
      }
    }
    record("closed forms vs outcome enumeration", worst <= 1e-10,
           "max rel err " + scientific(worst));
  }

  {  // Gaussian head: bounds collapse onto the exact values.
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 10; ++s) {
      const MlpNetwork net = MlpNetwork::random_init({2, 6, 3},
                                                     Activation::Sigmoid, 500 + s);
      const NaturalParamHead head(Family::IsotropicGaussian, 3);
      Rng rng(600 + s);
      Vec x(2);
      for (auto& v : x) v = rng.normal();
      const auto ctx = make_conditional_bound_context(net, head, x, 50);
      const auto exact = exact_conditional(net, head, x, 50);
      for (std::size_t i = 0; i < exact.fim_diag.size(); ++i) {
        const ConditionalBounds b = conditional_bounds_at(ctx, i);
        const auto rel = [](double v, double bound) {
          return std::abs(v - bound) / std::max(1.0, std::abs(bound));
        };
        worst = std::max({worst, rel(exact.fim_diag[i], b.fim.upper),
                          rel(exact.var1[i], b.var1.upper),
                          rel(exact.var2[i], b.var2.upper)});
      }
    }
    record("gaussian bound equalities", worst <= 1e-9,
           "max rel gap " + scientific(worst));
  }

  {  // Sandwich property over random categorical instances.
    bool ok = true;
    for (std::uint64_t s = 0; s < 100 && ok; ++s) {
      const MlpNetwork net = MlpNetwork::random_init({2, 4, 3},
                                                     Activation::Sigmoid, 700 + s);
      const NaturalParamHead head(Family::Categorical, 3);
      Rng rng(800 + s);
      Vec x(2);
      for (auto& v : x) v = rng.normal();
      const auto ctx = make_conditional_bound_context(net, head, x, 25);
      const auto exact = exact_conditional(net, head, x, 25);
      for (std::size_t i = 0; i < exact.fim_diag.size() && ok; ++i) {
        const ConditionalBounds b = conditional_bounds_at(ctx, i);
        const auto inside = [](double lo, double v, double hi) {
          const double slack = 1e-9 * std::max(1.0, std::abs(hi));
          return v >= lo - slack && v <= hi + slack;
        };
        ok = inside(b.fim.lower, exact.fim_diag[i], b.fim.upper) &&
             inside(b.var1.lower, exact.var1[i], b.var1.upper) &&
             inside(b.var2.lower, exact.var2[i], b.var2.upper);
      }
    }
    record("bound sandwich on random instances", ok, ok ? "100 instances" : "violated");
  }

  {  // Known tensor eigenvalue constants for the Gaussian head.
    const NaturalParamHead head(Family::IsotropicGaussian, 3);
    const MomentSet mom = moments(head, Vec{0.1, -0.2, 0.3});
    Tensor4 kernel = mom.k4;
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t c = 0; c < 3; ++c)
          for (std::size_t d = 0; d < 3; ++d)
            kernel.at(a, b, c, d) -= mom.fisher_h(a, b) * mom.fisher_h(c, d);
    const ZEigPair zk = z_eig_extremes(mom.k4);
    const ZEigPair zm = z_eig_extremes(kernel);
    const bool pass = std::abs(zk.max.value - 3.0) <= 1e-6 &&
                      std::abs(zm.min.value - 2.0) <= 1e-6 &&
                      std::abs(zm.max.value - 2.0) <= 1e-6;
    record("gaussian tensor eigenvalue constants", pass,
           "k_max=" + std::to_string(zk.max.value) +
               " m=[" + std::to_string(zm.min.value) + "," +
               std::to_string(zm.max.value) + "]");
  }

  {  // Seeded sampling is reproducible.
    const NaturalParamHead head(Family::Categorical, 4);
    const Vec h{0.3, -0.1, 0.7, 0.0};
    const auto a = sample(head, h, 100, 42);
    const auto b = sample(head, h, 100, 42);
    record("sampling determinism", a == b, "100 draws, seed 42");
  }

  return results;
}

int verify_subcommand() {
  const auto results = run_verification();
  bool all_pass = true;
  for (const auto& r : results) {
    std::printf("[%s] %-42s %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                r.detail.c_str());
    all_pass = all_pass && r.pass;
  }
  std::printf("%zu/%zu checks passed\n",
              static_cast<std::size_t>(
                  std::count_if(results.begin(), results.end(),
                                [](const CheckOutcome& r) { return r.pass; })),
              results.size());
  return all_pass ? kExitOk : kExitNumerical;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Diagonal Fisher information estimators, variances and bounds"};
  app.require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "Train and trace FIM quantities per epoch");
  std::string config_path;
  std::string output_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t threads = 0;
  run_cmd->add_option("--config", config_path, "Experiment config JSON")->required();
  run_cmd->add_option("--output-dir", output_dir, "Override config output_dir");
  run_cmd->add_option("--seed", seed, "Override config seed")
      ->each([&seed_set](const std::string&) { seed_set = true; });
  run_cmd->add_option("--threads", threads, "Probe evaluation threads");

  auto* verify_cmd = app.add_subcommand("verify", "Run the oracle consistency suite");

  auto* bounds_cmd =
      app.add_subcommand("bounds", "One-shot bound report for a checkpoint");
  std::string checkpoint_path;
  std::string input_row;
  std::string family_name = "categorical";
  std::size_t n_samples = 1000;
  std::size_t restarts = 16;
  bounds_cmd->add_option("--checkpoint", checkpoint_path, "Network checkpoint JSON")
      ->required();
  bounds_cmd->add_option("--input", input_row, "Comma-separated input vector")
      ->required();
  bounds_cmd->add_option("--family", family_name, "Head family (categorical|gaussian)");
  bounds_cmd->add_option("--n", n_samples, "Sample count entering the 1/N scaling");
  bounds_cmd->add_option("--restarts", restarts, "Tensor eigenvalue solver restarts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\nRun with --help for usage.\n", e.what());
    return kExitValidation;
  }

  try {
    if (run_cmd->parsed())
      return run_subcommand(config_path, output_dir, seed_set, seed, threads);
    if (verify_cmd->parsed()) return verify_subcommand();
    if (bounds_cmd->parsed())
      return bounds_subcommand(checkpoint_path, input_row, family_name, n_samples,
                               restarts);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::domain_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerical;
  }
  return kExitValidation;
}

}  // namespace fimvar
