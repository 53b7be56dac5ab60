#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fimvar/expfam.hpp"
#include "fimvar/network.hpp"
#include "fimvar/rng.hpp"

namespace fimvar {

enum class Task { Classification, Regression };
enum class DatasetKind { SyntheticGaussianBlobs, ImageSubsetCsv };

/// Experiment description, mirrored one-to-one by the JSON config file
/// (snake_case keys).
struct ExperimentConfig {
  Task task = Task::Classification;
  DatasetKind dataset = DatasetKind::SyntheticGaussianBlobs;
  std::string dataset_csv;  // only for ImageSubsetCsv
  std::vector<std::size_t> layer_dims;
  Activation activation = Activation::Sigmoid;
  std::size_t epochs = 20;
  double learning_rate = 0.1;
  std::size_t n_fim_samples = 5000;
  std::size_t probe_inputs = 1;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::size_t threads = 1;

  static ExperimentConfig from_json_file(const std::string& path);
  std::string to_json_string() const;
  void validate() const;
};

/// Inputs paired with targets already mapped to sufficient-statistic space
/// (one-hot rows for classification, raw response vectors for regression).
struct Dataset {
  std::vector<Vec> inputs;
  std::vector<Vec> targets;
};

struct TraceRow {
  std::size_t epoch = 0;
  std::string group;
  std::string quantity;
  double value = 0.0;
};

struct ExperimentTrace {
  std::vector<TraceRow> rows;
};

/// Training set plus held-out probe inputs, both derived from the config
/// seed. Probe inputs never enter the SGD pass.
struct ExperimentData {
  Dataset train;
  std::vector<Vec> probes;
};

ExperimentData make_dataset(const ExperimentConfig& cfg);

/// One shuffled pass of minibatch SGD (batch 32) on the mean negative
/// log-likelihood; returns the mean loss over the pass. Aborts with
/// std::runtime_error when the loss turns non-finite.
double train_epoch(MlpNetwork& net, const NaturalParamHead& head,
                   const Dataset& data, double learning_rate, Rng& rng);

/// Mean negative log-likelihood of the network on a dataset.
double mean_nll(const MlpNetwork& net, const NaturalParamHead& head,
                const Dataset& data);

/// Trains per the config and records per-epoch, per-parameter-group means of
/// the exact FIM diagonal, both estimator variances, and their bounds.
/// Writes trace.csv, config.json and checkpoint_final.json to output_dir.
/// Every emitted (lb, value, ub) triple is checked at write time.
ExperimentTrace run_experiment(const ExperimentConfig& cfg);

/// Entry point of the command line tool (subcommands: run, verify, bounds).
/// Returns 0 on success, 1 on validation errors, 2 on numerical failure.
int cli_main(int argc, const char* const* argv);

}  // namespace fimvar
