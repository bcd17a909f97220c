// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

// Config-driven experiment grid: train targets, attack their gradient logs,
// score, and write result tables.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "splitleak/attack.hpp"
#include "splitleak/datasets.hpp"
#include "splitleak/metrics.hpp"
#include "splitleak/split_protocol.hpp"

namespace splitleak {

class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct DatasetSpec {
  std::string path;                // CSV; takes precedence when set
  std::string target;              // target column for CSV
  std::string delimiter = ",";
  std::string benchmark = "boston";  // synthetic stand-in: boston|energy|california; "" = plain synthetic
  SyntheticSpec synthetic = benchmark_like("boston", 0);  // shape/noise of the synthetic data
  std::optional<std::uint64_t> seed;  // synthetic data seed; default derived from the master seed
  double train_ratio = 0.8;
};

struct ModelSpec {
  Activation activation = Activation::kRelu;
  std::size_t user_depth = 3;
  std::size_t label_depth = 3;
  std::size_t hidden = 64;
  std::size_t cut = 16;
};

struct DefenseSpec {
  bool label_noise = false;
  double epsilon = 1.0;
  double sensitivity = 0.0;  // 0 = max |label| of the dataset
  bool gradient_noise = false;
};

enum class Regularizers { kFull, kKnowledgeOnly, kNone };
std::string_view to_string(Regularizers r);
Regularizers parse_regularizers(std::string_view s);

/// Each non-empty axis is swept; the grid is the cartesian product.
struct SweepSpec {
  std::vector<std::size_t> known;
  std::vector<std::size_t> epoch;
  std::vector<std::size_t> surrogate_depth;
  std::vector<double> epsilon;
  std::vector<std::string> regularizers;
  std::vector<bool> triplet;
  std::vector<bool> gradient_noise;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  std::size_t repeats = 5;
  std::string out = "results";
  std::size_t jobs = 1;
  bool save_logs = false;

  DatasetSpec dataset;
  ModelSpec model;
  TrainConfig train;  // optimizer.lr defaults to 1e-3

  AttackConfig attack;             // surrogate widths derived from model + surrogate_depth
  std::size_t surrogate_depth = 3;
  std::size_t surrogate_hidden = 64;
  std::size_t known = 4;
  std::optional<std::size_t> target_epoch;  // default: last trained epoch
  std::size_t attack_batches = 4;           // recorded batches attacked per repeat
  bool triplet = false;
  double triplet_weight = 0.01;
  Regularizers regularizers = Regularizers::kFull;

  bool baseline = true;
  BaselineConfig baseline_config;

  DefenseSpec defense;
  SweepSpec sweep;

  /// Collects every problem; throws ConfigError listing them all.
  void validate() const;
};

/// Parses TOML text. `overrides` are "dotted.key=value" strings applied on
/// top; values are parsed as TOML and fall back to plain strings.
ExperimentConfig parse_config(const std::string& toml_text, const std::vector<std::string>& overrides = {});
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

/// Complete effective configuration as TOML (defaults filled in).
std::string to_toml(const ExperimentConfig& config);

/// Hex digest of the effective configuration.
std::string config_digest(const ExperimentConfig& config);

/// One grid point: a config with the axis values applied, plus the axis
/// labels used in experiment ids.
struct SweepPoint {
  ExperimentConfig config;
  std::vector<std::pair<std::string, std::string>> axes;
  std::string id_prefix() const;  // "<name>/<axis>=<v>/..."
};

std::vector<SweepPoint> expand_sweep(const ExperimentConfig& config);

Dataset build_dataset(const ExperimentConfig& config);

/// Attack and baseline settings with the surrogate architecture,
/// regularizer choice and triplet toggle resolved.
AttackConfig effective_attack(const ExperimentConfig& config);
BaselineConfig effective_baseline(const ExperimentConfig& config);

/// Largest known-set size used anywhere in the grid. Known sets of smaller
/// points are prefixes of this one, and attacked batches avoid all of it.
std::size_t max_known(const ExperimentConfig& config);

/// Everything produced by training one target model.
struct TrainedTarget {
  SplitIndices split;
  StandardizedDataset data;
  std::vector<double> train_labels;  // labels the label party trained on (maybe noised)
  TrainResult result;
};

/// Per-repeat derived seeds.
std::uint64_t repeat_seed(std::uint64_t master, std::size_t repeat);

/// Trains the target for `config` with repeat seed `seed`.
TrainedTarget train_target(const ExperimentConfig& config, const Dataset& dataset, std::uint64_t seed);

/// Ordered, seeded selection of attacked records.
std::vector<std::size_t> select_attack_records(const ExperimentConfig& config, const TrainedTarget& target,
                                               std::uint64_t seed);

struct MethodRun {
  std::vector<AttackResult> groups;
  MetricRow row;
};

/// Runs the attack (method "attack") or the baseline (method "baseline")
/// against a trained target and produces a metric row.
MethodRun run_method(const ExperimentConfig& config, const TrainedTarget& target, const std::string& method,
                     std::uint64_t seed, const std::string& experiment_id);

struct Failure {
  std::string experiment_id;
  std::uint64_t seed = 0;
  std::size_t repeat = 0;
  std::string error;
};

struct ExperimentOutput {
  std::vector<MetricRow> rows;
  std::vector<Failure> failures;
  std::vector<std::pair<std::string, GradientLog>> logs;  // filled when save_logs
};

using ProgressFn = std::function<void(const std::string& message)>;

/// Runs every sweep point x repeat. Rows come back in grid order whatever
/// the number of workers.
ExperimentOutput run_experiment(const ExperimentConfig& config, const ProgressFn& progress = {});

/// results.csv, results.json, summary.csv, plotdata/*.csv, pivot_*.csv,
/// effective-config.toml, failures.json and optional logs/*.jsonl.
void write_outputs(const std::string& dir, const ExperimentConfig& config, const ExperimentOutput& output);

/// summary.csv, plotdata/<axis>.csv and pivot_<axis>.csv from rows.
void write_report(const std::string& dir, const std::vector<MetricRow>& rows);

/// Model parameters as JSON.
void save_model(const std::string& path, const CompositeModel& model);
CompositeModel load_model(const std::string& path);

}  // namespace splitleak
