// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "splitleak/mlp.hpp"
#include "splitleak/tensor.hpp"

namespace splitleak {

struct Dataset {
  std::string name;
  Tensor features;                 // n x p
  std::vector<double> labels;      // length n
  std::vector<std::string> feature_names;
  std::string provenance;
  std::vector<std::size_t> dropped_rows;  // 1-based data-row numbers skipped on load

  std::size_t rows() const { return labels.size(); }
  std::size_t cols() const { return features.cols(); }
  void validate() const;
  /// Stable content hash (hex) over shape, feature values and labels.
  std::string digest() const;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::vector<std::size_t> known;  // subset of train
  std::uint64_t seed = 0;
};

struct StandardizedDataset {
  Dataset data;
  std::vector<double> means;
  std::vector<double> stds;

  void write_stats_json(std::ostream& out) const;
};

/// Reads a headed CSV. All columns other than `target_column` become
/// features. Rows with a missing or non-numeric cell are dropped and their
/// row numbers kept in `dropped_rows`.
Dataset load_csv(const std::string& path, const std::string& target_column, char delimiter = ',');
Dataset parse_csv(std::istream& in, const std::string& target_column, char delimiter = ',',
                  const std::string& name = "csv");

/// Uniform shuffle under `seed`; the first floor(ratio * n) rows train.
SplitIndices split_dataset(std::size_t rows, double train_ratio, std::size_t n_known, std::uint64_t seed);

/// z-scores features with train-split statistics (constant columns get
/// std 1). Labels are left untouched.
StandardizedDataset standardize(const Dataset& dataset, const SplitIndices& split);

enum class SyntheticKind { kLinear, kMlpTeacher };

SyntheticKind parse_synthetic_kind(const std::string& s);

/// Target map + clipping applied to raw synthetic labels, used to match a
/// real dataset's label statistics. With `log_normal` the standardized raw
/// labels become exp(a + b t), a and b chosen so mean and stddev still hold;
/// that gives the right skew of price-like targets.
struct LabelProfile {
  double mean = 0.0;
  double stddev = 1.0;
  double min = -1e300;
  double max = 1e300;
  bool log_normal = false;
};

struct SyntheticSpec {
  std::string name = "synthetic";
  std::size_t rows = 400;
  std::size_t features = 13;
  SyntheticKind kind = SyntheticKind::kLinear;
  double linear_share = 0.5;  // mlp-teacher only
  double noise_std = 0.0;
  std::uint64_t seed = 0;
  std::optional<LabelProfile> profile;
};

/// Linear ground truth y = X w + b with w, b ~ N(0, 1).
struct LinearTeacher {
  std::vector<double> weights;
  double bias = 0.0;
};

/// Ground-truth network: one tanh hidden layer (width 32) plus a linear
/// skip path, y = tanh(X W1 + b1) v + X u. |u| is set so the skip path
/// carries `linear_share` of the variance for N(0, 1) inputs.
struct MlpTeacher {
  Mlp hidden_path;                 // p -> 32 -> 1, tanh
  std::vector<double> skip;        // length p
};

LinearTeacher make_linear_teacher(std::size_t features, std::uint64_t seed);
MlpTeacher make_mlp_teacher(std::size_t features, std::uint64_t seed, double linear_share = 0.5);

/// Features i.i.d. N(0, 1); labels = teacher(x) [+ profile map] + N(0, noise_std^2).
Dataset synthetic_regression(const SyntheticSpec& spec);

/// Synthetic stand-ins sized and ranged like the benchmark regression sets:
/// "boston" (400 x 13, labels 5..50), "energy" (6000 x 4, 420.26..495.76),
/// "california" (16000 x 8, 0.15..5.0).
SyntheticSpec benchmark_like(const std::string& which, std::uint64_t seed);

}  // namespace splitleak
