// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace splitleak {

/// Mean |inferred - truth|.
double alv(std::span<const double> inferred, std::span<const double> truth);

/// Mean |inferred - truth| / |truth|. Throws if any |truth| < 1e-9.
double aer(std::span<const double> inferred, std::span<const double> truth);

struct MetricRow {
  std::string experiment_id;
  std::string dataset;
  std::string config_digest;
  std::uint64_t seed = 0;
  double alv = 0.0;
  double aer = 0.0;
  double model_test_l1 = 0.0;
  double wall_ms = 0.0;
};

inline constexpr const char* kMetricColumns = "experiment_id,dataset,config_digest,seed,alv,aer,model_test_l1,wall_ms";

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // sample std, 0 for a single value
};

Stat mean_std(std::span<const double> values);

struct AggregateRow {
  std::string experiment_id;
  std::string dataset;
  std::size_t count = 0;
  Stat alv;
  Stat aer;
  Stat model_test_l1;
};

/// Groups rows by (experiment_id, dataset); output sorted by key so the
/// result does not depend on row order.
std::vector<AggregateRow> aggregate(std::span<const MetricRow> rows);

void write_rows_csv(std::ostream& out, std::span<const MetricRow> rows, bool include_timing = true);
void write_rows_json(std::ostream& out, std::span<const MetricRow> rows);
std::vector<MetricRow> read_rows_csv(std::istream& in);
void write_summary_csv(std::ostream& out, std::span<const AggregateRow> rows);

/// experiment_id "<base>/<axis>=<v>/.../<method>" split into parts.
struct ExperimentKey {
  std::string base;
  std::map<std::string, std::string> axes;
  std::string method;
};
ExperimentKey parse_experiment_id(const std::string& id);

/// Long-form plot table for one axis: x (axis value), series, y.
/// Each method yields "<method>/aer" and "<method>/model_test_l1" series;
/// remaining axes are appended to the series name.
void write_plot_csv(std::ostream& out, std::span<const AggregateRow> rows, const std::string& axis);

/// Method x axis-value table of mean AER (one column per axis value).
void write_pivot_csv(std::ostream& out, std::span<const AggregateRow> rows, const std::string& axis);

/// Axis names present in the ids, sorted.
std::vector<std::string> axes_in(std::span<const AggregateRow> rows);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace splitleak
