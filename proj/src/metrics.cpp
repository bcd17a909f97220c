// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

#include "splitleak/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "json.hpp"

namespace splitleak {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.empty() || a.size() != b.size()) {
    throw std::invalid_argument(std::string(what) + ": need equal non-zero lengths (got " +
                                std::to_string(a.size()) + " and " + std::to_string(b.size()) + ")");
  }
}

}  // namespace

double alv(std::span<const double> inferred, std::span<const double> truth) {
  check_pair(inferred, truth, "alv");
  double s = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) s += std::abs(inferred[i] - truth[i]);
  return s / static_cast<double>(truth.size());
}

double aer(std::span<const double> inferred, std::span<const double> truth) {
  check_pair(inferred, truth, "aer");
  double s = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (std::abs(truth[i]) < 1e-9) {
      throw std::domain_error("aer: true label at position " + std::to_string(i) +
                              " is (near) zero; relative error is undefined, use alv instead");
    }
    s += std::abs(inferred[i] - truth[i]) / std::abs(truth[i]);
  }
  return s / static_cast<double>(truth.size());
}

Stat mean_std(std::span<const double> values) {
  Stat s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  for (double v : values) s.mean += v;
  s.mean /= n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

std::vector<AggregateRow> aggregate(std::span<const MetricRow> rows) {
  std::map<std::pair<std::string, std::string>, std::vector<const MetricRow*>> groups;
  for (const auto& r : rows) groups[{r.experiment_id, r.dataset}].push_back(&r);
  std::vector<AggregateRow> out;
  for (auto& [key, members] : groups) {
    // sort members so floating-point sums are order independent
    std::sort(members.begin(), members.end(), [](const MetricRow* a, const MetricRow* b) {
      return std::tie(a->seed, a->alv, a->aer, a->model_test_l1) < std::tie(b->seed, b->alv, b->aer, b->model_test_l1);
    });
    std::vector<double> a, e, l;
    for (const auto* m : members) {
      a.push_back(m->alv);
      e.push_back(m->aer);
      l.push_back(m->model_test_l1);
    }
    out.push_back(AggregateRow{key.first, key.second, members.size(), mean_std(a), mean_std(e), mean_std(l)});
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

void write_rows_csv(std::ostream& out, std::span<const MetricRow> rows, bool include_timing) {
  std::string header = kMetricColumns;
  if (!include_timing) header.resize(header.rfind(','));
  out << header << '\n';
  for (const auto& r : rows) {
    out << r.experiment_id << ',' << r.dataset << ',' << r.config_digest << ',' << r.seed << ','
        << format_double(r.alv) << ',' << format_double(r.aer) << ',' << format_double(r.model_test_l1);
    if (include_timing) out << ',' << format_double(r.wall_ms);
    out << '\n';
  }
}

void write_rows_json(std::ostream& out, std::span<const MetricRow> rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"experiment_id", r.experiment_id},
                   {"dataset", r.dataset},
                   {"config_digest", r.config_digest},
                   {"seed", r.seed},
                   {"alv", r.alv},
                   {"aer", r.aer},
                   {"model_test_l1", r.model_test_l1},
                   {"wall_ms", r.wall_ms}});
  }
  out << arr.dump(2) << '\n';
}

namespace {

double parse_field(const std::string& s, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::runtime_error("results CSV line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

}  // namespace

std::vector<MetricRow> read_rows_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("results CSV is empty");
  if (line.rfind("experiment_id,dataset,config_digest,seed,alv,aer,model_test_l1", 0) != 0) {
    throw std::runtime_error("results CSV header does not match expected columns: " + std::string(kMetricColumns));
  }
  std::vector<MetricRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() < 7) throw std::runtime_error("results CSV line " + std::to_string(lineno) + ": too few columns");
    MetricRow r;
    r.experiment_id = f[0];
    r.dataset = f[1];
    r.config_digest = f[2];
    r.seed = std::stoull(f[3]);
    r.alv = parse_field(f[4], lineno);
    r.aer = parse_field(f[5], lineno);
    r.model_test_l1 = parse_field(f[6], lineno);
    if (f.size() > 7) r.wall_ms = parse_field(f[7], lineno);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_summary_csv(std::ostream& out, std::span<const AggregateRow> rows) {
  out << "experiment_id,dataset,n,alv_mean,alv_std,aer_mean,aer_std,model_test_l1_mean,model_test_l1_std\n";
  for (const auto& r : rows) {
    out << r.experiment_id << ',' << r.dataset << ',' << r.count << ',' << format_double(r.alv.mean) << ','
        << format_double(r.alv.std) << ',' << format_double(r.aer.mean) << ',' << format_double(r.aer.std) << ','
        << format_double(r.model_test_l1.mean) << ',' << format_double(r.model_test_l1.std) << '\n';
  }
}

ExperimentKey parse_experiment_id(const std::string& id) {
  ExperimentKey k;
  std::vector<std::string> parts;
  std::stringstream ss(id);
  std::string p;
  while (std::getline(ss, p, '/')) parts.push_back(p);
  if (parts.empty()) return k;
  k.base = parts.front();
  if (parts.size() >= 2) k.method = parts.back();
  for (std::size_t i = 1; i + 1 < parts.size(); ++i) {
    const auto eq = parts[i].find('=');
    if (eq == std::string::npos) {
      k.base += "/" + parts[i];
    } else {
      k.axes[parts[i].substr(0, eq)] = parts[i].substr(eq + 1);
    }
  }
  return k;
}

std::vector<std::string> axes_in(std::span<const AggregateRow> rows) {
  std::set<std::string> names;
  for (const auto& r : rows) {
    for (const auto& [a, v] : parse_experiment_id(r.experiment_id).axes) names.insert(a);
  }
  return {names.begin(), names.end()};
}

namespace {

// numeric axis values sort numerically, others lexically
bool axis_less(const std::string& a, const std::string& b) {
  double x = 0, y = 0;
  auto ra = std::from_chars(a.data(), a.data() + a.size(), x);
  auto rb = std::from_chars(b.data(), b.data() + b.size(), y);
  const bool na = ra.ec == std::errc() && ra.ptr == a.data() + a.size();
  const bool nb = rb.ec == std::errc() && rb.ptr == b.data() + b.size();
  if (na && nb) return x < y || (x == y && a < b);
  if (na != nb) return na;
  return a < b;
}

std::string series_name(const ExperimentKey& k, const std::string& axis) {
  std::string s = k.method;
  for (const auto& [a, v] : k.axes) {
    if (a != axis) s += "/" + a + "=" + v;
  }
  return s;
}

}  // namespace

void write_plot_csv(std::ostream& out, std::span<const AggregateRow> rows, const std::string& axis) {
  struct Point {
    std::string x, series;
    double y;
  };
  std::vector<Point> pts;
  for (const auto& r : rows) {
    const auto k = parse_experiment_id(r.experiment_id);
    auto it = k.axes.find(axis);
    if (it == k.axes.end()) continue;
    const std::string s = series_name(k, axis);
    pts.push_back({it->second, s + "/aer", r.aer.mean});
    pts.push_back({it->second, s + "/model_test_l1", r.model_test_l1.mean});
  }
  std::stable_sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
    if (a.series != b.series) return a.series < b.series;
    return axis_less(a.x, b.x);
  });
  out << "x,series,y\n";
  for (const auto& p : pts) out << p.x << ',' << p.series << ',' << format_double(p.y) << '\n';
}

void write_pivot_csv(std::ostream& out, std::span<const AggregateRow> rows, const std::string& axis) {
  std::vector<std::string> xs;
  std::map<std::string, std::map<std::string, double>> table;
  for (const auto& r : rows) {
    const auto k = parse_experiment_id(r.experiment_id);
    auto it = k.axes.find(axis);
    if (it == k.axes.end()) continue;
    if (std::find(xs.begin(), xs.end(), it->second) == xs.end()) xs.push_back(it->second);
    table[series_name(k, axis)][it->second] = r.aer.mean;
  }
  std::sort(xs.begin(), xs.end(), axis_less);
  out << "series";
  for (const auto& x : xs) out << ',' << axis << '=' << x;
  out << '\n';
  for (const auto& [s, cells] : table) {
    out << s;
    for (const auto& x : xs) {
      out << ',';
      if (auto c = cells.find(x); c != cells.end()) out << format_double(c->second);
    }
    out << '\n';
  }
}

}  // namespace splitleak
