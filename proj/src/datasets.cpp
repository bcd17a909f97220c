// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

#include "splitleak/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "splitleak/random.hpp"

namespace splitleak {

void Dataset::validate() const {
  if (labels.empty()) throw std::invalid_argument("dataset '" + name + "' has no rows");
  if (features.rows() != labels.size() || features.rank() != 2) {
    throw ShapeError("dataset '" + name + "': " + std::to_string(features.rows()) + " feature rows vs " +
                     std::to_string(labels.size()) + " labels");
  }
  for (double y : labels) {
    if (!std::isfinite(y)) throw std::invalid_argument("dataset '" + name + "': non-finite label");
  }
}

std::string Dataset::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  const std::uint64_t r = rows(), c = features.cols();
  feed(&r, sizeof r);
  feed(&c, sizeof c);
  feed(features.data().data(), features.size() * sizeof(double));
  feed(labels.data(), labels.size() * sizeof(double));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  s = s.substr(b, e - b);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return std::string(s);
}

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') quoted = !quoted;
    if (ch == delim && !quoted) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(trim(cur));
  return out;
}

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

Dataset parse_csv(std::istream& in, const std::string& target_column, char delimiter, const std::string& name) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(name + ": empty CSV (no header row)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.size() >= 3 && std::memcmp(line.data(), "\xEF\xBB\xBF", 3) == 0) line.erase(0, 3);
  const auto header = split_line(line, delimiter);
  auto it = std::find(header.begin(), header.end(), target_column);
  if (it == header.end()) {
    std::string cols;
    for (const auto& h : header) cols += (cols.empty() ? "" : ", ") + h;
    throw std::invalid_argument(name + ": target column '" + target_column + "' not found; available columns: " +
                                cols);
  }
  const std::size_t target = static_cast<std::size_t>(it - header.begin());

  Dataset ds;
  ds.name = name;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c != target) ds.feature_names.push_back(header[c]);
  }
  const std::size_t p = ds.feature_names.size();
  std::vector<double> feats;
  std::size_t rowno = 0;
  while (std::getline(in, line)) {
    ++rowno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto cells = split_line(line, delimiter);
    bool ok = cells.size() == header.size();
    std::vector<double> row;
    double label = 0.0;
    for (std::size_t c = 0; ok && c < cells.size(); ++c) {
      auto v = parse_number(cells[c]);
      if (!v) {
        ok = false;
        break;
      }
      if (c == target) {
        label = *v;
      } else {
        row.push_back(*v);
      }
    }
    if (!ok) {
      ds.dropped_rows.push_back(rowno);
      continue;
    }
    feats.insert(feats.end(), row.begin(), row.end());
    ds.labels.push_back(label);
  }
  if (ds.labels.empty()) throw std::runtime_error(name + ": no usable rows (all rows missing or non-numeric)");
  if (p == 0) throw std::invalid_argument(name + ": no feature columns besides the target");
  ds.features = Tensor(Shape{ds.labels.size(), p}, std::move(feats));
  ds.provenance = "csv:" + name + " target=" + target_column + " dropped_rows=" + std::to_string(ds.dropped_rows.size());
  return ds;
}

Dataset load_csv(const std::string& path, const std::string& target_column, char delimiter) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file '" + path + "'");
  return parse_csv(in, target_column, delimiter, path);
}

SplitIndices split_dataset(std::size_t rows, double train_ratio, std::size_t n_known, std::uint64_t seed) {
  if (!(train_ratio > 0.0 && train_ratio <= 1.0)) throw std::invalid_argument("split: ratio must be in (0, 1]");
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "split"));
  std::shuffle(order.begin(), order.end(), rng.engine());
  const auto n_train = static_cast<std::size_t>(std::floor(train_ratio * static_cast<double>(rows) + 1e-9));
  if (n_known > n_train) {
    throw std::invalid_argument("split: n_known=" + std::to_string(n_known) + " exceeds train size " +
                                std::to_string(n_train));
  }
  SplitIndices s;
  s.seed = seed;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::vector<std::size_t> pool = s.train;
  Rng krng(derive_seed(seed, "known"));
  std::shuffle(pool.begin(), pool.end(), krng.engine());
  s.known.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_known));
  return s;
}

StandardizedDataset standardize(const Dataset& dataset, const SplitIndices& split) {
  dataset.validate();
  if (split.train.empty()) throw std::invalid_argument("standardize: empty train split");
  const std::size_t p = dataset.cols();
  StandardizedDataset out{dataset, std::vector<double>(p, 0.0), std::vector<double>(p, 1.0)};
  const double n = static_cast<double>(split.train.size());
  for (std::size_t c = 0; c < p; ++c) {
    double m = 0.0;
    for (auto r : split.train) m += dataset.features.at(r, c);
    m /= n;
    double v = 0.0;
    for (auto r : split.train) v += (dataset.features.at(r, c) - m) * (dataset.features.at(r, c) - m);
    double sd = std::sqrt(v / n);
    if (!(sd > 1e-12)) sd = 1.0;
    out.means[c] = m;
    out.stds[c] = sd;
    for (std::size_t r = 0; r < dataset.rows(); ++r) {
      out.data.features.at(r, c) = (dataset.features.at(r, c) - m) / sd;
    }
  }
  return out;
}

void StandardizedDataset::write_stats_json(std::ostream& out) const {
  nlohmann::json j;
  j["dataset"] = data.name;
  j["feature_names"] = data.feature_names;
  j["means"] = means;
  j["stds"] = stds;
  out << j.dump(2) << '\n';
}

SyntheticKind parse_synthetic_kind(const std::string& s) {
  if (s == "linear") return SyntheticKind::kLinear;
  if (s == "mlp-teacher" || s == "mlp_teacher") return SyntheticKind::kMlpTeacher;
  throw std::invalid_argument("unknown synthetic kind '" + s + "' (expected linear|mlp-teacher)");
}

LinearTeacher make_linear_teacher(std::size_t features, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "linear-teacher"));
  LinearTeacher t;
  for (std::size_t i = 0; i < features; ++i) t.weights.push_back(rng.normal());
  t.bias = rng.normal();
  return t;
}

MlpTeacher make_mlp_teacher(std::size_t features, std::uint64_t seed, double linear_share) {
  if (!(linear_share >= 0.0 && linear_share < 1.0)) {
    throw std::invalid_argument("make_mlp_teacher: linear_share must be in [0, 1)");
  }
  constexpr std::size_t kHidden = 32;
  Rng rng(derive_seed(seed, "mlp-teacher"));
  const double p = static_cast<double>(features);
  Tensor w1 = Tensor::matrix(features, kHidden);
  for (double& v : w1.data()) v = rng.normal(0.0, 1.0 / std::sqrt(p));
  Tensor b1(Shape{kHidden});
  for (double& v : b1.data()) v = rng.normal(0.0, 0.5);
  Tensor w2 = Tensor::matrix(kHidden, 1);
  for (double& v : w2.data()) v = rng.normal(0.0, 1.0 / std::sqrt(static_cast<double>(kHidden)));
  Tensor b2(Shape{1}, 0.0);
  MlpConfig cfg{{features, kHidden, 1}, Activation::kTanh};
  MlpTeacher t{Mlp(cfg, {std::move(w1), std::move(w2)}, {std::move(b1), std::move(b2)}), {}};

  // variance of the hidden path on a fixed reference sample
  constexpr std::size_t kRef = 4096;
  Rng ref_rng(derive_seed(seed, "mlp-teacher-reference"));
  Tensor xr = Tensor::matrix(kRef, features);
  for (double& v : xr.data()) v = ref_rng.normal();
  Tensor h = t.hidden_path.forward(xr);
  double m = 0.0, var = 0.0;
  for (double v : h.data()) m += v;
  m /= static_cast<double>(kRef);
  for (double v : h.data()) var += (v - m) * (v - m);
  var /= static_cast<double>(kRef);

  std::vector<double> u(features);
  double norm2 = 0.0;
  for (double& v : u) {
    v = rng.normal();
    norm2 += v * v;
  }
  // for X ~ N(0, I), Var(X u) = |u|^2
  const double target = std::sqrt(var * linear_share / (1.0 - linear_share));
  for (double& v : u) v *= target / std::sqrt(norm2);
  t.skip = std::move(u);
  return t;
}

Dataset synthetic_regression(const SyntheticSpec& spec) {
  if (spec.rows == 0 || spec.features == 0) throw std::invalid_argument("synthetic_regression: empty shape");
  Rng rng(derive_seed(spec.seed, "synthetic-features"));
  Tensor x = Tensor::matrix(spec.rows, spec.features);
  for (double& v : x.data()) v = rng.normal();

  std::vector<double> y(spec.rows, 0.0);
  if (spec.kind == SyntheticKind::kLinear) {
    const auto t = make_linear_teacher(spec.features, spec.seed);
    for (std::size_t r = 0; r < spec.rows; ++r) {
      double s = t.bias;
      for (std::size_t c = 0; c < spec.features; ++c) s += x.at(r, c) * t.weights[c];
      y[r] = s;
    }
  } else {
    const auto t = make_mlp_teacher(spec.features, spec.seed, spec.linear_share);
    Tensor h = t.hidden_path.forward(x);
    for (std::size_t r = 0; r < spec.rows; ++r) {
      double s = h[r];
      for (std::size_t c = 0; c < spec.features; ++c) s += x.at(r, c) * t.skip[c];
      y[r] = s;
    }
  }

  if (spec.profile) {
    const double n = static_cast<double>(spec.rows);
    const double m = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double v = 0.0;
    for (double t : y) v += (t - m) * (t - m);
    const double sd = std::sqrt(v / n) > 1e-12 ? std::sqrt(v / n) : 1.0;
    const LabelProfile& pr = *spec.profile;
    if (pr.log_normal) {
      if (!(pr.mean > 0.0)) throw std::invalid_argument("synthetic_regression: log-normal profile needs mean > 0");
      const double b2 = std::log1p((pr.stddev / pr.mean) * (pr.stddev / pr.mean));
      const double a = std::log(pr.mean) - 0.5 * b2;
      for (double& t : y) t = std::exp(a + std::sqrt(b2) * (t - m) / sd);
    } else {
      for (double& t : y) t = pr.mean + pr.stddev * (t - m) / sd;
    }
  }
  Rng nrng(derive_seed(spec.seed, "synthetic-noise"));
  if (spec.noise_std > 0.0) {
    for (double& t : y) t += nrng.normal(0.0, spec.noise_std);
  }
  if (spec.profile) {
    for (double& t : y) t = std::clamp(t, spec.profile->min, spec.profile->max);
  }

  Dataset ds;
  ds.name = spec.name;
  ds.features = std::move(x);
  ds.labels = std::move(y);
  for (std::size_t c = 0; c < spec.features; ++c) ds.feature_names.push_back("x" + std::to_string(c));
  std::ostringstream prov;
  prov << "synthetic kind=" << (spec.kind == SyntheticKind::kLinear ? "linear" : "mlp-teacher")
       << " linear_share=" << spec.linear_share << " rows=" << spec.rows << " features=" << spec.features << " noise_std=" << spec.noise_std
       << " seed=" << spec.seed;
  ds.provenance = prov.str();
  return ds;
}

SyntheticSpec benchmark_like(const std::string& which, std::uint64_t seed) {
  SyntheticSpec s;
  s.kind = SyntheticKind::kMlpTeacher;
  s.seed = seed;
  if (which == "boston") {
    s.name = "boston-like";
    s.rows = 400;
    s.features = 13;
    s.noise_std = 0.5;
    s.profile = LabelProfile{22.5, 9.2, 5.0, 50.0, true};
  } else if (which == "energy") {
    s.name = "energy-like";
    s.rows = 6000;
    s.features = 4;
    s.noise_std = 1.0;
    s.profile = LabelProfile{454.37, 17.07, 420.26, 495.76};
  } else if (which == "california") {
    s.name = "california-like";
    s.rows = 16000;
    s.features = 8;
    s.noise_std = 0.05;
    s.profile = LabelProfile{2.07, 1.15, 0.15, 5.0, true};
  } else {
    throw std::invalid_argument("unknown benchmark '" + which + "' (expected boston|energy|california)");
  }
  return s;
}

}  // namespace splitleak
