// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

#include "splitleak/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "splitleak/defenses.hpp"
#include "splitleak/random.hpp"
#include "toml.hpp"

namespace splitleak {

namespace fs = std::filesystem;

namespace {

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string s;
  for (std::size_t i = 0; i < parts.size(); ++i) s += (i ? sep : "") + parts[i];
  return s;
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::invalid_argument("invalid experiment config:\n  - " + join(problems, "\n  - ")),
      problems_(std::move(problems)) {}

std::string_view to_string(Regularizers r) {
  switch (r) {
    case Regularizers::kFull:
      return "full";
    case Regularizers::kKnowledgeOnly:
      return "knowledge-only";
    case Regularizers::kNone:
      return "none";
  }
  return "full";
}

Regularizers parse_regularizers(std::string_view s) {
  if (s == "full") return Regularizers::kFull;
  if (s == "knowledge-only") return Regularizers::kKnowledgeOnly;
  if (s == "none") return Regularizers::kNone;
  throw std::invalid_argument("unknown regularizers '" + std::string(s) + "' (expected full|knowledge-only|none)");
}

std::size_t max_known(const ExperimentConfig& c) {
  std::size_t k = c.known;
  for (auto v : c.sweep.known) k = std::max(k, v);
  return k;
}

void ExperimentConfig::validate() const {
  std::vector<std::string> p;
  auto check = [&p](bool ok, const std::string& msg) {
    if (!ok) p.push_back(msg);
  };
  check(!name.empty() && name.find_first_of("/,") == std::string::npos, "name must be non-empty without '/' or ','");
  check(repeats >= 1, "repeats must be >= 1");
  check(jobs >= 1, "jobs must be >= 1");
  check(dataset.train_ratio > 0.0 && dataset.train_ratio < 1.0, "dataset.train_ratio must be in (0, 1)");
  check(dataset.delimiter.size() == 1, "dataset.delimiter must be a single character");
  if (!dataset.path.empty()) {
    check(!dataset.target.empty(), "dataset.target is required with dataset.path");
  } else if (!dataset.benchmark.empty()) {
    check(dataset.benchmark == "boston" || dataset.benchmark == "energy" || dataset.benchmark == "california",
          "dataset.benchmark must be boston, energy or california");
  } else {
    check(dataset.synthetic.rows >= 2 && dataset.synthetic.features >= 1,
          "dataset.rows must be >= 2 and dataset.features >= 1");
  }
  check(dataset.synthetic.noise_std >= 0.0, "dataset.noise_std must be >= 0");
  check(dataset.synthetic.linear_share >= 0.0 && dataset.synthetic.linear_share < 1.0,
        "dataset.linear_share must be in [0, 1)");
  check(model.user_depth >= 1 && model.label_depth >= 1, "model depths must be >= 1");
  check(model.hidden >= 1 && model.cut >= 1, "model.hidden and model.cut must be >= 1");
  check(train.epochs >= 1, "train.epochs must be >= 1");
  try {
    train.validate();
  } catch (const std::exception& e) {
    p.push_back(e.what());
  }
  check(surrogate_depth >= 1 && surrogate_hidden >= 1, "attack.surrogate_depth and surrogate_hidden must be >= 1");
  try {
    AttackConfig a = attack;
    a.surrogate = MlpConfig::fc(std::max<std::size_t>(surrogate_depth, 1), std::max<std::size_t>(model.cut, 1),
                                std::max<std::size_t>(surrogate_hidden, 1), 1, model.activation);
    a.validate();
  } catch (const std::exception& e) {
    p.push_back(e.what());
  }
  check(attack_batches >= 1, "attack.batches must be >= 1");
  check(triplet_weight >= 0.0, "attack.triplet_weight must be >= 0");
  if (target_epoch) check(*target_epoch < train.epochs, "attack.target_epoch must be < train.epochs");
  check(!baseline || baseline_config.batch_size >= 1, "baseline.batch_size must be >= 1");
  check(baseline_config.optimizer.lr > 0.0, "baseline.lr must be > 0");
  if (defense.label_noise) check(defense.epsilon > 0.0, "defense.epsilon must be > 0 when label noise is enabled");
  check(defense.sensitivity >= 0.0, "defense.sensitivity must be >= 0 (0 = max label)");
  for (double e : sweep.epsilon) check(e > 0.0, "sweep.epsilon values must be > 0");
  for (auto d : sweep.surrogate_depth) check(d >= 1, "sweep.surrogate_depth values must be >= 1");
  for (const auto& r : sweep.regularizers) {
    try {
      parse_regularizers(r);
    } catch (const std::exception& e) {
      p.push_back(std::string("sweep.regularizers: ") + e.what());
    }
  }
  if (!p.empty()) throw ConfigError(std::move(p));
}

// ---------------------------------------------------------------------------
// TOML

namespace {

void apply_override(toml::table& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError({"--set expects key=value, got '" + assignment + "'"});
  }
  std::string key = assignment.substr(0, eq);
  std::string value = assignment.substr(eq + 1);
  auto trim = [](std::string& s) {
    s.erase(0, s.find_first_not_of(" \t"));
    s.erase(s.find_last_not_of(" \t") + 1);
  };
  trim(key);
  trim(value);
  std::vector<std::string> path;
  std::stringstream ss(key);
  for (std::string part; std::getline(ss, part, '.');) path.push_back(part);
  toml::table* t = &root;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    toml::table* sub = (*t)[path[i]].as_table();
    if (!sub) {
      t->insert_or_assign(path[i], toml::table{});
      sub = (*t)[path[i]].as_table();
    }
    t = sub;
  }
  try {
    toml::table parsed = toml::parse("v = " + value);
    t->insert_or_assign(path.back(), *parsed.get("v"));
  } catch (const toml::parse_error&) {
    t->insert_or_assign(path.back(), value);
  }
}

class Reader {
 public:
  explicit Reader(const toml::table& root) : root_(root) {}

  template <class T>
  void number(std::string_view path, T& out) {
    seen_.insert(std::string(path));
    auto node = toml::at_path(root_, path);
    if (!node) return;
    if constexpr (std::is_floating_point_v<T>) {
      if (auto v = node.value<double>()) {
        out = *v;
        return;
      }
      problems_.push_back(std::string(path) + ": expected a number");
    } else {
      auto v = node.value<std::int64_t>();
      if (!v || *v < 0) {
        problems_.push_back(std::string(path) + ": expected a non-negative integer");
        return;
      }
      out = static_cast<T>(*v);
    }
  }

  void boolean(std::string_view path, bool& out) {
    seen_.insert(std::string(path));
    auto node = toml::at_path(root_, path);
    if (!node) return;
    if (auto v = node.value<bool>()) {
      out = *v;
    } else {
      problems_.push_back(std::string(path) + ": expected true or false");
    }
  }

  void string(std::string_view path, std::string& out) {
    seen_.insert(std::string(path));
    auto node = toml::at_path(root_, path);
    if (!node) return;
    if (auto v = node.value<std::string>()) {
      out = *v;
    } else {
      problems_.push_back(std::string(path) + ": expected a string");
    }
  }

  template <class T, class F>
  void parsed(std::string_view path, T& out, F parse) {
    std::string s;
    bool present = static_cast<bool>(toml::at_path(root_, path));
    string(path, s);
    if (!present || s.empty()) return;
    try {
      out = parse(s);
    } catch (const std::exception& e) {
      problems_.push_back(std::string(path) + ": " + e.what());
    }
  }

  template <class T>
  void list(std::string_view path, std::vector<T>& out) {
    seen_.insert(std::string(path));
    auto node = toml::at_path(root_, path);
    if (!node) return;
    const toml::array* arr = node.as_array();
    if (!arr) {
      problems_.push_back(std::string(path) + ": expected an array");
      return;
    }
    out.clear();
    for (const auto& el : *arr) {
      if constexpr (std::is_same_v<T, bool>) {
        if (auto v = el.value<bool>()) {
          out.push_back(*v);
          continue;
        }
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (auto v = el.value<std::string>()) {
          out.push_back(*v);
          continue;
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (auto v = el.value<double>()) {
          out.push_back(*v);
          continue;
        }
      } else {
        if (auto v = el.value<std::int64_t>(); v && *v >= 0) {
          out.push_back(static_cast<T>(*v));
          continue;
        }
      }
      problems_.push_back(std::string(path) + ": array element of the wrong type");
      return;
    }
  }

  void mark_seen(std::string_view path) { seen_.insert(std::string(path)); }
  void report_unknown_keys() { walk(root_, ""); }
  std::vector<std::string>& problems() { return problems_; }

 private:
  void walk(const toml::table& t, const std::string& prefix) {
    for (const auto& [k, v] : t) {
      const std::string key = prefix.empty() ? std::string(k.str()) : prefix + "." + std::string(k.str());
      if (const auto* sub = v.as_table()) {
        walk(*sub, key);
      } else if (!seen_.contains(key)) {
        problems_.push_back("unknown key '" + key + "'");
      }
    }
  }

  const toml::table& root_;
  std::set<std::string> seen_;
  std::vector<std::string> problems_;
};

}  // namespace

ExperimentConfig parse_config(const std::string& toml_text, const std::vector<std::string>& overrides) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "TOML parse error: " << e.description() << " at line " << e.source().begin.line;
    throw ConfigError({os.str()});
  }
  for (const auto& o : overrides) apply_override(root, o);

  ExperimentConfig c;
  Reader r(root);
  r.string("name", c.name);
  r.number("seed", c.seed);
  r.number("repeats", c.repeats);
  r.string("out", c.out);
  r.number("jobs", c.jobs);
  r.boolean("save_logs", c.save_logs);

  r.string("dataset.path", c.dataset.path);
  r.string("dataset.target", c.dataset.target);
  r.string("dataset.delimiter", c.dataset.delimiter);
  r.string("dataset.benchmark", c.dataset.benchmark);
  if (!c.dataset.benchmark.empty() && c.dataset.path.empty()) {
    try {
      c.dataset.synthetic = benchmark_like(c.dataset.benchmark, 0);
    } catch (const std::exception& e) {
      r.problems().push_back(std::string("dataset.benchmark: ") + e.what());
    }
  }
  r.parsed("dataset.kind", c.dataset.synthetic.kind, parse_synthetic_kind);
  r.number("dataset.rows", c.dataset.synthetic.rows);
  r.number("dataset.features", c.dataset.synthetic.features);
  r.number("dataset.noise_std", c.dataset.synthetic.noise_std);
  r.number("dataset.linear_share", c.dataset.synthetic.linear_share);
  r.number("dataset.train_ratio", c.dataset.train_ratio);
  if (toml::at_path(root, "dataset.seed")) {
    std::uint64_t s = 0;
    r.number("dataset.seed", s);
    c.dataset.seed = s;
  }
  r.mark_seen("dataset.seed");

  r.parsed("model.activation", c.model.activation, parse_activation);
  r.number("model.user_depth", c.model.user_depth);
  r.number("model.label_depth", c.model.label_depth);
  r.number("model.hidden", c.model.hidden);
  r.number("model.cut", c.model.cut);

  r.number("train.epochs", c.train.epochs);
  r.number("train.batch_size", c.train.batch_size);
  r.parsed("train.loss", c.train.training_loss, parse_loss_kind);
  r.number("train.lr", c.train.optimizer.lr);

  r.number("attack.lambda1", c.attack.lambda1);
  r.number("attack.lambda2", c.attack.lambda2);
  r.number("attack.beta", c.attack.beta);
  r.number("attack.lr", c.attack.optimizer.lr);
  r.number("attack.iterations", c.attack.iterations);
  r.parsed("attack.label_space", c.attack.label_space, parse_label_space);
  r.parsed("attack.sign_mode", c.attack.sign_mode, parse_sign_mode);
  r.boolean("attack.margin", c.attack.margin);
  r.number("attack.surrogate_depth", c.surrogate_depth);
  r.number("attack.surrogate_hidden", c.surrogate_hidden);
  r.number("attack.known", c.known);
  r.number("attack.batches", c.attack_batches);
  r.boolean("attack.triplet", c.triplet);
  r.number("attack.triplet_weight", c.triplet_weight);
  r.parsed("attack.regularizers", c.regularizers, parse_regularizers);
  r.mark_seen("attack.target_epoch");
  if (auto node = toml::at_path(root, "attack.target_epoch")) {
    if (auto v = node.value<std::int64_t>()) {
      if (*v >= 0) c.target_epoch = static_cast<std::size_t>(*v);
    } else {
      r.problems().push_back("attack.target_epoch: expected an integer (-1 = last epoch)");
    }
  }

  r.boolean("baseline.enabled", c.baseline);
  r.number("baseline.epochs", c.baseline_config.epochs);
  r.number("baseline.batch_size", c.baseline_config.batch_size);
  r.number("baseline.lr", c.baseline_config.optimizer.lr);

  r.boolean("defense.label_noise", c.defense.label_noise);
  r.number("defense.epsilon", c.defense.epsilon);
  r.number("defense.sensitivity", c.defense.sensitivity);
  r.boolean("defense.gradient_noise", c.defense.gradient_noise);

  r.list("sweep.known", c.sweep.known);
  r.list("sweep.epoch", c.sweep.epoch);
  r.list("sweep.surrogate_depth", c.sweep.surrogate_depth);
  r.list("sweep.epsilon", c.sweep.epsilon);
  r.list("sweep.regularizers", c.sweep.regularizers);
  r.list("sweep.triplet", c.sweep.triplet);
  r.list("sweep.gradient_noise", c.sweep.gradient_noise);

  r.report_unknown_keys();
  if (!r.problems().empty()) throw ConfigError(r.problems());
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config file '" + path + "'"});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

std::string to_toml(const ExperimentConfig& c) {
  auto u = [](std::size_t v) { return static_cast<std::int64_t>(v); };
  toml::table dataset{{"path", c.dataset.path},
                      {"target", c.dataset.target},
                      {"delimiter", c.dataset.delimiter},
                      {"benchmark", c.dataset.benchmark},
                      {"kind", c.dataset.synthetic.kind == SyntheticKind::kLinear ? "linear" : "mlp-teacher"},
                      {"rows", u(c.dataset.synthetic.rows)},
                      {"features", u(c.dataset.synthetic.features)},
                      {"noise_std", c.dataset.synthetic.noise_std},
                      {"linear_share", c.dataset.synthetic.linear_share},
                      {"train_ratio", c.dataset.train_ratio}};
  if (c.dataset.seed) dataset.insert_or_assign("seed", static_cast<std::int64_t>(*c.dataset.seed));
  toml::table model{{"activation", std::string(to_string(c.model.activation))},
                    {"user_depth", u(c.model.user_depth)},
                    {"label_depth", u(c.model.label_depth)},
                    {"hidden", u(c.model.hidden)},
                    {"cut", u(c.model.cut)}};
  toml::table train{{"epochs", u(c.train.epochs)},
                    {"batch_size", u(c.train.batch_size)},
                    {"loss", std::string(to_string(c.train.training_loss))},
                    {"lr", c.train.optimizer.lr}};
  toml::table attack{{"lambda1", c.attack.lambda1},
                     {"lambda2", c.attack.lambda2},
                     {"beta", c.attack.beta},
                     {"lr", c.attack.optimizer.lr},
                     {"iterations", u(c.attack.iterations)},
                     {"label_space", std::string(to_string(c.attack.label_space))},
                     {"sign_mode", std::string(to_string(c.attack.sign_mode))},
                     {"margin", c.attack.margin},
                     {"surrogate_depth", u(c.surrogate_depth)},
                     {"surrogate_hidden", u(c.surrogate_hidden)},
                     {"known", u(c.known)},
                     {"batches", u(c.attack_batches)},
                     {"triplet", c.triplet},
                     {"triplet_weight", c.triplet_weight},
                     {"regularizers", std::string(to_string(c.regularizers))},
                     {"target_epoch", c.target_epoch ? u(*c.target_epoch) : std::int64_t{-1}}};
  toml::table baseline{{"enabled", c.baseline},
                       {"epochs", u(c.baseline_config.epochs)},
                       {"batch_size", u(c.baseline_config.batch_size)},
                       {"lr", c.baseline_config.optimizer.lr}};
  toml::table defense{{"label_noise", c.defense.label_noise},
                      {"epsilon", c.defense.epsilon},
                      {"sensitivity", c.defense.sensitivity},
                      {"gradient_noise", c.defense.gradient_noise}};
  toml::table sweep;
  auto put = [&sweep](const char* key, const auto& values) {
    if (values.empty()) return;
    toml::array arr;
    for (const auto& v : values) {
      if constexpr (std::is_same_v<std::decay_t<decltype(v)>, std::size_t>) {
        arr.push_back(static_cast<std::int64_t>(v));
      } else {
        arr.push_back(v);
      }
    }
    sweep.insert_or_assign(key, std::move(arr));
  };
  put("known", c.sweep.known);
  put("epoch", c.sweep.epoch);
  put("surrogate_depth", c.sweep.surrogate_depth);
  put("epsilon", c.sweep.epsilon);
  put("regularizers", c.sweep.regularizers);
  if (!c.sweep.triplet.empty()) {
    toml::array arr;
    for (bool b : c.sweep.triplet) arr.push_back(b);
    sweep.insert_or_assign("triplet", std::move(arr));
  }
  if (!c.sweep.gradient_noise.empty()) {
    toml::array arr;
    for (bool b : c.sweep.gradient_noise) arr.push_back(b);
    sweep.insert_or_assign("gradient_noise", std::move(arr));
  }

  toml::table root{{"name", c.name},
                   {"seed", static_cast<std::int64_t>(c.seed)},
                   {"repeats", u(c.repeats)},
                   {"out", c.out},
                   {"jobs", u(c.jobs)},
                   {"save_logs", c.save_logs},
                   {"dataset", std::move(dataset)},
                   {"model", std::move(model)},
                   {"train", std::move(train)},
                   {"attack", std::move(attack)},
                   {"baseline", std::move(baseline)},
                   {"defense", std::move(defense)},
                   {"sweep", std::move(sweep)}};
  std::ostringstream os;
  os << root << '\n';
  return os.str();
}

std::string config_digest(const ExperimentConfig& c) {
  // runtime-only settings do not change results
  ExperimentConfig d = c;
  d.out.clear();
  d.jobs = 1;
  d.save_logs = false;
  return hex64(fnv1a(to_toml(d))).substr(0, 12);
}

// ---------------------------------------------------------------------------
// Grid

std::string SweepPoint::id_prefix() const {
  std::string s = config.name;
  for (const auto& [a, v] : axes) s += "/" + a + "=" + v;
  return s;
}

namespace {

std::string axis_value(double v) { return format_double(v); }

}  // namespace

std::vector<SweepPoint> expand_sweep(const ExperimentConfig& config) {
  std::vector<SweepPoint> points{SweepPoint{config, {}}};
  auto extend = [&points](const std::string& axis, std::size_t count, auto apply) {
    if (count == 0) return;
    std::vector<SweepPoint> next;
    for (const auto& p : points) {
      for (std::size_t i = 0; i < count; ++i) {
        SweepPoint q = p;
        q.axes.emplace_back(axis, apply(q.config, i));
        next.push_back(std::move(q));
      }
    }
    points = std::move(next);
  };
  const auto& s = config.sweep;
  extend("known", s.known.size(), [&](ExperimentConfig& c, std::size_t i) {
    c.known = s.known[i];
    return std::to_string(s.known[i]);
  });
  if (!s.epoch.empty()) {
    const std::size_t last = *std::max_element(s.epoch.begin(), s.epoch.end());
    extend("epoch", s.epoch.size(), [&](ExperimentConfig& c, std::size_t i) {
      c.train.epochs = last + 1;
      c.target_epoch = s.epoch[i];
      return std::to_string(s.epoch[i]);
    });
  }
  extend("surrogate", s.surrogate_depth.size(), [&](ExperimentConfig& c, std::size_t i) {
    c.surrogate_depth = s.surrogate_depth[i];
    return "fc" + std::to_string(s.surrogate_depth[i]);
  });
  extend("epsilon", s.epsilon.size(), [&](ExperimentConfig& c, std::size_t i) {
    c.defense.label_noise = true;
    c.defense.epsilon = s.epsilon[i];
    return axis_value(s.epsilon[i]);
  });
  extend("regularizers", s.regularizers.size(), [&](ExperimentConfig& c, std::size_t i) {
    c.regularizers = parse_regularizers(s.regularizers[i]);
    return s.regularizers[i];
  });
  extend("triplet", s.triplet.size(), [&](ExperimentConfig& c, std::size_t i) {
    c.triplet = s.triplet[i];
    return std::string(s.triplet[i] ? "on" : "off");
  });
  extend("gradient_noise", s.gradient_noise.size(), [&](ExperimentConfig& c, std::size_t i) {
    c.defense.gradient_noise = s.gradient_noise[i];
    return std::string(s.gradient_noise[i] ? "on" : "off");
  });
  return points;
}

Dataset build_dataset(const ExperimentConfig& c) {
  if (!c.dataset.path.empty()) {
    return load_csv(c.dataset.path, c.dataset.target, c.dataset.delimiter.empty() ? ',' : c.dataset.delimiter[0]);
  }
  SyntheticSpec spec = c.dataset.synthetic;
  if (!c.dataset.benchmark.empty()) {
    SyntheticSpec preset = benchmark_like(c.dataset.benchmark, 0);
    spec.name = preset.name;
    spec.profile = preset.profile;
  }
  spec.seed = c.dataset.seed ? *c.dataset.seed : derive_seed(c.seed, "dataset");
  return synthetic_regression(spec);
}

AttackConfig effective_attack(const ExperimentConfig& c) {
  AttackConfig a = c.attack;
  a.surrogate = MlpConfig::fc(c.surrogate_depth, c.model.cut, c.surrogate_hidden, 1, c.model.activation);
  a.loss = c.train.training_loss;
  a.batch_size = c.train.batch_size;
  if (c.regularizers == Regularizers::kKnowledgeOnly) {
    a.lambda1 = 0.0;
  } else if (c.regularizers == Regularizers::kNone) {
    a.lambda1 = 0.0;
    a.lambda2 = 0.0;
  }
  a.lambda3 = c.triplet ? c.triplet_weight : 0.0;
  return a;
}

BaselineConfig effective_baseline(const ExperimentConfig& c) {
  BaselineConfig b = c.baseline_config;
  b.surrogate = MlpConfig::fc(c.surrogate_depth, c.model.cut, c.surrogate_hidden, 1, c.model.activation);
  return b;
}

std::uint64_t repeat_seed(std::uint64_t master, std::size_t repeat) { return derive_seed(master, "repeat", repeat); }

TrainedTarget train_target(const ExperimentConfig& c, const Dataset& dataset, std::uint64_t seed) {
  dataset.validate();
  SplitIndices split = split_dataset(dataset.rows(), c.dataset.train_ratio, max_known(c), derive_seed(seed, "split"));
  StandardizedDataset data = standardize(dataset, split);

  std::vector<double> labels = dataset.labels;
  if (c.defense.label_noise) {
    double s = c.defense.sensitivity;
    if (s <= 0.0) {
      for (double y : dataset.labels) s = std::max(s, std::abs(y));
    }
    labels = noise_labels(dataset.labels, LabelNoiseConfig{c.defense.epsilon, s, derive_seed(seed, "label-noise")});
  }

  Rng init(derive_seed(seed, "model-init"));
  const std::size_t p = dataset.cols();
  Mlp user(MlpConfig::fc(c.model.user_depth, p, c.model.hidden, c.model.cut, c.model.activation), init);
  Mlp label(MlpConfig::fc(c.model.label_depth, c.model.cut, c.model.hidden, 1, c.model.activation), init);

  TrainConfig tc = c.train;
  tc.seed = derive_seed(seed, "train");
  GradientTransform release;
  if (c.defense.gradient_noise) release = make_gradient_noise_transform({derive_seed(seed, "gradient-noise")});

  TrainData td{data.data.features, labels, dataset.labels, split.train, split.test};
  TrainResult result = train_composite(CompositeModel{std::move(user), std::move(label)}, td, tc, release);
  return TrainedTarget{std::move(split), std::move(data), std::move(labels), std::move(result)};
}

namespace {

std::size_t attacked_epoch(const ExperimentConfig& c) { return c.target_epoch ? *c.target_epoch : c.train.epochs - 1; }

}  // namespace

std::vector<std::size_t> select_attack_records(const ExperimentConfig& c, const TrainedTarget& target,
                                               std::uint64_t seed) {
  auto candidates = candidate_records(target.result.log, attacked_epoch(c), target.split.known);
  if (candidates.empty()) {
    throw std::runtime_error("no recorded batch in epoch " + std::to_string(attacked_epoch(c)) +
                             " is free of known samples");
  }
  Rng rng(derive_seed(seed, "attack-groups"));
  std::shuffle(candidates.begin(), candidates.end(), rng.engine());
  candidates.resize(std::min(candidates.size(), c.attack_batches));
  return candidates;
}

MethodRun run_method(const ExperimentConfig& c, const TrainedTarget& target, const std::string& method,
                     std::uint64_t seed, const std::string& experiment_id) {
  if (method != "attack" && method != "baseline") throw std::invalid_argument("unknown method '" + method + "'");
  const auto& labels = target.data.data.labels;
  std::vector<std::size_t> known(target.split.known.begin(),
                                 target.split.known.begin() + static_cast<std::ptrdiff_t>(c.known));
  std::vector<double> known_labels;
  for (auto i : known) known_labels.push_back(labels[i]);

  MethodRun run;
  std::vector<double> inferred, truth;
  double wall = 0.0;
  const auto records = select_attack_records(c, target, seed);
  for (std::size_t gi = 0; gi < records.size(); ++gi) {
    AttackProblem problem = assemble_problem(target.result.log, records[gi], known, known_labels);
    std::vector<double> t;
    for (auto i : problem.sample_indices) t.push_back(labels[i]);
    AttackResult r;
    if (method == "attack") {
      AttackConfig a = effective_attack(c);
      a.known_indices = known;
      a.seed = derive_seed(seed, "attack", gi);
      r = run_attack(problem, a, t);
    } else {
      BaselineConfig b = effective_baseline(c);
      b.seed = derive_seed(seed, "baseline", gi);
      r = run_baseline(problem, b, t);
    }
    inferred.insert(inferred.end(), r.inferred_labels.begin(), r.inferred_labels.end());
    truth.insert(truth.end(), t.begin(), t.end());
    wall += r.wall_ms;
    run.groups.push_back(std::move(r));
  }
  const auto& l1 = target.result.test_l1;
  run.row = MetricRow{experiment_id,
                      target.data.data.name,
                      config_digest(c),
                      seed,
                      alv(inferred, truth),
                      aer(inferred, truth),
                      l1.empty() ? 0.0 : l1[std::min(attacked_epoch(c), l1.size() - 1)],
                      wall};
  return run;
}

// ---------------------------------------------------------------------------
// Runner

namespace {

std::string train_key(const ExperimentConfig& c, const std::string& dataset_digest, std::uint64_t seed) {
  std::ostringstream os;
  os << dataset_digest << '|' << to_string(c.model.activation) << ',' << c.model.user_depth << ','
     << c.model.label_depth << ',' << c.model.hidden << ',' << c.model.cut << '|' << c.train.epochs << ','
     << c.train.batch_size << ',' << to_string(c.train.training_loss) << ',' << format_double(c.train.optimizer.lr)
     << '|' << c.dataset.train_ratio << ',' << max_known(c) << '|' << c.defense.label_noise << ','
     << format_double(c.defense.epsilon) << ',' << format_double(c.defense.sensitivity) << ','
     << c.defense.gradient_noise << '|' << seed;
  return os.str();
}

class TargetCache {
 public:
  using Ptr = std::shared_ptr<const TrainedTarget>;

  Ptr get(const std::string& key, const std::function<TrainedTarget()>& make) {
    std::shared_future<Ptr> fut;
    std::promise<Ptr> promise;
    bool owner = false;
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = entries_.find(key);
      if (it == entries_.end()) {
        fut = promise.get_future().share();
        entries_.emplace(key, fut);
        owner = true;
      } else {
        fut = it->second;
      }
    }
    if (owner) {
      try {
        promise.set_value(std::make_shared<const TrainedTarget>(make()));
      } catch (...) {
        promise.set_exception(std::current_exception());
      }
    }
    return fut.get();
  }

 private:
  std::mutex mu_;
  std::map<std::string, std::shared_future<Ptr>> entries_;
};

struct TaskResult {
  std::vector<MetricRow> rows;
  std::vector<Failure> failures;
  std::optional<std::pair<std::string, GradientLog>> log;
};

}  // namespace

ExperimentOutput run_experiment(const ExperimentConfig& config, const ProgressFn& progress) {
  config.validate();
  const Dataset dataset = build_dataset(config);
  dataset.validate();
  const std::string digest = dataset.digest();
  const auto points = expand_sweep(config);
  for (const auto& p : points) p.config.validate();

  const std::size_t tasks = points.size() * config.repeats;
  std::vector<TaskResult> results(tasks);
  TargetCache cache;
  std::mutex progress_mu;
  std::atomic<std::size_t> next{0}, done{0};
  std::set<std::string> logged;
  std::mutex logged_mu;

  auto work = [&]() {
    for (std::size_t t = next++; t < tasks; t = next++) {
      const auto& point = points[t / config.repeats];
      const std::size_t rep = t % config.repeats;
      const std::uint64_t seed = repeat_seed(config.seed, rep);
      const std::string prefix = point.id_prefix();
      TaskResult& out = results[t];
      std::vector<std::string> methods{"attack"};
      if (point.config.baseline) methods.push_back("baseline");
      TargetCache::Ptr target;
      const std::string key = train_key(point.config, digest, seed);
      try {
        target = cache.get(key, [&] { return train_target(point.config, dataset, seed); });
      } catch (const std::exception& e) {
        for (const auto& m : methods) out.failures.push_back({prefix + "/" + m, seed, rep, e.what()});
      }
      if (target) {
        if (config.save_logs) {
          std::lock_guard<std::mutex> lock(logged_mu);
          if (logged.insert(key).second) {
            out.log.emplace("train-" + hex64(fnv1a(key)).substr(0, 12) + "-r" + std::to_string(rep),
                            target->result.log);
          }
        }
        for (const auto& m : methods) {
          try {
            out.rows.push_back(run_method(point.config, *target, m, seed, prefix + "/" + m).row);
          } catch (const std::exception& e) {
            out.failures.push_back({prefix + "/" + m, seed, rep, e.what()});
          }
        }
      }
      const std::size_t finished = ++done;
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mu);
        std::ostringstream os;
        os << "[" << finished << "/" << tasks << "] " << prefix << " repeat " << rep;
        for (const auto& r : out.rows) os << "  " << parse_experiment_id(r.experiment_id).method << " AER " << r.aer;
        if (!out.failures.empty()) os << "  (" << out.failures.size() << " failed)";
        progress(os.str());
      }
    }
  };

  const std::size_t workers = std::min(config.jobs, std::max<std::size_t>(tasks, 1));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  ExperimentOutput output;
  for (auto& r : results) {
    for (auto& row : r.rows) output.rows.push_back(std::move(row));
    for (auto& f : r.failures) output.failures.push_back(std::move(f));
    if (r.log) output.logs.push_back(std::move(*r.log));
  }
  return output;
}

void write_report(const std::string& dir, const std::vector<MetricRow>& rows) {
  fs::create_directories(dir);
  const auto agg = aggregate(rows);
  {
    std::ofstream out(fs::path(dir) / "summary.csv");
    write_summary_csv(out, agg);
  }
  const auto axes = axes_in(agg);
  if (!axes.empty()) fs::create_directories(fs::path(dir) / "plotdata");
  for (const auto& axis : axes) {
    std::ofstream plot(fs::path(dir) / "plotdata" / (axis + ".csv"));
    write_plot_csv(plot, agg, axis);
    std::ofstream pivot(fs::path(dir) / ("pivot_" + axis + ".csv"));
    write_pivot_csv(pivot, agg, axis);
  }
}

void write_outputs(const std::string& dir, const ExperimentConfig& config, const ExperimentOutput& output) {
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "results.csv");
    write_rows_csv(out, output.rows);
  }
  {
    std::ofstream out(fs::path(dir) / "results.json");
    write_rows_json(out, output.rows);
  }
  {
    std::ofstream out(fs::path(dir) / "effective-config.toml");
    out << to_toml(config);
  }
  {
    nlohmann::json f = nlohmann::json::array();
    for (const auto& x : output.failures) {
      f.push_back({{"experiment_id", x.experiment_id}, {"seed", x.seed}, {"repeat", x.repeat}, {"error", x.error}});
    }
    std::ofstream out(fs::path(dir) / "failures.json");
    out << f.dump(2) << '\n';
  }
  if (!output.logs.empty()) {
    fs::create_directories(fs::path(dir) / "logs");
    for (const auto& [name, log] : output.logs) log.save((fs::path(dir) / "logs" / (name + ".jsonl")).string());
  }
  write_report(dir, output.rows);
}

// ---------------------------------------------------------------------------
// Model files

namespace {

nlohmann::json mlp_to_json(const Mlp& m) {
  nlohmann::json j;
  j["layer_widths"] = m.config().layer_widths;
  j["activation"] = std::string(to_string(m.config().activation));
  j["weights"] = nlohmann::json::array();
  j["biases"] = nlohmann::json::array();
  for (std::size_t l = 0; l < m.weights().size(); ++l) {
    j["weights"].push_back(m.weights()[l].values());
    j["biases"].push_back(m.biases()[l].values());
  }
  return j;
}

Mlp mlp_from_json(const nlohmann::json& j) {
  MlpConfig cfg{j.at("layer_widths").get<std::vector<std::size_t>>(),
                parse_activation(j.at("activation").get<std::string>())};
  cfg.validate();
  std::vector<Tensor> w, b;
  for (std::size_t l = 0; l < cfg.layers(); ++l) {
    w.emplace_back(Shape{cfg.layer_widths[l], cfg.layer_widths[l + 1]},
                   j.at("weights").at(l).get<std::vector<double>>());
    b.emplace_back(Shape{cfg.layer_widths[l + 1]}, j.at("biases").at(l).get<std::vector<double>>());
  }
  return Mlp(cfg, std::move(w), std::move(b));
}

}  // namespace

void save_model(const std::string& path, const CompositeModel& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model to " + path);
  out << nlohmann::json{{"user", mlp_to_json(model.user)}, {"label", mlp_to_json(model.label)}}.dump() << '\n';
}

CompositeModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  CompositeModel m{mlp_from_json(j.at("user")), mlp_from_json(j.at("label"))};
  m.validate();
  return m;
}

}  // namespace splitleak
