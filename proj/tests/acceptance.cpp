// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// fails. Criteria 3-9 run the experiment configs in configs/.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "splitleak/experiment.hpp"
#include "splitleak/graph.hpp"
#include "splitleak/mlp_graph.hpp"
#include "support.hpp"

#ifndef SPLITLEAK_CONFIG_DIR
#define SPLITLEAK_CONFIG_DIR "configs"
#endif

using namespace splitleak;
using namespace splitleak::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const Outcome& o, double secs) {
  std::printf("%s  [%d] %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
  return buf;
}

std::string num(double v, int digits = 3) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

ExperimentOutput run_config(const std::string& file) {
  const ExperimentConfig c = load_config(std::string(SPLITLEAK_CONFIG_DIR) + "/" + file);
  ExperimentOutput out = run_experiment(c);
  if (!out.failures.empty()) {
    throw std::runtime_error(file + ": " + std::to_string(out.failures.size()) + " failed runs, first: " +
                             out.failures.front().error);
  }
  return out;
}

// Per-experiment rows keyed by seed, so variants can be paired by repeat.
struct Table {
  std::map<std::string, std::map<std::uint64_t, MetricRow>> by_id;

  explicit Table(const ExperimentOutput& out) {
    for (const auto& r : out.rows) by_id[r.experiment_id][r.seed] = r;
  }
  const std::map<std::uint64_t, MetricRow>& at(const std::string& id) const {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw std::runtime_error("no rows for " + id);
    return it->second;
  }
  double aer(const std::string& id) const {
    double s = 0.0;
    for (const auto& [seed, r] : at(id)) s += r.aer;
    return s / static_cast<double>(at(id).size());
  }
  double l1(const std::string& id) const {
    double s = 0.0;
    for (const auto& [seed, r] : at(id)) s += r.model_test_l1;
    return s / static_cast<double>(at(id).size());
  }
  // mean over repeats of aer(hi) - aer(lo)
  double paired_gap(const std::string& hi, const std::string& lo) const {
    const auto& a = at(hi);
    const auto& b = at(lo);
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& [seed, r] : a) {
      auto it = b.find(seed);
      if (it == b.end()) continue;
      s += r.aer - it->second.aer;
      ++n;
    }
    if (n == 0) throw std::runtime_error("no paired repeats for " + hi + " vs " + lo);
    return s / static_cast<double>(n);
  }
};

// ---------------------------------------------------------------------------

Outcome autodiff_property() {
  double worst_backward = 0.0, worst_norm = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(derive_seed(2024, "acceptance-autodiff", seed));
    const auto input = static_cast<std::size_t>(rng.uniform(1.0, 33.0));
    Mlp model(random_config(rng, 3, 32, input, 1, Activation::kTanh), rng);
    const Tensor e = random_matrix(rng, 4, input);
    const auto labels = random_vector(rng, 4);
    const Tensor y = Tensor::column(labels);
    const auto ids_of = [](const MlpNodes& m) { return parameter_nodes(m); };

    // mean L2 loss: backward() against central differences, weights and E
    {
      Tensor en = e;
      auto value = [&]() {
        Graph g;
        auto m = model.attach(g, g.constant(en), false);
        return g.value(g.mean(per_sample_loss(g, LossKind::kL2, m.output, g.constant(y)))).item();
      };
      Graph g;
      auto ein = g.input(en);
      auto m = model.attach(g, ein, true);
      auto ids = ids_of(m);
      ids.push_back(ein);
      auto grads = g.backward(g.mean(per_sample_loss(g, LossKind::kL2, m.output, g.constant(y))), ids);
      auto params = model.parameters();
      for (std::size_t i = 0; i < params.size(); ++i) {
        worst_backward =
            std::max(worst_backward, relative_error(grads.at(ids[i]).data(), central_difference(*params[i], value)));
      }
      worst_backward = std::max(worst_backward, relative_error(grads.at(ein).data(), central_difference(en, value)));
    }
    // ||g||^2 with g = dL/dE as a graph: derivative w.r.t. label-model weights
    {
      auto value = [&]() {
        Graph g;
        auto m = model.attach(g, g.constant(e), false);
        return g.value(g.sum_squares(embedding_gradient_as_graph(g, m, LossKind::kL2, g.constant(y)))).item();
      };
      Graph g;
      auto m = model.attach(g, g.constant(e), true);
      const auto ids = ids_of(m);
      auto grads = g.backward(g.sum_squares(embedding_gradient_as_graph(g, m, LossKind::kL2, g.constant(y))), ids);
      auto params = model.parameters();
      for (std::size_t i = 0; i < params.size(); ++i) {
        worst_norm =
            std::max(worst_norm, relative_error(grads.at(ids[i]).data(), central_difference(*params[i], value)));
      }
    }
  }
  return {worst_backward < 1e-6 && worst_norm < 1e-5,
          "100 tanh MLPs, max rel err backward " + num(worst_backward) + " (< 1e-6), ||g||^2 " + num(worst_norm) +
              " (< 1e-5)"};
}

Outcome inversion_oracle() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    InversionInstance inst = make_inversion_instance(seed);
    AttackInit init;
    init.surrogate = inst.label;
    init.freeze_surrogate = true;
    const AttackResult r = run_attack(inst.problem, inversion_attack_config(4, seed), inst.truth, init);
    for (std::size_t i = 0; i < inst.closed_form.size(); ++i) {
      worst = std::max(worst, std::abs(r.inferred_labels[i] - inst.closed_form[i]));
    }
  }
  return {worst < 1e-3, "20 linear L2 instances, max |dy| vs closed form " + num(worst) + " (< 1e-3)"};
}

Outcome attack_vs_baseline(const ExperimentOutput& out) {
  const Table t(out);
  const double a = t.aer("attack-vs-baseline/attack"), b = t.aer("attack-vs-baseline/baseline");
  return {a <= 0.10 && b >= 3.0 * a,
          "attack AER " + pct(a) + " (<= 10%), baseline " + pct(b) + " = " + num(b / a) + "x attack (>= 3x)"};
}

Outcome known_monotone() {
  const Table t(run_config("known.toml"));
  const double a4 = t.aer("known/known=4/attack"), a20 = t.aer("known/known=20/attack");
  const double b4 = t.aer("known/known=4/baseline"), b20 = t.aer("known/known=20/baseline");
  return {a20 < a4 && b20 < b4, "attack AER " + pct(a4) + " -> " + pct(a20) + ", baseline " + pct(b4) + " -> " +
                                    pct(b20) + " (4 -> 20 known, both must drop)"};
}

Outcome epoch_trend() {
  const Table t(run_config("epoch.toml"));
  const double e0 = t.aer("epoch/epoch=0/attack"), e15 = t.aer("epoch/epoch=15/attack");
  return {e0 >= 5.0 * e15, "AER epoch 0 " + pct(e0) + " vs epoch 15 " + pct(e15) + ", ratio " + num(e0 / e15) +
                               " (>= 5)"};
}

Outcome ablation() {
  const Table t(run_config("ablation.toml"));
  const std::string full = "ablation/regularizers=full/attack", kn = "ablation/regularizers=knowledge-only/attack",
                    none = "ablation/regularizers=none/attack";
  const double g1 = t.paired_gap(kn, full), g2 = t.paired_gap(none, kn);
  return {g1 > 0.0 && g2 > 0.0, "full " + pct(t.aer(full)) + " <= knowledge-only " + pct(t.aer(kn)) +
                                    " <= none " + pct(t.aer(none)) + "; paired mean gaps " + pct(g1) + ", " +
                                    pct(g2) + " (> 0)"};
}

Outcome surrogate_capacity() {
  const Table t(run_config("surrogate.toml"));
  const double fc1 = t.aer("surrogate/surrogate=fc1/attack"), fc3 = t.aer("surrogate/surrogate=fc3/attack");
  return {fc1 >= 1.5 * fc3,
          "FC-1 AER " + pct(fc1) + " vs FC-3 " + pct(fc3) + ", ratio " + num(fc1 / fc3) + " (>= 1.5)"};
}

Outcome defenses() {
  const Table g(run_config("gradient_noise.toml"));
  const std::string off = "gradient-noise/gradient_noise=off/attack", on = "gradient-noise/gradient_noise=on/attack";
  const double a_off = g.aer(off), a_on = g.aer(on), l_off = g.l1(off), l_on = g.l1(on);
  const bool grad_ok = a_on >= 5.0 * a_off && l_on > l_off;

  const Table l(run_config("label_noise.toml"));
  std::string sweep;
  bool monotone = true;
  double prev = 1e300;
  for (const char* eps : {"0.1", "1", "2", "5", "10", "25"}) {
    const double a = l.aer(std::string("label-noise/epsilon=") + eps + "/attack");
    monotone = monotone && a <= prev;
    prev = a;
    sweep += std::string(sweep.empty() ? "" : ", ") + eps + ": " + pct(a);
  }
  return {grad_ok && monotone, "gradient noise AER " + pct(a_off) + " -> " + pct(a_on) + " (" + num(a_on / a_off) +
                                   "x, need >= 5x), test L1 " + num(l_off, 4) + " -> " + num(l_on, 4) +
                                   "; label noise AER by epsilon {" + sweep + "} " +
                                   (monotone ? "non-increasing" : "NOT non-increasing")};
}

Outcome triplet() {
  const Table t(run_config("triplet.toml"));
  const double off = t.aer("triplet/triplet=off/attack"), on = t.aer("triplet/triplet=on/attack");
  return {on - off <= 0.01, "AER off " + pct(off) + ", on " + pct(on) + ", change " + num(100.0 * (on - off)) +
                                " pp (<= +1 pp)"};
}

Outcome determinism(const ExperimentOutput& first) {
  const ExperimentOutput second = run_config("attack_vs_baseline.toml");
  std::ostringstream a, b;
  write_rows_csv(a, first.rows, false);
  write_rows_csv(b, second.rows, false);
  return {a.str() == b.str() && !first.rows.empty(),
          "two runs of attack_vs_baseline.toml: " + std::to_string(first.rows.size()) + " rows, results.csv " +
              (a.str() == b.str() ? "identical" : "DIFFERENT") + " without timing"};
}

template <class F>
void run(int id, const char* name, F&& f, double limit_secs = 0.0) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = f();
  } catch (const std::exception& e) {
    o = {false, std::string("error: ") + e.what()};
  }
  const double secs = seconds_since(t0);
  if (limit_secs > 0.0 && secs >= limit_secs) {
    o.pass = false;
    o.detail += "; runtime over " + num(limit_secs) + "s";
  }
  report(id, name, o, secs);
}

}  // namespace

int main() {
  run(1, "autodiff vs finite differences", autodiff_property, 30.0);
  run(2, "closed-form inversion oracle", inversion_oracle, 60.0);

  ExperimentOutput avb;
  run(
      3, "attack vs baseline",
      [&] {
        avb = run_config("attack_vs_baseline.toml");
        return attack_vs_baseline(avb);
      },
      600.0);
  run(4, "known-data monotonicity", known_monotone);
  run(5, "epoch trend", epoch_trend);
  run(6, "ablation ordering", ablation);
  run(7, "surrogate capacity", surrogate_capacity);
  run(8, "defense efficacy", defenses);
  run(9, "triplet non-degradation", triplet);
  run(10, "determinism", [&] { return determinism(avb); });

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
