// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

// splitleak: train split-learning targets, attack their gradient logs,
// run experiment grids and summarize results.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "splitleak/experiment.hpp"

namespace fs = std::filesystem;
using namespace splitleak;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> set;
  std::size_t jobs = 0;
};

void add_common(CLI::App* cmd, Common& c, bool with_config = true) {
  if (with_config) cmd->add_option("--config", c.config, "TOML experiment config");
  cmd->add_option("--seed", c.seed, "master seed (overrides the config)");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--set", c.set, "override a config key, e.g. --set attack.lambda2=0.5")->take_all();
}

ExperimentConfig resolve(const Common& c, const std::string& fallback_config = "") {
  std::vector<std::string> overrides = c.set;
  if (c.seed) overrides.push_back("seed=" + std::to_string(*c.seed));
  if (!c.out.empty()) overrides.push_back("out=\"" + c.out + "\"");
  if (c.jobs > 0) overrides.push_back("jobs=" + std::to_string(c.jobs));
  const std::string path = c.config.empty() ? fallback_config : c.config;
  if (path.empty()) return parse_config("", overrides);
  return load_config(path, overrides);
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << s;
}

int cmd_train(const Common& c, std::size_t repeat) {
  ExperimentConfig cfg = resolve(c);
  if (!cfg.dataset.seed && cfg.dataset.path.empty()) cfg.dataset.seed = derive_seed(cfg.seed, "dataset");
  const fs::path out = cfg.out;
  fs::create_directories(out);
  const Dataset ds = build_dataset(cfg);
  const std::uint64_t seed = repeat_seed(cfg.seed, repeat);
  TrainedTarget t = train_target(cfg, ds, seed);

  save_model((out / "model.json").string(), t.result.model);
  t.result.log.save((out / "gradient_log.jsonl").string());
  write_text(out / "effective-config.toml", to_toml(cfg));
  {
    std::ofstream s(out / "standardization.json");
    t.data.write_stats_json(s);
  }
  nlohmann::json info{{"dataset", ds.name},
                      {"dataset_digest", ds.digest()},
                      {"provenance", ds.provenance},
                      {"repeat", repeat},
                      {"seed", seed},
                      {"train", t.split.train},
                      {"test", t.split.test},
                      {"known", t.split.known},
                      {"test_l1", t.result.test_l1}};
  write_text(out / "train.json", info.dump(2) + "\n");
  std::cout << "trained " << ds.name << " (" << ds.rows() << " rows) for " << cfg.train.epochs
            << " epochs; test L1 " << t.result.test_l1.back() << "; " << t.result.log.size()
            << " exchanges logged to " << (out / "gradient_log.jsonl").string() << "\n";
  return 0;
}

int cmd_attack(const Common& c, const std::string& run_dir, const std::string& method) {
  const fs::path run = run_dir;
  ExperimentConfig cfg = resolve(c, (run / "effective-config.toml").string());
  std::ifstream info_in(run / "train.json");
  if (!info_in) throw std::runtime_error("no train.json in " + run.string() + " (run `splitleak train` first)");
  const nlohmann::json info = nlohmann::json::parse(info_in);

  const Dataset ds = build_dataset(cfg);
  if (ds.digest() != info.at("dataset_digest").get<std::string>()) {
    throw std::runtime_error("dataset does not match the one the target was trained on (digest mismatch)");
  }
  TrainedTarget t;
  t.split.train = info.at("train").get<std::vector<std::size_t>>();
  t.split.test = info.at("test").get<std::vector<std::size_t>>();
  t.split.known = info.at("known").get<std::vector<std::size_t>>();
  if (cfg.known > t.split.known.size()) {
    throw std::runtime_error("attack.known=" + std::to_string(cfg.known) + " exceeds the " +
                             std::to_string(t.split.known.size()) + " known samples drawn at training time");
  }
  t.data = standardize(ds, t.split);
  t.result.model = load_model((run / "model.json").string());
  t.result.log = GradientLog::load((run / "gradient_log.jsonl").string());
  t.result.test_l1 = info.at("test_l1").get<std::vector<double>>();

  const std::uint64_t seed = c.seed ? repeat_seed(*c.seed, 0) : info.at("seed").get<std::uint64_t>();
  const fs::path out = c.out.empty() ? run : fs::path(c.out);
  fs::create_directories(out);
  const std::string id = cfg.name + "/" + method;
  MethodRun r = run_method(cfg, t, method, seed, id);

  std::ostringstream groups;
  groups << "[\n";
  for (std::size_t i = 0; i < r.groups.size(); ++i) {
    AttackConfig a = effective_attack(cfg);
    BaselineConfig b = effective_baseline(cfg);
    std::ostringstream one;
    write_result_json(one, r.groups[i], method == "attack" ? &a : nullptr, method == "baseline" ? &b : nullptr);
    groups << one.str() << (i + 1 < r.groups.size() ? ",\n" : "\n");
  }
  groups << "]\n";
  write_text(out / (method + "_results.json"), groups.str());
  {
    std::ofstream csv(out / (method + "_results.csv"));
    std::vector<MetricRow> rows{r.row};
    write_rows_csv(csv, rows);
  }
  std::cout << method << ": " << r.groups.size() << " batches, ALV " << r.row.alv << ", AER " << r.row.aer * 100.0
            << "%\n";
  return 0;
}

int cmd_sweep(const Common& c) {
  ExperimentConfig cfg = resolve(c);
  ExperimentOutput output = run_experiment(cfg, [](const std::string& m) { std::cerr << m << "\n"; });
  write_outputs(cfg.out, cfg, output);
  std::cout << output.rows.size() << " rows written to " << (fs::path(cfg.out) / "results.csv").string();
  if (!output.failures.empty()) std::cout << "; " << output.failures.size() << " failures (see failures.json)";
  std::cout << "\n";
  for (const auto& a : aggregate(output.rows)) {
    std::cout << "  " << a.experiment_id << "  n=" << a.count << "  AER " << a.aer.mean * 100.0 << "% +- "
              << a.aer.std * 100.0 << "  ALV " << a.alv.mean << "  test L1 " << a.model_test_l1.mean << "\n";
  }
  return output.failures.empty() ? 0 : 3;
}

int cmd_report(const std::string& in_path, const std::string& out_dir) {
  fs::path in = in_path;
  if (fs::is_directory(in)) in /= "results.csv";
  std::ifstream f(in);
  if (!f) throw std::runtime_error("cannot open " + in.string());
  auto rows = read_rows_csv(f);
  const std::string out = out_dir.empty() ? in.parent_path().string() : out_dir;
  write_report(out.empty() ? "." : out, rows);
  for (const auto& a : aggregate(rows)) {
    std::cout << a.experiment_id << ",n=" << a.count << ",aer=" << a.aer.mean << ",alv=" << a.alv.mean << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"splitleak: label leakage from split-learning gradients"};
  app.require_subcommand(1);

  Common train_opts, attack_opts, baseline_opts, sweep_opts;
  std::size_t repeat = 0;
  std::string attack_run, baseline_run, report_in, report_out;

  auto* train = app.add_subcommand("train", "train a target model and record its gradient log");
  add_common(train, train_opts);
  train->add_option("--repeat", repeat, "repeat index used to derive the training seed");

  auto* attack = app.add_subcommand("attack", "run the label inference attack against a trained target");
  add_common(attack, attack_opts);
  attack->add_option("--run", attack_run, "directory written by `train`")->required();

  auto* baseline = app.add_subcommand("baseline", "run the semi-supervised baseline against a trained target");
  add_common(baseline, baseline_opts);
  baseline->add_option("--run", baseline_run, "directory written by `train`")->required();

  auto* sweep = app.add_subcommand("sweep", "run the full experiment grid of a config");
  add_common(sweep, sweep_opts);
  sweep->add_option("--jobs", sweep_opts.jobs, "worker threads");

  auto* report = app.add_subcommand("report", "aggregate results.csv into summary, pivot and plot tables");
  report->add_option("--in", report_in, "results.csv or a directory containing it")->required();
  report->add_option("--out", report_out, "output directory (default: next to the input)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(train_opts, repeat);
    if (*attack) return cmd_attack(attack_opts, attack_run, "attack");
    if (*baseline) return cmd_attack(baseline_opts, baseline_run, "baseline");
    if (*sweep) return cmd_sweep(sweep_opts);
    if (*report) return cmd_report(report_in, report_out);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
