// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

// Python bindings: metrics, defenses, synthetic data, the attack on NumPy
// arrays and the config-driven experiment runner.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "splitleak/attack.hpp"
#include "splitleak/datasets.hpp"
#include "splitleak/defenses.hpp"
#include "splitleak/experiment.hpp"
#include "splitleak/metrics.hpp"

namespace py = pybind11;
using namespace splitleak;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_matrix(const Array& a, const char* what) {
  if (a.ndim() != 2) throw std::invalid_argument(std::string(what) + " must be a 2-d array");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return Tensor(Shape{r, c}, std::vector<double>(a.data(), a.data() + r * c));
}

Array from_matrix(const Tensor& t) {
  Array out({t.rows(), t.cols()});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::dict row_dict(const MetricRow& r) {
  py::dict d;
  d["experiment_id"] = r.experiment_id;
  d["dataset"] = r.dataset;
  d["config_digest"] = r.config_digest;
  d["seed"] = r.seed;
  d["alv"] = r.alv;
  d["aer"] = r.aer;
  d["model_test_l1"] = r.model_test_l1;
  d["wall_ms"] = r.wall_ms;
  return d;
}

py::dict attack(const Array& embeddings, const Array& gradients, std::vector<double> sample_scale,
                std::optional<Array> known_embeddings, std::optional<Array> known_gradients,
                std::vector<double> known_labels, std::vector<double> known_scale, const std::string& loss,
                std::size_t iterations, double lambda1, double lambda2, double lambda3, std::size_t surrogate_depth,
                std::size_t surrogate_hidden, std::uint64_t seed, std::vector<double> truth) {
  AttackProblem p;
  p.embeddings = to_matrix(embeddings, "embeddings");
  p.gradients = to_matrix(gradients, "gradients");
  for (std::size_t i = 0; i < p.embeddings.rows(); ++i) p.sample_indices.push_back(i);
  if (sample_scale.empty()) sample_scale.assign(p.embeddings.rows(), 1.0);
  p.sample_scale = std::move(sample_scale);
  if (!known_labels.empty()) {
    if (!known_embeddings || !known_gradients) {
      throw std::invalid_argument("known_labels given without known_embeddings and known_gradients");
    }
    p.known_embeddings = to_matrix(*known_embeddings, "known_embeddings");
    p.known_gradients = to_matrix(*known_gradients, "known_gradients");
    p.known_labels = std::move(known_labels);
    for (std::size_t j = 0; j < p.known_labels.size(); ++j) p.known_indices.push_back(j);
    if (known_scale.empty()) known_scale.assign(p.known_labels.size(), 1.0);
    p.known_scale = std::move(known_scale);
  }
  AttackConfig c;
  c.loss = parse_loss_kind(loss);
  c.iterations = iterations;
  c.lambda1 = lambda1;
  c.lambda2 = lambda2;
  c.lambda3 = lambda3;
  c.seed = seed;
  c.surrogate = MlpConfig::fc(surrogate_depth, p.cut_dim(), surrogate_hidden, 1, Activation::kRelu);
  AttackResult r;
  {
    py::gil_scoped_release release;
    r = run_attack(p, c, truth);
  }
  py::dict d;
  d["labels"] = r.inferred_labels;
  d["gradient_loss"] = r.trajectory.gradient;
  d["total_loss"] = r.trajectory.total;
  if (r.alv) d["alv"] = *r.alv;
  if (r.aer) d["aer"] = *r.aer;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Label leakage from split-learning gradients (C++ core)";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("alv", [](std::vector<double> inferred, std::vector<double> truth) { return alv(inferred, truth); },
        py::arg("inferred"), py::arg("truth"), "Mean absolute label error.");
  m.def("aer", [](std::vector<double> inferred, std::vector<double> truth) { return aer(inferred, truth); },
        py::arg("inferred"), py::arg("truth"), "Mean relative label error; raises on zero labels.");

  m.def(
      "noise_labels",
      [](std::vector<double> labels, double epsilon, double sensitivity, std::uint64_t seed) {
        return noise_labels(labels, LabelNoiseConfig{epsilon, sensitivity, seed});
      },
      py::arg("labels"), py::arg("epsilon"), py::arg("sensitivity"), py::arg("seed") = 0,
      "Adds Laplace(0, sensitivity / epsilon) noise to every label.");
  m.def(
      "gradient_noise_sigma", [](const Array& g) { return gradient_noise_sigma(to_matrix(g, "gradients")); },
      py::arg("gradients"));
  m.def(
      "noise_gradients",
      [](const Array& g, std::uint64_t seed) {
        return from_matrix(noise_gradients(to_matrix(g, "gradients"), GradientNoiseConfig{seed}));
      },
      py::arg("gradients"), py::arg("seed") = 0);

  m.def(
      "benchmark_dataset",
      [](const std::string& which, std::uint64_t seed) {
        const Dataset ds = synthetic_regression(benchmark_like(which, seed));
        return py::make_tuple(from_matrix(ds.features), ds.labels);
      },
      py::arg("which") = "boston", py::arg("seed") = 0,
      "Synthetic stand-in for a benchmark regression set: (features, labels).");

  m.def("run_attack", &attack, py::arg("embeddings"), py::arg("gradients"),
        py::arg("sample_scale") = std::vector<double>{}, py::arg("known_embeddings") = std::nullopt,
        py::arg("known_gradients") = std::nullopt, py::arg("known_labels") = std::vector<double>{},
        py::arg("known_scale") = std::vector<double>{}, py::arg("loss") = "l1", py::arg("iterations") = 2000,
        py::arg("lambda1") = 1.0, py::arg("lambda2") = 2.0, py::arg("lambda3") = 0.0,
        py::arg("surrogate_depth") = 3, py::arg("surrogate_hidden") = 64, py::arg("seed") = 0,
        py::arg("truth") = std::vector<double>{},
        "Infers labels from embeddings and the gradients returned for them.");

  m.def(
      "effective_config",
      [](const std::string& text, const std::vector<std::string>& overrides) {
        return to_toml(parse_config(text, overrides));
      },
      py::arg("toml"), py::arg("overrides") = std::vector<std::string>{});
  m.def(
      "config_digest",
      [](const std::string& text, const std::vector<std::string>& overrides) {
        return config_digest(parse_config(text, overrides));
      },
      py::arg("toml"), py::arg("overrides") = std::vector<std::string>{});
  m.def(
      "run_experiment",
      [](const std::string& text, const std::vector<std::string>& overrides) {
        const ExperimentConfig c = parse_config(text, overrides);
        ExperimentOutput out;
        {
          py::gil_scoped_release release;
          out = run_experiment(c);
        }
        py::list rows;
        for (const auto& r : out.rows) rows.append(row_dict(r));
        py::list failures;
        for (const auto& f : out.failures) failures.append(py::dict(py::arg("experiment_id") = f.experiment_id,
                                                                    py::arg("seed") = f.seed,
                                                                    py::arg("error") = f.error));
        return py::make_tuple(rows, failures);
      },
      py::arg("toml"), py::arg("overrides") = std::vector<std::string>{},
      "Runs every sweep point and repeat; returns (rows, failures).");
}
