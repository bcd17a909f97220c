// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "splitleak/datasets.hpp"
#include "splitleak/experiment.hpp"
#include "splitleak/mlp_graph.hpp"
#include "splitleak/split_protocol.hpp"
#include "support.hpp"

using namespace splitleak;
using namespace splitleak::testing;

namespace {

// Independent forward pass: plain loops, no Tensor helpers.
std::vector<double> chain_oracle(const Mlp& m, const Tensor& x) {
  std::vector<double> cur(x.data().begin(), x.data().end());
  std::size_t width = x.cols();
  const std::size_t n = x.rows();
  for (std::size_t l = 0; l < m.weights().size(); ++l) {
    const Tensor& w = m.weights()[l];
    const Tensor& b = m.biases()[l];
    const std::size_t out = w.cols();
    std::vector<double> next(n * out);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < out; ++j) {
        double s = b[j];
        for (std::size_t k = 0; k < width; ++k) s += cur[r * width + k] * w.at(k, j);
        if (l + 1 < m.weights().size()) {
          s = m.config().activation == Activation::kTanh ? std::tanh(s) : std::max(0.0, s);
        }
        next[r * out + j] = s;
      }
    }
    cur.swap(next);
    width = out;
  }
  return cur;
}

}  // namespace

TEST_CASE("forward: identity and zero weights") {
  Mlp id(MlpConfig{{2, 2}, Activation::kRelu}, {Tensor::from_rows({{1, 0}, {0, 1}})}, {Tensor::vector({0, 0})});
  CHECK(forward_user(id, Tensor::from_rows({{1, 2}})) == Tensor::from_rows({{1, 2}}));

  Mlp zero(MlpConfig{{2, 1}, Activation::kRelu}, {Tensor::matrix(2, 1)}, {Tensor::vector({0.25})});
  CHECK(forward_label(zero, Tensor::from_rows({{7, -3}, {1, 1}})) == Tensor::from_rows({{0.25}, {0.25}}));
}

TEST_CASE("forward: width mismatch is a shape error") {
  Rng rng(1);
  Mlp m(MlpConfig::fc(3, 4, 8, 2), rng);
  CHECK_THROWS_AS(forward_user(m, Tensor::matrix(2, 5)), ShapeError);
}

TEST_CASE("forward: random FC-3 matches an independent matrix chain") {
  for (auto act : {Activation::kRelu, Activation::kTanh}) {
    Rng rng(derive_seed(3, "fc3", static_cast<std::uint64_t>(act)));
    Mlp user(MlpConfig::fc(3, 6, 10, 4, act), rng);
    Mlp label(MlpConfig::fc(3, 4, 10, 1, act), rng);
    const Tensor x = random_matrix(rng, 7, 6);
    const Tensor e = forward_user(user, x);
    CHECK(relative_error(e.data(), chain_oracle(user, x)) < 1e-12);
    CHECK(relative_error(forward_label(label, e).data(), chain_oracle(label, e)) < 1e-12);
  }
}

TEST_CASE("shared gradient: linear L2 closed form") {
  Mlp label(MlpConfig{{2, 1}, Activation::kRelu}, {Tensor::from_rows({{1}, {0}})}, {Tensor::vector({0})});
  const std::vector<double> y{1.0};
  CHECK(shared_gradient(label, Tensor::from_rows({{2, 3}}), y, LossKind::kL2) == Tensor::from_rows({{2, 0}}));
  const std::vector<double> exact{2.0};
  CHECK(shared_gradient(label, Tensor::from_rows({{2, 3}}), exact, LossKind::kL2) == Tensor::from_rows({{0, 0}}));
}

TEST_CASE("shared gradient: batch-mean convention, FC-3 tanh against finite differences") {
  Rng rng(11);
  Mlp label(MlpConfig::fc(3, 4, 8, 1, Activation::kTanh), rng);
  Tensor e = random_matrix(rng, 5, 4);
  const auto y = random_vector(rng, 5);
  auto batch_loss = [&]() {
    const Tensor p = forward_label(label, e);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (p[i] - y[i]) * (p[i] - y[i]);
    return s / static_cast<double>(y.size());
  };
  const Tensor g = shared_gradient(label, e, y, LossKind::kL2);
  CHECK(relative_error(g.data(), central_difference(e, batch_loss, 1e-6)) < 1e-6);
}

TEST_CASE("property: shared gradient equals the closed-form graph") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(5, "sg", seed));
    const LossKind kind = seed % 2 ? LossKind::kL1 : LossKind::kL2;
    Mlp label(random_config(rng, 3, 16, 6, 1, seed % 3 ? Activation::kRelu : Activation::kTanh), rng);
    const Tensor e = random_matrix(rng, 5, 6);
    const auto y = random_vector(rng, 5);
    Graph g;
    auto m = label.attach(g, g.constant(e), false);
    auto closed = embedding_gradient_as_graph(g, m, kind, g.constant(Tensor::column(y)));
    CHECK(max_abs_diff(shared_gradient(label, e, y, kind), g.value(closed)) < 1e-10);
  }
}

TEST_CASE("property: linear L2 gradient is linear in the residual") {
  Rng rng(8);
  Mlp label(MlpConfig{{3, 1}, Activation::kRelu}, rng);
  const Tensor e = random_matrix(rng, 4, 3);
  const Tensor p = forward_label(label, e);
  std::vector<double> y1, y2;
  for (std::size_t i = 0; i < 4; ++i) {
    const double r = rng.normal();
    y1.push_back(p[i] - r);
    y2.push_back(p[i] - 2.0 * r);
  }
  const Tensor g1 = shared_gradient(label, e, y1, LossKind::kL2);
  const Tensor g2 = shared_gradient(label, e, y2, LossKind::kL2);
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g2[i] == doctest::Approx(2.0 * g1[i]).epsilon(1e-12));
}

namespace {

struct Toy {
  Dataset ds;
  SplitIndices split;
  StandardizedDataset std_ds;
};

Toy linear_toy(std::size_t rows, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.rows = rows;
  spec.features = 4;
  spec.seed = seed;
  Toy t;
  t.ds = synthetic_regression(spec);
  t.split = split_dataset(rows, 0.8, 0, seed);
  t.std_ds = standardize(t.ds, t.split);
  return t;
}

}  // namespace

TEST_CASE("train: zero epochs leaves the model untouched and the log empty") {
  Toy t = linear_toy(40, 1);
  Rng rng(2);
  CompositeModel model{Mlp(MlpConfig::fc(2, 4, 8, 3), rng), Mlp(MlpConfig::fc(2, 3, 8, 1), rng)};
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto& f = t.std_ds.data.features;
  TrainResult r = train_composite(model, TrainData{f, t.ds.labels, t.ds.labels, t.split.train, t.split.test}, cfg);
  CHECK(r.log.empty());
  CHECK(r.model.user.weights() == model.user.weights());
  CHECK(r.model.label.biases() == model.label.biases());
}

TEST_CASE("train: a vanishing learning rate leaves parameters unchanged") {
  Toy t = linear_toy(40, 3);
  Rng rng(4);
  CompositeModel model{Mlp(MlpConfig::fc(2, 4, 8, 3), rng), Mlp(MlpConfig::fc(2, 3, 8, 1), rng)};
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.optimizer.lr = 1e-300;
  const auto& f = t.std_ds.data.features;
  TrainResult r = train_composite(model, TrainData{f, t.ds.labels, t.ds.labels, t.split.train, t.split.test}, cfg);
  CHECK(r.log.size() == 2 * ((t.split.train.size() + cfg.batch_size - 1) / cfg.batch_size));
  for (std::size_t l = 0; l < 2; ++l) CHECK(max_abs_diff(r.model.user.weights()[l], model.user.weights()[l]) < 1e-200);
}

TEST_CASE("train: noiseless linear data is fitted") {
  Toy t = linear_toy(400, 9);
  Rng rng(10);
  CompositeModel model{Mlp(MlpConfig{{4, 4}, Activation::kRelu}, rng), Mlp(MlpConfig{{4, 1}, Activation::kRelu}, rng)};
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.training_loss = LossKind::kL2;
  cfg.optimizer.lr = 0.01;
  const auto& f = t.std_ds.data.features;
  TrainResult r = train_composite(model, TrainData{f, t.ds.labels, t.ds.labels, t.split.train, t.split.test}, cfg);
  const double mean = std::accumulate(t.ds.labels.begin(), t.ds.labels.end(), 0.0) / 400.0;
  double var = 0.0;
  for (double y : t.ds.labels) var += (y - mean) * (y - mean);
  const double sd = std::sqrt(var / 400.0);
  CHECK(r.test_l1.size() == 50);
  CHECK(r.test_l1.back() < 0.05 * sd);
}

TEST_CASE("train: every exchange is logged with matching shapes") {
  Toy t = linear_toy(30, 12);
  Rng rng(13);
  CompositeModel model{Mlp(MlpConfig::fc(2, 4, 8, 3), rng), Mlp(MlpConfig::fc(2, 3, 8, 1), rng)};
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 7;
  const auto& f = t.std_ds.data.features;
  TrainResult r = train_composite(model, TrainData{f, t.ds.labels, t.ds.labels, t.split.train, t.split.test}, cfg);
  std::size_t seen = 0;
  for (const auto& rec : r.log.records()) {
    CHECK(rec.embeddings.shape() == Shape{rec.batch_size(), 3});
    CHECK(rec.gradients.shape() == Shape{rec.batch_size(), 3});
    seen += rec.batch_size();
  }
  CHECK(seen == 3 * t.split.train.size());
  CHECK(r.log.steps_in_epoch(1).size() == 4);  // 24 train rows in batches of 7
  CHECK(r.log.last_epoch() == std::optional<std::size_t>(2));
}

TEST_CASE("gradient log: JSONL round trip and nearest step lookup") {
  GradientLog log(2);
  log.append({0, 0, {4, 7}, Tensor::from_rows({{1, 2}, {3, 4}}), Tensor::from_rows({{0.5, -0.25}, {1e-17, 3}})});
  log.append({0, 1, {1, 9}, Tensor::from_rows({{5, 6}, {7, 8}}), Tensor::from_rows({{0, 1}, {2, 0.1}})});
  log.append({1, 0, {7, 1}, Tensor::from_rows({{1, 1}, {2, 2}}), Tensor::from_rows({{1, 1}, {1, 1}})});
  std::stringstream ss;
  log.write_jsonl(ss);
  GradientLog back = GradientLog::read_jsonl(ss);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.records()[i].gradients == log.records()[i].gradients);
    CHECK(back.records()[i].sample_indices == log.records()[i].sample_indices);
  }
  CHECK(log.nearest_step_with(7, 1) == std::optional<std::size_t>(0));
  CHECK(log.nearest_step_with(9, 2) == std::optional<std::size_t>(1));
  CHECK_FALSE(log.nearest_step_with(42, 0));
  CHECK_THROWS_AS(log.append({2, 0, {1}, Tensor::matrix(1, 3), Tensor::matrix(1, 3)}), ShapeError);
}

TEST_CASE("train: Boston-scale stand-in reaches a plausible test L1") {
  ExperimentConfig cfg;
  const Dataset ds = build_dataset(cfg);
  TrainedTarget t = train_target(cfg, ds, repeat_seed(cfg.seed, 0));
  CHECK(t.result.test_l1.size() == 15);
  CHECK(t.result.test_l1.back() >= 1.5);
  CHECK(t.result.test_l1.back() <= 3.5);
}
