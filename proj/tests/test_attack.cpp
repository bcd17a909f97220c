// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "splitleak/attack.hpp"
#include "splitleak/experiment.hpp"
#include "splitleak/metrics.hpp"
#include "support.hpp"

using namespace splitleak;
using namespace splitleak::testing;

namespace {

double scalar(Graph& g, NodeId id) { return g.value(id).item(); }

std::vector<NodeId> leaves(Graph& g, const Mlp& m, bool differentiable, std::vector<NodeId>& biases) {
  std::vector<NodeId> w;
  for (std::size_t l = 0; l < m.weights().size(); ++l) {
    w.push_back(g.input(m.weights()[l], differentiable));
    biases.push_back(g.input(m.biases()[l], differentiable));
  }
  return w;
}

// Problem observed from a known label model: n attacked samples, k known
// ones, gradients as the label party would have released them.
struct Observed {
  Mlp label;
  AttackProblem problem;
  std::vector<double> truth;
};

Observed observe(std::uint64_t seed, LossKind loss, std::size_t k, Activation act = Activation::kRelu,
                 std::size_t n = 5, std::size_t d = 6) {
  Rng rng(derive_seed(seed, "observe"));
  Observed o;
  o.label = Mlp(MlpConfig::fc(3, d, 12, 1, act), rng);
  auto batch = [&](std::size_t rows, std::vector<double>& y) {
    Tensor e = random_matrix(rng, rows, d);
    const Tensor p = o.label.forward(e);
    for (std::size_t i = 0; i < rows; ++i) y.push_back(p[i] + rng.normal(0.0, 0.3));
    return std::pair{e, shared_gradient(o.label, e, y, loss)};
  };
  auto [e, g] = batch(n, o.truth);
  o.problem.embeddings = e;
  o.problem.gradients = g;
  for (std::size_t i = 0; i < n; ++i) o.problem.sample_indices.push_back(i);
  o.problem.sample_scale.assign(n, 1.0 / static_cast<double>(n));
  if (k > 0) {
    auto [ek, gk] = batch(k, o.problem.known_labels);
    o.problem.known_embeddings = ek;
    o.problem.known_gradients = gk;
    for (std::size_t j = 0; j < k; ++j) o.problem.known_indices.push_back(100 + j);
    o.problem.known_scale.assign(k, 1.0 / static_cast<double>(k));
  }
  return o;
}

AttackConfig quick_config(LossKind loss, std::size_t d = 6) {
  AttackConfig c;
  c.loss = loss;
  c.surrogate = MlpConfig::fc(3, d, 12, 1);
  c.iterations = 60;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("gradient distance: examples and shape check") {
  Graph g;
  auto a = g.constant(Tensor::from_rows({{1, 2}}));
  CHECK(scalar(g, gradient_distance_loss(g, a, a)) == 0.0);
  CHECK(scalar(g, gradient_distance_loss(g, a, g.constant(Tensor::from_rows({{0, 0}})))) == 5.0);
  auto two = g.constant(Tensor::from_rows({{1, 2}, {1, 1}}));
  auto zero2 = g.constant(Tensor::from_rows({{0, 0}, {0, -1}}));  // distances 5 and 1 + 4 = 5... see below
  CHECK(scalar(g, gradient_distance_loss(g, two, zero2)) == 10.0);
  auto three = g.constant(Tensor::from_rows({{1, 2}, {1, 1}}));
  auto off = g.constant(Tensor::from_rows({{0, 0}, {0, 2}}));  // 5 and 1 + 1 = 2
  CHECK(scalar(g, gradient_distance_loss(g, three, off)) == 7.0);
  auto sq3 = g.constant(Tensor::from_rows({{1, 2}, {1, 1}}));
  auto off3 = g.constant(Tensor::from_rows({{0, 0}, {1 - std::sqrt(3.0), 1}}));  // 5 and 3
  CHECK(scalar(g, gradient_distance_loss(g, sq3, off3)) == doctest::Approx(8.0));
  CHECK_THROWS_AS(gradient_distance_loss(g, a, g.constant(Tensor::from_rows({{1, 2, 3}}))), ShapeError);
}

TEST_CASE("accuracy loss: value and dummy-label gradient") {
  Graph g;
  auto p = g.constant(Tensor::from_rows({{2}}));
  auto z = g.input(Tensor::from_rows({{5}}));
  auto loss = accuracy_loss(g, p, z);
  CHECK(scalar(g, loss) == 9.0);
  CHECK(g.backward(loss, {z}).at(z).item() == 6.0);
  CHECK(scalar(g, accuracy_loss(g, p, g.constant(Tensor::from_rows({{2}})))) == 0.0);
}

TEST_CASE("knowledge loss: empty set, perfect surrogate, and a hand-computed sample") {
  Graph g;
  std::vector<NodeId> b;
  Mlp lin(MlpConfig{{2, 1}, Activation::kRelu}, {Tensor::from_rows({{1}, {0}})}, {Tensor::vector({0})});
  auto w = leaves(g, lin, true, b);
  CHECK(scalar(g, knowledge_loss(g, w, b, Activation::kRelu, LossKind::kL2, Tensor(), Tensor(), {}, {})) == 0.0);

  // p = 2, y = 5: L_t = 9; surrogate gradient 2 (p - y) w = [-6, 0]; observed
  // [-5, 2] is at squared distance 5.
  const std::vector<double> y{5.0}, scale{1.0};
  auto lk = knowledge_loss(g, w, b, Activation::kRelu, LossKind::kL2, Tensor::from_rows({{2, 0}}),
                           Tensor::from_rows({{-5, 2}}), y, scale);
  CHECK(scalar(g, lk) == doctest::Approx(14.0));

  Observed o = observe(4, LossKind::kL2, 3);
  Graph h;
  std::vector<NodeId> hb;
  auto hw = leaves(h, o.label, true, hb);
  auto perfect = knowledge_loss(h, hw, hb, Activation::kRelu, LossKind::kL2, o.problem.known_embeddings,
                                o.problem.known_gradients, o.problem.known_labels, o.problem.known_scale);
  // Only L_t remains: the true model's residuals on the known samples.
  const Tensor pk = o.label.forward(o.problem.known_embeddings);
  double lt = 0.0;
  for (std::size_t j = 0; j < 3; ++j) lt += (pk[j] - o.problem.known_labels[j]) * (pk[j] - o.problem.known_labels[j]);
  CHECK(scalar(h, perfect) == doctest::Approx(lt).epsilon(1e-12));
}

TEST_CASE("triplet loss: examples") {
  Graph g;
  const Tensor e = Tensor::from_rows({{0}, {1}, {5}});
  auto flat = triplet_loss(g, e, g.constant(Tensor::column(std::vector<double>{2, 2, 2})), 0.0);
  CHECK(scalar(g, flat.value) == 0.0);
  CHECK(flat.groups == 1);
  auto inactive = triplet_loss(g, e, g.constant(Tensor::column(std::vector<double>{0, 1, 10})), 0.0);
  CHECK(scalar(g, inactive.value) == 0.0);
  auto active = triplet_loss(g, e, g.constant(Tensor::column(std::vector<double>{0, 10, 1})), 0.0);
  CHECK(scalar(g, active.value) == 9.0);

  auto small = triplet_loss(g, Tensor::from_rows({{0}, {1}}), g.constant(Tensor::column(std::vector<double>{0, 1})), 0.5);
  CHECK(small.warning);
  CHECK(scalar(g, small.value) == 0.0);

  Rng rng(2);
  auto five = triplet_loss(g, random_matrix(rng, 5, 3), g.constant(Tensor::column(random_vector(rng, 5))), 0.1);
  CHECK(five.groups == 10);
}

TEST_CASE("total loss: examples") {
  Graph g;
  auto c = [&](double v) { return g.constant(Tensor::scalar(v)); };
  CHECK(scalar(g, total_loss(g, c(1), c(2), c(3), std::nullopt, 0.0, 0.0, 0.0)) == 1.0);
  CHECK(scalar(g, total_loss(g, c(0), c(0), c(0), c(0), 1.0, 0.005, 1.0)) == 0.0);
  CHECK(scalar(g, total_loss(g, c(1), c(2), c(3), std::nullopt, 1.0, 0.005, 0.0)) == doctest::Approx(3.015));
  CHECK(scalar(g, total_loss(g, c(1), c(2), c(3), c(4), 1.0, 0.005, 0.5)) == doctest::Approx(5.015));
}

TEST_CASE("total loss: dummy-label gradient matches finite differences (tanh surrogate, L2)") {
  Observed o = observe(21, LossKind::kL2, 3, Activation::kTanh);
  Rng rng(22);
  Mlp surr(MlpConfig::fc(3, 6, 12, 1, Activation::kTanh), rng);
  Tensor z = Tensor::column(random_vector(rng, 5));
  auto build = [&](Graph& g, NodeId zn) {
    std::vector<NodeId> b;
    auto w = leaves(g, surr, false, b);
    auto s = surrogate_gradient(g, w, b, Activation::kTanh, LossKind::kL2, g.constant(o.problem.embeddings), zn,
                                o.problem.sample_scale);
    auto lg = gradient_distance_loss(g, g.constant(o.problem.gradients), s.gradient);
    auto lt = accuracy_loss(g, s.forward.output, zn);
    auto lk = knowledge_loss(g, w, b, Activation::kTanh, LossKind::kL2, o.problem.known_embeddings,
                             o.problem.known_gradients, o.problem.known_labels, o.problem.known_scale);
    auto tr = triplet_loss(g, o.problem.embeddings, zn, 0.1).value;
    return total_loss(g, lg, lt, lk, tr, 1.0, 0.5, 0.3);
  };
  auto value = [&]() {
    Graph g;
    return g.value(build(g, g.constant(z))).item();
  };
  Graph g;
  auto zn = g.input(z);
  auto grads = g.backward(build(g, zn), {zn});
  CHECK(relative_error(grads.at(zn).data(), central_difference(z, value)) < 1e-5);
}

TEST_CASE("principal direction of a rank-one stack") {
  const std::vector<double> u{0.6, -0.8, 0.0};
  Tensor rows = Tensor::matrix(4, 3);
  const double c[] = {2.0, -1.0, 0.5, -3.0};
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) rows.at(i, j) = c[i] * u[j];
  }
  const auto v = principal_direction(rows);
  const double dot = v[0] * u[0] + v[1] * u[1] + v[2] * u[2];
  CHECK(std::abs(dot) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("closed-form inversion oracle recovers the labels for any w") {
  for (double scale : {0.01, 1.0, 100.0}) {
    InversionInstance inst = make_inversion_instance(5, 5, 1, scale);
    for (std::size_t i = 0; i < 5; ++i) CHECK(inst.closed_form[i] == doctest::Approx(inst.truth[i]).epsilon(1e-9));
  }
}

TEST_CASE("run_attack: linear L2 model converges to the closed-form inversion") {
  InversionInstance inst = make_inversion_instance(17);
  AttackInit init;
  init.surrogate = inst.label;
  init.freeze_surrogate = true;
  AttackResult r = run_attack(inst.problem, inversion_attack_config(4, 17), inst.truth, init);
  for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(r.inferred_labels[i] - inst.closed_form[i]) < 1e-3);
  CHECK(*r.alv < 1e-3);
}

// Labels carry noise, so L_t and the known-sample fit in L_k are not zero at
// the truth; the gradient term is. With a trainable surrogate L_g alone does
// not pin the labels down (Adam walks along a flat valley), so the surrogate
// is frozen here.
TEST_CASE("run_attack: true labels and frozen true surrogate are a fixed point") {
  for (auto [loss, mode, k] : {std::tuple{LossKind::kL2, SignMode::kAligned, std::size_t{0}},
                               std::tuple{LossKind::kL2, SignMode::kAligned, std::size_t{4}},
                               std::tuple{LossKind::kL1, SignMode::kDummy, std::size_t{4}}}) {
    Observed o = observe(31, loss, k);
    AttackConfig c = quick_config(loss);
    c.sign_mode = mode;
    c.lambda1 = 0.0;
    c.iterations = 100;
    AttackInit init;
    init.dummy_labels = o.truth;
    init.surrogate = o.label;
    init.freeze_surrogate = true;
    AttackResult r = run_attack(o.problem, c, o.truth, init);
    CAPTURE(k);
    CHECK(r.trajectory.gradient.front() < 1e-20);
    CHECK(r.trajectory.gradient.back() < 1e-9);
    for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(r.inferred_labels[i] - o.truth[i]) < 1e-4);  // Adam jitter at eps scale
  }
}

TEST_CASE("run_attack: aligned signs are exact for a linear label model") {
  Rng rng(41);
  const std::size_t d = 6;
  Mlp label(MlpConfig{{d, 1}, Activation::kRelu}, rng);
  Tensor e = random_matrix(rng, 5, d), ek = random_matrix(rng, 4, d);
  const Tensor p = label.forward(e), pk = label.forward(ek);
  std::vector<double> y, yk;
  for (std::size_t i = 0; i < 5; ++i) y.push_back(p[i] + (i % 2 ? 0.05 : -0.05));
  for (std::size_t j = 0; j < 4; ++j) yk.push_back(pk[j] + (j % 2 ? 0.05 : -0.05));
  AttackProblem prob;
  prob.embeddings = e;
  prob.gradients = shared_gradient(label, e, y, LossKind::kL1);
  prob.sample_indices = {0, 1, 2, 3, 4};
  prob.sample_scale.assign(5, 0.2);
  prob.known_indices = {10, 11, 12, 13};
  prob.known_labels = yk;
  prob.known_embeddings = ek;
  prob.known_gradients = shared_gradient(label, ek, yk, LossKind::kL1);
  prob.known_scale.assign(4, 0.25);
  AttackConfig c = quick_config(LossKind::kL1, d);
  c.iterations = 5;
  AttackResult r = run_attack(prob, c, y);
  REQUIRE(r.l1_signs.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(r.l1_signs[i] == (p[i] > y[i] ? 1.0 : -1.0));
}

TEST_CASE("run_attack: determinism, trajectory length and non-negative terms") {
  Observed o = observe(51, LossKind::kL1, 4);
  AttackConfig c = quick_config(LossKind::kL1);
  c.lambda3 = 0.5;
  AttackResult a = run_attack(o.problem, c, o.truth);
  AttackResult b = run_attack(o.problem, c, o.truth);
  CHECK(a.inferred_labels == b.inferred_labels);
  CHECK(a.trajectory.total == b.trajectory.total);
  CHECK(a.trajectory.size() == c.iterations);
  for (const auto* series : {&a.trajectory.total, &a.trajectory.gradient, &a.trajectory.accuracy,
                             &a.trajectory.knowledge, &a.trajectory.triplet}) {
    CHECK(std::all_of(series->begin(), series->end(), [](double v) { return v >= 0.0; }));
  }
  CHECK(a.alv.has_value());
  CHECK_FALSE(run_attack(o.problem, c).alv.has_value());
}

TEST_CASE("run_attack: lambda2 = 0 ignores the known set") {
  for (LossKind loss : {LossKind::kL1, LossKind::kL2}) {
    Observed o = observe(61, loss, 4);
    AttackConfig c = quick_config(loss);
    c.lambda2 = 0.0;
    AttackResult base = run_attack(o.problem, c);
    AttackProblem changed = o.problem;
    std::reverse(changed.known_labels.begin(), changed.known_labels.end());
    for (double& y : changed.known_labels) y = 3.0 * y + 7.0;
    CHECK(run_attack(changed, c).inferred_labels == base.inferred_labels);
    AttackProblem none = o.problem;
    none.known_indices.clear();
    none.known_labels.clear();
    none.known_scale.clear();
    none.known_embeddings = Tensor();
    none.known_gradients = Tensor();
    CHECK(run_attack(none, c).inferred_labels == base.inferred_labels);
  }
}

TEST_CASE("run_attack: lambda3 = 0 ignores beta") {
  Observed o = observe(71, LossKind::kL1, 2);
  AttackConfig c = quick_config(LossKind::kL1);
  c.lambda3 = 0.0;
  c.beta = 0.0;
  const auto a = run_attack(o.problem, c).inferred_labels;
  c.beta = 5.0;
  CHECK(run_attack(o.problem, c).inferred_labels == a);
}

TEST_CASE("run_attack: non-finite loss aborts with the iteration") {
  Observed o = observe(81, LossKind::kL2, 0);
  o.problem.gradients.at(0, 0) = 1e300;
  AttackConfig c = quick_config(LossKind::kL2);
  try {
    run_attack(o.problem, c);
    FAIL("expected AttackDiverged");
  } catch (const AttackDiverged& e) {
    CHECK(e.iteration() == 0);
    CHECK(std::string(e.what()).find("iteration 0") != std::string::npos);
  }
}

TEST_CASE("config validation") {
  AttackConfig c;
  c.lambda1 = -1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = AttackConfig{};
  c.iterations = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK(parse_sign_mode(to_string(SignMode::kDummy)) == SignMode::kDummy);
  CHECK(parse_label_space(to_string(LabelSpace::kRaw)) == LabelSpace::kRaw);
  CHECK_THROWS_AS(parse_label_space("bogus"), std::invalid_argument);
}

TEST_CASE("assemble_problem: known samples come from the log, errors name the sample") {
  GradientLog log(2);
  log.append({0, 0, {0, 1, 2}, Tensor::matrix(3, 2, 1.0), Tensor::matrix(3, 2, 0.5)});
  log.append({0, 1, {3, 4}, Tensor::matrix(2, 2, 2.0), Tensor::matrix(2, 2, 0.25)});
  const std::vector<std::size_t> known{3};
  const std::vector<double> labels{9.0};
  AttackProblem p = assemble_problem(log, 0, known, labels);
  CHECK(p.size() == 3);
  CHECK(p.known_gradients == Tensor::matrix(1, 2, 0.25));
  CHECK(p.known_scale == std::vector<double>{0.5});
  CHECK(p.sample_scale == std::vector<double>(3, 1.0 / 3.0));

  const std::vector<std::size_t> missing{42};
  CHECK_THROWS_WITH_AS(assemble_problem(log, 0, missing, labels), doctest::Contains("42"), MissingFromLog);
  const std::vector<std::size_t> clash{1};
  CHECK_THROWS_AS(assemble_problem(log, 0, clash, labels), std::invalid_argument);
  CHECK(candidate_records(log, 0, known) == std::vector<std::size_t>{0});
}

TEST_CASE("baseline: needs known samples; zero budget is an untrained guess") {
  Observed o = observe(91, LossKind::kL1, 4);
  for (double& y : o.truth) y += 20.0;  // keep AER well defined
  for (double& y : o.problem.known_labels) y += 20.0;
  BaselineConfig b;
  b.surrogate = MlpConfig::fc(3, 6, 12, 1);
  b.epochs = 0;
  AttackResult r = run_baseline(o.problem, b, o.truth);
  CHECK(*r.aer > 0.3);
  CHECK(r.trajectory.size() == 0);

  AttackProblem none = o.problem;
  none.known_indices.clear();
  none.known_labels.clear();
  none.known_scale.clear();
  CHECK_THROWS_AS(run_baseline(none, b), std::invalid_argument);
}

TEST_CASE("baseline: the whole training set known gives a target-like error") {
  ExperimentConfig cfg;
  const Dataset ds = build_dataset(cfg);
  TrainedTarget t = train_target(cfg, ds, repeat_seed(cfg.seed, 0));
  const auto& log = t.result.log;
  const std::size_t last = *log.last_epoch();
  const std::size_t rec = log.steps_in_epoch(last).front();
  const auto& attacked = log.records()[rec].sample_indices;
  std::vector<std::size_t> known;
  std::vector<double> labels;
  for (std::size_t id : t.split.train) {
    if (std::find(attacked.begin(), attacked.end(), id) == attacked.end()) {
      known.push_back(id);
      labels.push_back(ds.labels[id]);
    }
  }
  AttackProblem p = assemble_problem(log, rec, known, labels);
  std::vector<double> truth;
  for (std::size_t id : attacked) truth.push_back(ds.labels[id]);
  BaselineConfig b = effective_baseline(cfg);
  b.epochs = 60;
  AttackResult r = run_baseline(p, b, truth);

  // Target's own relative error on the test split.
  const Tensor pred = t.result.model.predict(gather_rows(t.data.data.features, t.split.test));
  std::vector<double> test_truth;
  for (std::size_t id : t.split.test) test_truth.push_back(ds.labels[id]);
  const double target_aer = aer(pred.data(), test_truth);
  MESSAGE("baseline AER " << *r.aer << ", target test AER " << target_aer);
  CHECK(*r.aer < 2.5 * target_aer + 0.02);
}

TEST_CASE("result JSON echoes the config and metrics") {
  Observed o = observe(101, LossKind::kL1, 2);
  AttackConfig c = quick_config(LossKind::kL1);
  AttackResult r = run_attack(o.problem, c, o.truth);
  std::ostringstream os;
  write_result_json(os, r, &c, nullptr);
  auto j = nlohmann::json::parse(os.str());
  CHECK(j["method"] == "attack");
  CHECK(j["config"]["iterations"] == c.iterations);
  CHECK(j["trajectory"]["total"].size() == c.iterations);
  CHECK(j["alv"].get<double>() == doctest::Approx(*r.alv));
}
