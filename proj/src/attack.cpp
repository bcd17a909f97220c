// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

#include "splitleak/attack.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "splitleak/metrics.hpp"
#include "splitleak/random.hpp"

namespace splitleak {

std::string_view to_string(LabelSpace s) { return s == LabelSpace::kRaw ? "raw" : "normalized"; }

LabelSpace parse_label_space(std::string_view s) {
  if (s == "raw") return LabelSpace::kRaw;
  if (s == "normalized") return LabelSpace::kNormalized;
  throw std::invalid_argument("unknown label space '" + std::string(s) + "' (expected raw|normalized)");
}

std::string_view to_string(SignMode m) { return m == SignMode::kDummy ? "dummy" : "aligned"; }

SignMode parse_sign_mode(std::string_view s) {
  if (s == "dummy") return SignMode::kDummy;
  if (s == "aligned") return SignMode::kAligned;
  throw std::invalid_argument("unknown sign mode '" + std::string(s) + "' (expected dummy|aligned)");
}

void AttackConfig::validate() const {
  if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0 || beta < 0.0) {
    throw std::invalid_argument("AttackConfig: lambda1, lambda2, lambda3 and beta must be >= 0");
  }
  if (iterations == 0) throw std::invalid_argument("AttackConfig: iterations must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("AttackConfig: batch_size must be >= 1");
  if (!(optimizer.lr > 0.0)) throw std::invalid_argument("AttackConfig: learning rate must be > 0");
  surrogate.validate();
  if (surrogate.output_width() != 1) throw std::invalid_argument("AttackConfig: surrogate must output one value");
}

void AttackProblem::validate() const {
  const std::size_t n = sample_indices.size();
  if (n == 0) throw ShapeError("AttackProblem: no attacked samples");
  const std::size_t cut = embeddings.cols();
  if (embeddings.shape() != Shape{n, cut} || gradients.shape() != Shape{n, cut} || sample_scale.size() != n) {
    throw ShapeError("AttackProblem: attacked embeddings " + shape_to_string(embeddings.shape()) + ", gradients " +
                     shape_to_string(gradients.shape()) + " for " + std::to_string(n) + " samples");
  }
  const std::size_t k = known_indices.size();
  if (known_labels.size() != k || known_scale.size() != k) {
    throw ShapeError("AttackProblem: " + std::to_string(k) + " known samples but " +
                     std::to_string(known_labels.size()) + " labels");
  }
  if (k > 0 && (known_embeddings.shape() != Shape{k, cut} || known_gradients.shape() != Shape{k, cut})) {
    throw ShapeError("AttackProblem: known embeddings/gradients must be " + shape_to_string(Shape{k, cut}));
  }
  for (auto id : known_indices) {
    if (std::find(sample_indices.begin(), sample_indices.end(), id) != sample_indices.end()) {
      throw std::invalid_argument("AttackProblem: sample " + std::to_string(id) + " is both known and attacked");
    }
  }
}

AttackProblem assemble_problem(const GradientLog& log, std::size_t record, std::span<const std::size_t> known_indices,
                               std::span<const double> known_labels) {
  if (record >= log.size()) {
    throw std::out_of_range("assemble_problem: record " + std::to_string(record) + " out of range (log has " +
                            std::to_string(log.size()) + ")");
  }
  if (known_indices.size() != known_labels.size()) {
    throw std::invalid_argument("assemble_problem: known indices and labels differ in length");
  }
  const auto& rec = log.records()[record];
  AttackProblem p;
  p.sample_indices = rec.sample_indices;
  p.embeddings = rec.embeddings;
  p.gradients = rec.gradients;
  p.sample_scale.assign(rec.batch_size(), 1.0 / static_cast<double>(rec.batch_size()));

  const std::size_t k = known_indices.size();
  const std::size_t cut = log.cut_dim();
  std::vector<double> emb, grad;
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t id = known_indices[j];
    if (std::find(p.sample_indices.begin(), p.sample_indices.end(), id) != p.sample_indices.end()) {
      throw std::invalid_argument("assemble_problem: known sample " + std::to_string(id) +
                                  " is part of the attacked batch");
    }
    auto pos = log.nearest_step_with(id, record);
    if (!pos) throw MissingFromLog("known sample " + std::to_string(id) + " does not appear in the gradient log");
    const auto& kr = log.records()[*pos];
    const auto it = std::find(kr.sample_indices.begin(), kr.sample_indices.end(), id);
    const auto row = static_cast<std::size_t>(it - kr.sample_indices.begin());
    auto e = kr.embeddings.row(row);
    auto g = kr.gradients.row(row);
    emb.insert(emb.end(), e.begin(), e.end());
    grad.insert(grad.end(), g.begin(), g.end());
    p.known_indices.push_back(id);
    p.known_labels.push_back(known_labels[j]);
    p.known_scale.push_back(1.0 / static_cast<double>(kr.batch_size()));
  }
  if (k > 0) {
    p.known_embeddings = Tensor(Shape{k, cut}, std::move(emb));
    p.known_gradients = Tensor(Shape{k, cut}, std::move(grad));
  }
  p.validate();
  return p;
}

std::vector<std::size_t> candidate_records(const GradientLog& log, std::size_t epoch,
                                           std::span<const std::size_t> exclude) {
  std::vector<std::size_t> out;
  for (std::size_t pos : log.steps_in_epoch(epoch)) {
    const auto& ids = log.records()[pos].sample_indices;
    const bool clash = std::any_of(ids.begin(), ids.end(), [&](std::size_t i) {
      return std::find(exclude.begin(), exclude.end(), i) != exclude.end();
    });
    if (!clash) out.push_back(pos);
  }
  return out;
}

NodeId gradient_distance_loss(Graph& g, NodeId observed, NodeId surrogate) {
  if (!g.value(observed).same_shape(g.value(surrogate))) {
    throw ShapeError("gradient_distance_loss: observed " + shape_to_string(g.value(observed).shape()) +
                     " vs surrogate " + shape_to_string(g.value(surrogate).shape()));
  }
  return g.sum_squares(g.sub(observed, surrogate));
}

NodeId accuracy_loss(Graph& g, NodeId predictions, NodeId dummy_labels) {
  return g.sum_squares(g.sub(predictions, dummy_labels));
}

SurrogateNodes surrogate_gradient(Graph& g, const std::vector<NodeId>& weights, const std::vector<NodeId>& biases,
                                  Activation activation, LossKind loss, NodeId embeddings, NodeId labels,
                                  std::span<const double> sample_scale, std::span<const double> l1_sign) {
  SurrogateNodes s;
  s.forward = build_mlp_forward(g, weights, biases, activation, embeddings);
  NodeId scale = g.constant(Tensor::column(sample_scale));
  std::optional<NodeId> sign;
  if (!l1_sign.empty()) sign = g.constant(Tensor::column(l1_sign));
  s.gradient = embedding_gradient_as_graph(g, s.forward, loss, labels, scale, sign);
  return s;
}

NodeId knowledge_loss(Graph& g, const std::vector<NodeId>& weights, const std::vector<NodeId>& biases,
                      Activation activation, LossKind loss, const Tensor& known_embeddings,
                      const Tensor& known_gradients, std::span<const double> known_labels,
                      std::span<const double> known_scale, std::span<const double> l1_sign,
                      std::optional<NodeId> margin) {
  if (known_labels.empty()) return g.constant(Tensor::scalar(0.0));
  NodeId e = g.constant(known_embeddings);
  NodeId y = g.constant(Tensor::column(known_labels));
  SurrogateNodes s = surrogate_gradient(g, weights, biases, activation, loss, e, y, known_scale, l1_sign);
  NodeId lg = gradient_distance_loss(g, g.constant(known_gradients), s.gradient);
  NodeId pred = margin ? offset_predictions(g, s.forward.output, l1_sign, *margin) : s.forward.output;
  NodeId lt = accuracy_loss(g, pred, y);
  return g.add(lg, lt);
}

NodeId offset_predictions(Graph& g, NodeId predictions, std::span<const double> sign, NodeId margin) {
  return g.sub(predictions, g.matmul(g.constant(Tensor::column(sign)), margin));
}

TripletLoss triplet_loss(Graph& g, const Tensor& embeddings, NodeId dummy_labels, double beta) {
  const std::size_t n = embeddings.rows();
  if (g.value(dummy_labels).size() != n) {
    throw ShapeError("triplet_loss: " + std::to_string(g.value(dummy_labels).size()) + " labels for " +
                     std::to_string(n) + " embeddings");
  }
  TripletLoss out;
  if (n < 3) {
    out.value = g.constant(Tensor::scalar(0.0));
    out.warning = true;
    return out;
  }
  auto dist2 = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t c = 0; c < embeddings.cols(); ++c) {
      const double d = embeddings.at(a, c) - embeddings.at(b, c);
      s += d * d;
    }
    return s;
  };
  const std::size_t t = n * (n - 1) * (n - 2) / 6;
  Tensor a12 = Tensor::matrix(t, n), a13 = Tensor::matrix(t, n), sign = Tensor::matrix(t, 1);
  std::size_t row = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      for (std::size_t k = j + 1; k < n; ++k, ++row) {
        a12.at(row, i) = 1.0;
        a12.at(row, j) = -1.0;
        a13.at(row, i) = 1.0;
        a13.at(row, k) = -1.0;
        sign.at(row, 0) = dist2(i, j) < dist2(i, k) ? 1.0 : -1.0;
      }
    }
  }
  NodeId d12 = g.abs(g.matmul(g.constant(std::move(a12)), dummy_labels));
  NodeId d13 = g.abs(g.matmul(g.constant(std::move(a13)), dummy_labels));
  NodeId inner = g.add_scalar(g.mul(g.constant(std::move(sign)), g.sub(d12, d13)), beta);
  out.value = g.sum(g.relu(inner));
  out.groups = t;
  return out;
}

std::vector<double> principal_direction(const Tensor& rows) {
  const std::size_t n = rows.rows(), d = rows.cols();
  if (n == 0 || d == 0) throw ShapeError("principal_direction: empty matrix");
  // Gram matrix and a start vector along the longest row.
  std::vector<double> gram(d * d, 0.0);
  std::size_t longest = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      norm += rows.at(i, a) * rows.at(i, a);
      for (std::size_t b = 0; b < d; ++b) gram[a * d + b] += rows.at(i, a) * rows.at(i, b);
    }
    if (norm > best) best = norm, longest = i;
  }
  std::vector<double> v(d), next(d);
  for (std::size_t a = 0; a < d; ++a) v[a] = rows.at(longest, a);
  auto normalize = [](std::vector<double>& x) {
    double s = 0.0;
    for (double t : x) s += t * t;
    s = std::sqrt(s);
    if (s == 0.0) return false;
    for (double& t : x) t /= s;
    return true;
  };
  if (!normalize(v)) {
    v.assign(d, 0.0);
    v[0] = 1.0;
    return v;
  }
  for (int it = 0; it < 500; ++it) {
    for (std::size_t a = 0; a < d; ++a) {
      double s = 0.0;
      for (std::size_t b = 0; b < d; ++b) s += gram[a * d + b] * v[b];
      next[a] = s;
    }
    if (!normalize(next)) break;
    double change = 0.0;
    for (std::size_t a = 0; a < d; ++a) change = std::max(change, std::abs(next[a] - v[a]));
    v.swap(next);
    if (change < 1e-13) break;
  }
  return v;
}

NodeId total_loss(Graph& g, NodeId lg, NodeId lt, NodeId lk, std::optional<NodeId> ltriplet, double lambda1,
                  double lambda2, double lambda3) {
  NodeId total = g.add(lg, g.add(g.scale(lt, lambda1), g.scale(lk, lambda2)));
  if (ltriplet) total = g.add(total, g.scale(*ltriplet, lambda3));
  return total;
}

void Trajectory::push(const LossTerms& t) {
  total.push_back(t.total);
  gradient.push_back(t.gradient);
  accuracy.push_back(t.accuracy);
  knowledge.push_back(t.knowledge);
  triplet.push_back(t.triplet);
}

void AttackResult::score(std::span<const double> truth) {
  if (truth.empty()) return;
  alv = splitleak::alv(inferred_labels, truth);
  aer = splitleak::aer(inferred_labels, truth);
}

namespace {

std::string describe(std::size_t iteration, const LossTerms& t) {
  std::ostringstream os;
  os << "attack loss became non-finite at iteration " << iteration << " (total " << t.total << ", gradient "
     << t.gradient << ", accuracy " << t.accuracy << ", knowledge " << t.knowledge << ", triplet " << t.triplet
     << ")";
  return os.str();
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

AttackDiverged::AttackDiverged(std::size_t iteration, LossTerms terms)
    : std::runtime_error(describe(iteration, terms)), iteration_(iteration), terms_(terms) {}

AttackResult run_attack(const AttackProblem& problem, const AttackConfig& config, std::span<const double> truth,
                        const AttackInit& init) {
  const auto start = std::chrono::steady_clock::now();
  config.validate();
  problem.validate();
  const std::size_t n = problem.size();
  if (config.surrogate.input_width() != problem.cut_dim()) {
    throw ShapeError("run_attack: surrogate input width " + std::to_string(config.surrogate.input_width()) +
                     " != cut dimension " + std::to_string(problem.cut_dim()));
  }
  if (!truth.empty() && truth.size() != n) {
    throw ShapeError("run_attack: " + std::to_string(truth.size()) + " truth labels for " + std::to_string(n) +
                     " samples");
  }

  // Units.
  double mu = 0.0, sigma = 1.0;
  const std::size_t k = problem.known_count();
  const bool normalized = config.label_space == LabelSpace::kNormalized;
  const bool use_knowledge = config.lambda2 > 0.0 && k > 0;
  if (normalized && use_knowledge) {
    Stat s = mean_std(problem.known_labels);
    mu = s.mean;
    if (k > 1 && s.std > 1e-12) sigma = s.std;
  }
  const double label_power = config.loss == LossKind::kL1 ? sigma : sigma * sigma;
  auto to_units = [&](const Tensor& grads, std::span<const double> scale) {
    Tensor t = grads;
    for (std::size_t i = 0; i < t.rows(); ++i) {
      const double f = (normalized ? scale[i] : 1.0) * label_power;
      for (std::size_t c = 0; c < t.cols(); ++c) t.at(i, c) /= f;
    }
    return t;
  };
  const Tensor observed = to_units(problem.gradients, problem.sample_scale);
  const Tensor known_observed = k > 0 ? to_units(problem.known_gradients, problem.known_scale) : Tensor();
  const std::vector<double> unit_n(n, 1.0), unit_k(k, 1.0);
  const std::span<const double> scale_n = normalized ? std::span<const double>(unit_n) : problem.sample_scale;
  const std::span<const double> scale_k = normalized ? std::span<const double>(unit_k) : problem.known_scale;
  std::vector<double> known_z;
  for (double y : problem.known_labels) known_z.push_back((y - mu) / sigma);

  // Aligned L1 signs: rel holds signs relative to the principal direction,
  // gamma the global flip (0 = decided every iteration).
  const bool aligned = config.loss == LossKind::kL1 && config.sign_mode == SignMode::kAligned;
  std::vector<double> rel_n, rel_k;
  double gamma = 0.0;
  if (aligned) {
    Tensor stacked = observed;
    if (use_knowledge) {
      std::vector<double> all(observed.data().begin(), observed.data().end());
      all.insert(all.end(), known_observed.data().begin(), known_observed.data().end());
      stacked = Tensor(Shape{n + k, problem.cut_dim()}, std::move(all));
    }
    const std::vector<double> v = principal_direction(stacked);
    auto project = [&](const Tensor& t, std::size_t i) {
      double s = 0.0;
      for (std::size_t c = 0; c < t.cols(); ++c) s += t.at(i, c) * v[c];
      return s;
    };
    for (std::size_t i = 0; i < n; ++i) rel_n.push_back(project(observed, i) < 0.0 ? -1.0 : 1.0);
    if (use_knowledge) {
      for (std::size_t j = 0; j < k; ++j) rel_k.push_back(project(known_observed, j) < 0.0 ? -1.0 : 1.0);
    }
    if (use_knowledge && k >= 2) {
      // Labels grow along the Jacobian direction, so their correlation with
      // the embeddings' projections tells which way v points.
      std::vector<double> proj;
      for (std::size_t j = 0; j < k; ++j) proj.push_back(project(problem.known_embeddings, j));
      const double pm = std::accumulate(proj.begin(), proj.end(), 0.0) / static_cast<double>(k);
      const double ym = std::accumulate(known_z.begin(), known_z.end(), 0.0) / static_cast<double>(k);
      double cov = 0.0;
      for (std::size_t j = 0; j < k; ++j) cov += (proj[j] - pm) * (known_z[j] - ym);
      gamma = cov < 0.0 ? -1.0 : 1.0;
    }
  }
  auto flipped = [](const std::vector<double>& rel, double gm) {
    std::vector<double> out(rel);
    for (double& x : out) x *= gm;
    return out;
  };

  Rng init_rng(derive_seed(config.seed, "surrogate-init"));
  Mlp surrogate = init.surrogate ? *init.surrogate : Mlp(config.surrogate, init_rng);
  if (surrogate.config().layer_widths != config.surrogate.layer_widths) {
    throw ShapeError("run_attack: initial surrogate does not match the configured architecture");
  }
  if (init.surrogate) {
    // Raw-unit predictions p become (p - mu) / sigma.
    Tensor& wl = surrogate.weights().back();
    Tensor& bl = surrogate.biases().back();
    for (double& v : wl.data()) v /= sigma;
    for (double& v : bl.data()) v = (v - mu) / sigma;
  }
  if (init.freeze_surrogate && !init.surrogate) {
    throw std::invalid_argument("run_attack: freeze_surrogate needs an initial surrogate");
  }
  Tensor z = Tensor::matrix(n, 1);
  if (init.dummy_labels) {
    if (init.dummy_labels->size() != n) throw ShapeError("run_attack: initial dummy labels have wrong length");
    for (std::size_t i = 0; i < n; ++i) z[i] = ((*init.dummy_labels)[i] - mu) / sigma;
  } else {
    Rng dummy_rng(derive_seed(config.seed, "dummy-labels"));
    for (std::size_t i = 0; i < n; ++i) z[i] = dummy_rng.normal();
  }

  AttackResult result;
  result.method = "attack";
  result.sample_indices = problem.sample_indices;
  result.label_mean = mu;
  result.label_scale = sigma;
  result.trajectory.total.reserve(config.iterations);

  const bool use_margin = aligned && config.margin && use_knowledge;
  Tensor margin = Tensor::matrix(1, 1);

  Adam adam(config.optimizer);
  const bool use_triplet = config.lambda3 > 0.0;
  const Activation act = config.surrogate.activation;

  for (std::size_t it = 0; it < config.iterations; ++it) {
    Graph g;
    std::vector<NodeId> w, b;
    for (std::size_t l = 0; l < surrogate.weights().size(); ++l) {
      w.push_back(g.input(surrogate.weights()[l]));
      b.push_back(g.input(surrogate.biases()[l]));
    }
    NodeId zn = g.input(z);
    NodeId e = g.constant(problem.embeddings);
    double gm = gamma;
    SurrogateNodes s = surrogate_gradient(g, w, b, act, config.loss, e, zn, scale_n, rel_n);
    NodeId sg = s.gradient;
    if (aligned && gamma == 0.0) {
      // Flip that brings the surrogate gradients closer to the observed ones.
      const Tensor& cur = g.value(s.gradient);
      double dot = 0.0;
      for (std::size_t q = 0; q < cur.size(); ++q) dot += cur[q] * observed[q];
      gm = dot < 0.0 ? -1.0 : 1.0;
    }
    if (aligned) {
      sg = g.scale(sg, gm);
      result.l1_signs = flipped(rel_n, gm);
    }
    NodeId lg = gradient_distance_loss(g, g.constant(observed), sg);
    std::optional<NodeId> mn;
    if (use_margin) mn = g.input(margin);
    NodeId lt = accuracy_loss(g, mn ? offset_predictions(g, s.forward.output, result.l1_signs, *mn) : s.forward.output, zn);
    const std::vector<double> signs_k = aligned ? flipped(rel_k, gm) : std::vector<double>{};
    NodeId lk = use_knowledge ? knowledge_loss(g, w, b, act, config.loss, problem.known_embeddings, known_observed,
                                               known_z, scale_k, signs_k, mn)
                              : g.constant(Tensor::scalar(0.0));
    std::optional<NodeId> ltr;
    if (use_triplet) {
      TripletLoss tl = triplet_loss(g, problem.embeddings, zn, config.beta);
      result.triplet_warning = tl.warning;
      ltr = tl.value;
    }
    NodeId total = total_loss(g, lg, lt, lk, ltr, config.lambda1, config.lambda2, config.lambda3);

    LossTerms terms{g.value(total).item(), g.value(lg).item(), g.value(lt).item(), g.value(lk).item(),
                    ltr ? g.value(*ltr).item() : 0.0};
    if (!std::isfinite(terms.total)) throw AttackDiverged(it, terms);
    result.trajectory.push(terms);

    std::vector<NodeId> targets;
    std::vector<Tensor*> params;
    if (!init.freeze_surrogate) {
      for (std::size_t l = 0; l < w.size(); ++l) {
        targets.push_back(w[l]);
        targets.push_back(b[l]);
      }
      params = surrogate.parameters();
    }
    targets.push_back(zn);
    if (mn) targets.push_back(*mn);
    GradientMap grads = g.backward(total, targets);
    std::vector<Tensor> gs;
    gs.reserve(targets.size());
    for (NodeId t : targets) gs.push_back(grads.at(t));
    params.push_back(&z);
    if (mn) params.push_back(&margin);
    adam.step(params, gs);
  }

  for (std::size_t i = 0; i < n; ++i) result.inferred_labels.push_back(mu + sigma * z[i]);
  result.margin = sigma * margin[0];
  result.score(truth);
  result.wall_ms = elapsed_ms(start);
  return result;
}

void BaselineConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("BaselineConfig: batch_size must be >= 1");
  if (!(optimizer.lr > 0.0)) throw std::invalid_argument("BaselineConfig: learning rate must be > 0");
  surrogate.validate();
  if (surrogate.output_width() != 1) throw std::invalid_argument("BaselineConfig: surrogate must output one value");
}

AttackResult run_baseline(const AttackProblem& problem, const BaselineConfig& config, std::span<const double> truth) {
  const auto start = std::chrono::steady_clock::now();
  config.validate();
  problem.validate();
  const std::size_t k = problem.known_count();
  if (k == 0) throw std::invalid_argument("run_baseline: needs at least one known sample");
  if (config.surrogate.input_width() != problem.cut_dim()) {
    throw ShapeError("run_baseline: surrogate input width " + std::to_string(config.surrogate.input_width()) +
                     " != cut dimension " + std::to_string(problem.cut_dim()));
  }
  Rng rng(derive_seed(config.seed, "baseline-surrogate"));
  Mlp surrogate(config.surrogate, rng);
  Adam adam(config.optimizer);

  AttackResult result;
  result.method = "baseline";
  result.sample_indices = problem.sample_indices;

  for (std::size_t ep = 0; ep < config.epochs; ++ep) {
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t s = 0; s < k; s += config.batch_size, ++batches) {
      const std::size_t e = std::min(k, s + config.batch_size);
      std::vector<std::size_t> rows(e - s);
      std::iota(rows.begin(), rows.end(), s);
      Graph g;
      NodeId x = g.constant(gather_rows(problem.known_embeddings, rows));
      MlpNodes m = surrogate.attach(g, x, true);
      NodeId y = g.constant(Tensor::column(std::span<const double>(problem.known_labels).subspan(s, e - s)));
      NodeId loss = g.mean(g.square(g.sub(m.output, y)));
      const double lv = g.value(loss).item();
      if (!std::isfinite(lv)) throw AttackDiverged(ep, LossTerms{lv, 0.0, lv, 0.0, 0.0});
      epoch_loss += lv;
      auto targets = parameter_nodes(m);
      GradientMap grads = g.backward(loss, targets);
      std::vector<Tensor> gs;
      for (NodeId t : targets) gs.push_back(grads.at(t));
      auto params = surrogate.parameters();
      adam.step(params, gs);
    }
    const double mean_loss = epoch_loss / static_cast<double>(batches);
    result.trajectory.push(LossTerms{mean_loss, 0.0, mean_loss, 0.0, 0.0});
  }

  Tensor pred = surrogate.forward(problem.embeddings);
  result.inferred_labels.assign(pred.data().begin(), pred.data().end());
  result.score(truth);
  result.wall_ms = elapsed_ms(start);
  return result;
}

namespace {

nlohmann::json mlp_config_json(const MlpConfig& c) {
  return {{"layer_widths", c.layer_widths}, {"activation", std::string(to_string(c.activation))}};
}

}  // namespace

void write_result_json(std::ostream& out, const AttackResult& r, const AttackConfig* ac, const BaselineConfig* bc) {
  nlohmann::json j;
  j["method"] = r.method;
  if (ac) {
    j["config"] = {{"lambda1", ac->lambda1},
                   {"lambda2", ac->lambda2},
                   {"lambda3", ac->lambda3},
                   {"beta", ac->beta},
                   {"iterations", ac->iterations},
                   {"batch_size", ac->batch_size},
                   {"lr", ac->optimizer.lr},
                   {"loss", std::string(to_string(ac->loss))},
                   {"label_space", std::string(to_string(ac->label_space))},
                   {"sign_mode", std::string(to_string(ac->sign_mode))},
                   {"margin", ac->margin},
                   {"surrogate", mlp_config_json(ac->surrogate)},
                   {"known_indices", ac->known_indices},
                   {"seed", ac->seed}};
  }
  if (bc) {
    j["config"] = {{"epochs", bc->epochs},
                   {"batch_size", bc->batch_size},
                   {"lr", bc->optimizer.lr},
                   {"surrogate", mlp_config_json(bc->surrogate)},
                   {"seed", bc->seed}};
  }
  j["sample_indices"] = r.sample_indices;
  j["inferred_labels"] = r.inferred_labels;
  j["label_mean"] = r.label_mean;
  j["label_scale"] = r.label_scale;
  j["triplet_warning"] = r.triplet_warning;
  if (!r.l1_signs.empty()) j["l1_signs"] = r.l1_signs;
  j["margin"] = r.margin;
  j["trajectory"] = {{"total", r.trajectory.total},
                     {"gradient", r.trajectory.gradient},
                     {"accuracy", r.trajectory.accuracy},
                     {"knowledge", r.trajectory.knowledge},
                     {"triplet", r.trajectory.triplet}};
  j["alv"] = r.alv ? nlohmann::json(*r.alv) : nlohmann::json(nullptr);
  j["aer"] = r.aer ? nlohmann::json(*r.aer) : nlohmann::json(nullptr);
  j["wall_ms"] = r.wall_ms;
  out << j.dump(2) << '\n';
}

}  // namespace splitleak
