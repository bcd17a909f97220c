// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

// Label inference from shared cut-layer gradients.
//
// The attacker (user party) fits a surrogate label model and a vector of
// dummy labels so that the gradients the surrogate would have produced
// match the gradients it actually received. Samples whose labels it
// already knows anchor the surrogate.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "splitleak/adam.hpp"
#include "splitleak/graph.hpp"
#include "splitleak/mlp.hpp"
#include "splitleak/split_protocol.hpp"

namespace splitleak {

/// Units the attack works in.
///
/// kRaw: dummies are labels and gradients are compared as exchanged, batch
/// mean factor included. kNormalized: gradients are compared per sample
/// (the 1/batch factor divided out) and labels are standardized with the
/// mean and sample std of the known labels; observed gradients are rescaled
/// to match and inferred labels mapped back. The label statistics fall back
/// to mu = 0, sigma = 1 when there is no known set or lambda2 = 0, so the
/// result never depends on the known set in that case.
enum class LabelSpace { kRaw, kNormalized };

std::string_view to_string(LabelSpace s);
LabelSpace parse_label_space(std::string_view s);

/// Where the surrogate's L1 loss derivative sign(p - y) comes from.
///
/// kDummy: the current dummy labels. kAligned: the observed gradients. The
/// label model's input Jacobians point (nearly) along one shared direction,
/// so each observed gradient is +-|dL/dp| times that direction and its sign
/// relative to the principal direction of all observed gradients gives the
/// sign up to one global flip. The flip is fixed by the correlation of the
/// known labels with their projections on that direction (lambda2 > 0, at
/// least two known samples), otherwise chosen each iteration to minimize
/// the gradient distance. Ignored for L2.
enum class SignMode { kDummy, kAligned };

std::string_view to_string(SignMode m);
SignMode parse_sign_mode(std::string_view s);

struct AttackConfig {
  double lambda1 = 1.0;
  double lambda2 = 2.0;
  double lambda3 = 0.0;
  double beta = 0.1;
  std::size_t iterations = 2000;
  std::size_t batch_size = 5;
  MlpConfig surrogate = MlpConfig::fc(3, 16, 64, 1, Activation::kRelu);
  LossKind loss = LossKind::kL1;
  AdamConfig optimizer{0.005, 0.9, 0.999, 1e-8};
  LabelSpace label_space = LabelSpace::kNormalized;
  SignMode sign_mode = SignMode::kAligned;
  /// Aligned signs with known samples: learn a margin m so labels are read
  /// as p - sign * m instead of p. With L1 the gradients carry which side of
  /// the prediction a label lies on but not how far; the known samples set
  /// the typical distance.
  bool margin = true;
  std::vector<std::size_t> known_indices;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Everything the attacker needs for one attacked group, all in raw units.
struct AttackProblem {
  std::vector<std::size_t> sample_indices;
  Tensor embeddings;                 // n x cut
  Tensor gradients;                  // n x cut, as observed
  std::vector<double> sample_scale;  // 1 / (size of the batch each row was exchanged in)

  std::vector<std::size_t> known_indices;
  std::vector<double> known_labels;
  Tensor known_embeddings;           // k x cut (unused when k = 0)
  Tensor known_gradients;
  std::vector<double> known_scale;

  std::size_t size() const { return sample_indices.size(); }
  std::size_t known_count() const { return known_indices.size(); }
  std::size_t cut_dim() const { return embeddings.cols(); }
  void validate() const;
};

class MissingFromLog : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Builds the problem for log record `record`. Known-sample gradients come
/// from the same record when the sample is in it, otherwise from the nearest
/// record containing it. Throws MissingFromLog naming a known sample that
/// never appears, and std::invalid_argument when a known sample is also an
/// attacked sample.
AttackProblem assemble_problem(const GradientLog& log, std::size_t record, std::span<const std::size_t> known_indices,
                               std::span<const double> known_labels);

/// Records of `epoch` that contain none of `exclude`.
std::vector<std::size_t> candidate_records(const GradientLog& log, std::size_t epoch,
                                           std::span<const std::size_t> exclude);

// Loss builders. All return scalar nodes.

/// Sum over rows of the squared L2 distance.
NodeId gradient_distance_loss(Graph& g, NodeId observed, NodeId surrogate);
/// Sum of (prediction - dummy)^2.
NodeId accuracy_loss(Graph& g, NodeId predictions, NodeId dummy_labels);

struct SurrogateNodes {
  MlpNodes forward;
  NodeId gradient;  // closed-form dL/dE of the surrogate
};

/// Attaches a surrogate evaluated on `embeddings` with labels `labels`. A
/// non-empty `l1_sign` replaces sign(p - y) for L1.
SurrogateNodes surrogate_gradient(Graph& g, const std::vector<NodeId>& weights, const std::vector<NodeId>& biases,
                                  Activation activation, LossKind loss, NodeId embeddings, NodeId labels,
                                  std::span<const double> sample_scale, std::span<const double> l1_sign = {});

/// L_g + L_t for known samples with their true labels (constants). Returns a
/// zero constant for an empty known set.
NodeId knowledge_loss(Graph& g, const std::vector<NodeId>& weights, const std::vector<NodeId>& biases,
                      Activation activation, LossKind loss, const Tensor& known_embeddings,
                      const Tensor& known_gradients, std::span<const double> known_labels,
                      std::span<const double> known_scale, std::span<const double> l1_sign = {},
                      std::optional<NodeId> margin = std::nullopt);

/// predictions - sign * margin, margin a 1 x 1 node.
NodeId offset_predictions(Graph& g, NodeId predictions, std::span<const double> sign, NodeId margin);

/// Unit vector along the top right singular vector of `rows` (power
/// iteration on rows^T rows). The sign is arbitrary but deterministic.
std::vector<double> principal_direction(const Tensor& rows);

struct TripletLoss {
  NodeId value;
  bool warning = false;  // batch < 3, loss is a zero constant
  std::size_t groups = 0;
};

/// Hinge over all 3-subsets (i < j < k, anchor i):
/// max(0, beta + s (|y_i - y_j| - |y_i - y_k|)), s = +1 when E_i is closer
/// to E_j than to E_k in L2, else -1.
TripletLoss triplet_loss(Graph& g, const Tensor& embeddings, NodeId dummy_labels, double beta);

struct LossTerms {
  double total = 0.0;
  double gradient = 0.0;
  double accuracy = 0.0;
  double knowledge = 0.0;
  double triplet = 0.0;
};

/// L_g + l1 L_t + l2 L_k + l3 L_triplet.
NodeId total_loss(Graph& g, NodeId lg, NodeId lt, NodeId lk, std::optional<NodeId> ltriplet, double lambda1,
                  double lambda2, double lambda3);

struct Trajectory {
  std::vector<double> total, gradient, accuracy, knowledge, triplet;
  std::size_t size() const { return total.size(); }
  void push(const LossTerms& t);
};

struct AttackResult {
  std::string method;  // "attack" or "baseline"
  std::vector<std::size_t> sample_indices;
  std::vector<double> inferred_labels;
  Trajectory trajectory;
  std::optional<double> alv;
  std::optional<double> aer;
  double wall_ms = 0.0;
  double label_mean = 0.0;   // mu of the label space used
  double label_scale = 1.0;  // sigma of the label space used
  std::vector<double> l1_signs;  // aligned sign mode: final signs of the attacked samples
  double margin = 0.0;           // learned margin, label units
  bool triplet_warning = false;

  void score(std::span<const double> truth);
};

class AttackDiverged : public std::runtime_error {
 public:
  AttackDiverged(std::size_t iteration, LossTerms terms);
  std::size_t iteration() const { return iteration_; }
  const LossTerms& terms() const { return terms_; }

 private:
  std::size_t iteration_;
  LossTerms terms_;
};

/// Optional starting point, mainly for tests. Values in raw label units; a
/// given surrogate predicts raw labels and is rescaled into the attack's
/// label units. `freeze_surrogate` keeps it fixed so only the dummy labels
/// (and the margin) move.
struct AttackInit {
  std::optional<std::vector<double>> dummy_labels;
  std::optional<Mlp> surrogate;
  bool freeze_surrogate = false;
};

/// Joint Adam optimization of surrogate parameters and dummy labels for
/// config.iterations steps. `truth` (raw units, aligned with the problem's
/// samples) only affects scoring.
AttackResult run_attack(const AttackProblem& problem, const AttackConfig& config,
                        std::span<const double> truth = {}, const AttackInit& init = {});

struct BaselineConfig {
  std::size_t epochs = 10;  // passes over the known set
  std::size_t batch_size = 5;
  MlpConfig surrogate = MlpConfig::fc(3, 16, 64, 1, Activation::kRelu);
  AdamConfig optimizer{0.005, 0.9, 0.999, 1e-8};
  std::uint64_t seed = 0;

  void validate() const;
};

/// Supervised fit of a fresh surrogate on (known embedding, known label)
/// with mean squared error, then prediction on the attacked embeddings.
/// The trajectory holds the mean training loss per epoch.
AttackResult run_baseline(const AttackProblem& problem, const BaselineConfig& config,
                          std::span<const double> truth = {});

void write_result_json(std::ostream& out, const AttackResult& result, const AttackConfig* attack_config,
                       const BaselineConfig* baseline_config);

}  // namespace splitleak
