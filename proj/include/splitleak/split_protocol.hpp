// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

// Two-party split learning simulation.
//
// The user party owns features and the bottom model; the label party owns
// labels and the top model. They communicate only through sample ids,
// cut-layer embeddings and the returned cut-layer gradients. Every exchange
// is appended to a GradientLog, which is exactly what a curious user party
// gets to see.

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "splitleak/adam.hpp"
#include "splitleak/mlp.hpp"

namespace splitleak {

struct CompositeModel {
  Mlp user;
  Mlp label;

  std::size_t cut_dim() const { return user.config().output_width(); }
  /// Throws unless user output width == label input width and label output is 1.
  void validate() const;
  Tensor predict(const Tensor& features) const { return label.forward(user.forward(features)); }
};

/// One embedding/gradient exchange. Row k of `embeddings` and `gradients`
/// belongs to sample_indices[k].
struct SharedGradientRecord {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  std::vector<std::size_t> sample_indices;
  Tensor embeddings;
  Tensor gradients;

  std::size_t batch_size() const { return sample_indices.size(); }
  void validate(std::size_t cut_dim) const;
};

class GradientLog {
 public:
  GradientLog() = default;
  explicit GradientLog(std::size_t cut_dim) : cut_dim_(cut_dim) {}

  void append(SharedGradientRecord record);
  std::size_t cut_dim() const { return cut_dim_; }
  const std::vector<SharedGradientRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  std::optional<std::size_t> last_epoch() const;

  /// Positions (into records()) of all exchanges from `epoch`.
  std::vector<std::size_t> steps_in_epoch(std::size_t epoch) const;

  /// Exchange containing `sample` closest to record position `near`, or
  /// nullopt when the sample never appears.
  std::optional<std::size_t> nearest_step_with(std::size_t sample, std::size_t near) const;

  /// Line-delimited JSON, one record per line.
  void write_jsonl(std::ostream& out) const;
  static GradientLog read_jsonl(std::istream& in);
  void save(const std::string& path) const;
  static GradientLog load(const std::string& path);

 private:
  std::size_t cut_dim_ = 0;
  std::vector<SharedGradientRecord> records_;
};

struct TrainConfig {
  std::size_t epochs = 15;
  std::size_t batch_size = 5;
  LossKind training_loss = LossKind::kL1;
  AdamConfig optimizer{};
  std::uint64_t seed = 0;

  void validate() const;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Post-processing the label party applies to g before releasing it.
using GradientTransform = std::function<void(Tensor& gradients)>;

struct TrainData {
  const Tensor& features;                 // n x p, user party only
  std::span<const double> labels;         // length n, label party only
  std::span<const double> eval_labels;    // ground truth for test metrics
  std::span<const std::size_t> train;
  std::span<const std::size_t> test;
};

struct TrainResult {
  CompositeModel model;
  GradientLog log;
  std::vector<double> test_l1;  // after each epoch
};

Tensor forward_user(const Mlp& user, const Tensor& batch);
Tensor forward_label(const Mlp& label, const Tensor& embeddings);

/// Per-sample dL/dE_i of the batch-mean loss (each row is the sample's own
/// loss derivative divided by the batch size).
Tensor shared_gradient(const Mlp& label, const Tensor& embeddings, std::span<const double> labels,
                       LossKind loss);

/// Mean absolute error of the composite model on `rows`.
double evaluate_l1(const CompositeModel& model, const Tensor& features, std::span<const double> labels,
                   std::span<const std::size_t> rows);

TrainResult train_composite(CompositeModel model, const TrainData& data, const TrainConfig& config,
                            const GradientTransform& release = {});

/// Label-side half of the protocol: holds labels, never sees features.
class LabelParty {
 public:
  LabelParty(Mlp model, std::span<const double> labels, LossKind loss, AdamConfig optimizer,
             GradientTransform release = {});

  /// Consumes a batch of embeddings, updates the label model and returns
  /// the (possibly post-processed) cut-layer gradient.
  Tensor exchange(std::span<const std::size_t> ids, const Tensor& embeddings);

  const Mlp& model() const { return model_; }
  double last_loss() const { return last_loss_; }

 private:
  Mlp model_;
  std::span<const double> labels_;
  LossKind loss_;
  Adam adam_;
  GradientTransform release_;
  double last_loss_ = 0.0;
};

/// Feature-side half of the protocol: holds features, never sees labels.
class UserParty {
 public:
  UserParty(Mlp model, const Tensor& features, AdamConfig optimizer);

  Tensor embed(std::span<const std::size_t> ids) const;
  void apply(std::span<const std::size_t> ids, const Tensor& cut_gradient);

  const Mlp& model() const { return model_; }

 private:
  Mlp model_;
  const Tensor& features_;
  Adam adam_;
};

}  // namespace splitleak
