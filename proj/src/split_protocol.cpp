// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

#include "splitleak/split_protocol.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace splitleak {

using nlohmann::json;

void CompositeModel::validate() const {
  user.config().validate();
  label.config().validate();
  if (user.config().output_width() != label.config().input_width()) {
    throw ShapeError("CompositeModel: user output width " + std::to_string(user.config().output_width()) +
                     " != label input width " + std::to_string(label.config().input_width()));
  }
  if (label.config().output_width() != 1) {
    throw ShapeError("CompositeModel: label model must output a single regression value");
  }
}

void SharedGradientRecord::validate(std::size_t cut_dim) const {
  const std::size_t n = sample_indices.size();
  if (n == 0) throw ShapeError("SharedGradientRecord: empty batch");
  const Shape expect{n, cut_dim};
  if (embeddings.shape() != expect || gradients.shape() != expect) {
    throw ShapeError("SharedGradientRecord: expected embeddings and gradients of shape " +
                     shape_to_string(expect) + ", got " + shape_to_string(embeddings.shape()) + " and " +
                     shape_to_string(gradients.shape()));
  }
}

void GradientLog::append(SharedGradientRecord record) {
  if (cut_dim_ == 0) cut_dim_ = record.embeddings.cols();
  record.validate(cut_dim_);
  records_.push_back(std::move(record));
}

std::optional<std::size_t> GradientLog::last_epoch() const {
  if (records_.empty()) return std::nullopt;
  std::size_t e = 0;
  for (const auto& r : records_) e = std::max(e, r.epoch);
  return e;
}

std::vector<std::size_t> GradientLog::steps_in_epoch(std::size_t epoch) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (records_[i].epoch == epoch) out.push_back(i);
  }
  return out;
}

std::optional<std::size_t> GradientLog::nearest_step_with(std::size_t sample, std::size_t near) const {
  std::optional<std::size_t> best;
  std::size_t best_dist = 0;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& ids = records_[i].sample_indices;
    if (std::find(ids.begin(), ids.end(), sample) == ids.end()) continue;
    const std::size_t dist = i > near ? i - near : near - i;
    if (!best || dist < best_dist) {
      best = i;
      best_dist = dist;
    }
  }
  return best;
}

namespace {

json matrix_to_json(const Tensor& t) {
  json rows = json::array();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    auto row = t.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

Tensor matrix_from_json(const json& j) {
  const std::size_t n = j.size();
  if (n == 0) throw ShapeError("empty matrix in gradient log");
  const std::size_t c = j.at(0).size();
  std::vector<double> data;
  data.reserve(n * c);
  for (const auto& row : j) {
    if (row.size() != c) throw ShapeError("ragged matrix in gradient log");
    for (const auto& v : row) data.push_back(v.get<double>());
  }
  return Tensor(Shape{n, c}, std::move(data));
}

}  // namespace

void GradientLog::write_jsonl(std::ostream& out) const {
  for (const auto& r : records_) {
    json j;
    j["epoch"] = r.epoch;
    j["batch"] = r.batch;
    j["sample_indices"] = r.sample_indices;
    j["embeddings"] = matrix_to_json(r.embeddings);
    j["g"] = matrix_to_json(r.gradients);
    out << j.dump() << '\n';
  }
}

GradientLog GradientLog::read_jsonl(std::istream& in) {
  GradientLog log;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      SharedGradientRecord r;
      r.epoch = j.at("epoch").get<std::size_t>();
      r.batch = j.at("batch").get<std::size_t>();
      r.sample_indices = j.at("sample_indices").get<std::vector<std::size_t>>();
      r.embeddings = matrix_from_json(j.at("embeddings"));
      r.gradients = matrix_from_json(j.at("g"));
      log.append(std::move(r));
    } catch (const std::exception& e) {
      throw std::runtime_error("gradient log line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return log;
}

void GradientLog::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write gradient log to " + path);
  write_jsonl(out);
}

GradientLog GradientLog::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open gradient log " + path);
  return read_jsonl(in);
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (!(optimizer.lr > 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be > 0");
}

Tensor forward_user(const Mlp& user, const Tensor& batch) { return user.forward(batch); }

Tensor forward_label(const Mlp& label, const Tensor& embeddings) { return label.forward(embeddings); }

namespace {

struct LabelStep {
  Tensor cut_gradient;
  std::vector<Tensor> param_grads;
  double loss = 0.0;
};

LabelStep label_step(const Mlp& label, const Tensor& embeddings, std::span<const double> labels,
                     LossKind loss) {
  if (labels.size() != embeddings.rows()) {
    throw ShapeError("shared_gradient: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(embeddings.rows()) + " embeddings");
  }
  Graph g;
  NodeId e = g.input(embeddings);
  MlpNodes m = label.attach(g, e, true);
  NodeId y = g.constant(Tensor::column(labels));
  NodeId l = g.mean(per_sample_loss(g, loss, m.output, y));
  std::vector<NodeId> targets{e};
  for (NodeId p : parameter_nodes(m)) targets.push_back(p);
  GradientMap grads = g.backward(l, targets);
  LabelStep out;
  out.cut_gradient = grads.at(e);
  for (std::size_t k = 1; k < targets.size(); ++k) out.param_grads.push_back(grads.at(targets[k]));
  out.loss = g.value(l).item();
  return out;
}

}  // namespace

Tensor shared_gradient(const Mlp& label, const Tensor& embeddings, std::span<const double> labels,
                       LossKind loss) {
  return label_step(label, embeddings, labels, loss).cut_gradient;
}

double evaluate_l1(const CompositeModel& model, const Tensor& features, std::span<const double> labels,
                   std::span<const std::size_t> rows) {
  if (rows.empty()) return 0.0;
  Tensor pred = model.predict(gather_rows(features, rows));
  double s = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k) s += std::abs(pred[k] - labels[rows[k]]);
  return s / static_cast<double>(rows.size());
}

LabelParty::LabelParty(Mlp model, std::span<const double> labels, LossKind loss, AdamConfig optimizer,
                       GradientTransform release)
    : model_(std::move(model)), labels_(labels), loss_(loss), adam_(optimizer), release_(std::move(release)) {}

Tensor LabelParty::exchange(std::span<const std::size_t> ids, const Tensor& embeddings) {
  std::vector<double> y;
  y.reserve(ids.size());
  for (auto i : ids) y.push_back(labels_[i]);
  LabelStep s = label_step(model_, embeddings, y, loss_);
  last_loss_ = s.loss;
  auto params = model_.parameters();
  adam_.step(params, s.param_grads);
  if (release_) release_(s.cut_gradient);
  return std::move(s.cut_gradient);
}

UserParty::UserParty(Mlp model, const Tensor& features, AdamConfig optimizer)
    : model_(std::move(model)), features_(features), adam_(optimizer) {}

Tensor UserParty::embed(std::span<const std::size_t> ids) const {
  return model_.forward(gather_rows(features_, ids));
}

void UserParty::apply(std::span<const std::size_t> ids, const Tensor& cut_gradient) {
  Graph g;
  NodeId x = g.constant(gather_rows(features_, ids));
  MlpNodes m = model_.attach(g, x, true);
  NodeId upstream = g.constant(cut_gradient);
  NodeId surrogate_loss = g.sum(g.mul(m.output, upstream));
  auto targets = parameter_nodes(m);
  GradientMap grads = g.backward(surrogate_loss, targets);
  std::vector<Tensor> gs;
  for (NodeId t : targets) gs.push_back(grads.at(t));
  auto params = model_.parameters();
  adam_.step(params, gs);
}

TrainResult train_composite(CompositeModel model, const TrainData& data, const TrainConfig& config,
                            const GradientTransform& release) {
  model.validate();
  config.validate();
  if (data.features.rank() != 2 || data.features.cols() != model.user.config().input_width()) {
    throw ShapeError("train_composite: features " + shape_to_string(data.features.shape()) +
                     " do not match user input width " + std::to_string(model.user.config().input_width()));
  }
  const std::size_t cut = model.cut_dim();
  UserParty user(model.user, data.features, config.optimizer);
  LabelParty label(model.label, data.labels, config.training_loss, config.optimizer, release);

  TrainResult result{model, GradientLog(cut), {}};
  Rng rng(derive_seed(config.seed, "train-shuffle"));
  std::vector<std::size_t> order(data.train.begin(), data.train.end());

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    std::size_t batch = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::span<const std::size_t> ids(order.data() + start, end - start);
      Tensor emb = user.embed(ids);
      Tensor g = label.exchange(ids, emb);
      if (!std::isfinite(label.last_loss()) || !g.all_finite()) {
        std::ostringstream os;
        os << "training diverged at epoch " << epoch << ", batch " << batch << " (batch loss "
           << label.last_loss() << ")";
        throw TrainingDiverged(os.str());
      }
      user.apply(ids, g);
      result.log.append(SharedGradientRecord{epoch, batch, std::vector<std::size_t>(ids.begin(), ids.end()),
                                             std::move(emb), std::move(g)});
    }
    result.model = CompositeModel{user.model(), label.model()};
    if (!result.model.user.all_finite() || !result.model.label.all_finite()) {
      throw TrainingDiverged("training diverged: non-finite parameters after epoch " + std::to_string(epoch));
    }
    result.test_l1.push_back(evaluate_l1(result.model, data.features, data.eval_labels, data.test));
  }
  result.model = CompositeModel{user.model(), label.model()};
  return result;
}

}  // namespace splitleak
