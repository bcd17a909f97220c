// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

#include "splitleak/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace splitleak {

void MlpConfig::validate() const {
  if (layer_widths.size() < 2) throw std::invalid_argument("MlpConfig: need at least one layer");
  for (auto w : layer_widths) {
    if (w == 0) throw std::invalid_argument("MlpConfig: layer widths must be >= 1");
  }
}

MlpConfig MlpConfig::fc(std::size_t depth, std::size_t input, std::size_t hidden, std::size_t output,
                        Activation activation) {
  if (depth == 0) throw std::invalid_argument("MlpConfig::fc: depth must be >= 1");
  MlpConfig c;
  c.activation = activation;
  c.layer_widths.push_back(input);
  for (std::size_t i = 1; i < depth; ++i) c.layer_widths.push_back(hidden);
  c.layer_widths.push_back(output);
  return c;
}

Mlp::Mlp(const MlpConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  for (std::size_t l = 0; l < config_.layers(); ++l) {
    const std::size_t in = config_.layer_widths[l], out = config_.layer_widths[l + 1];
    const double lim = 1.0 / std::sqrt(static_cast<double>(in));
    Tensor w = Tensor::matrix(in, out);
    for (double& v : w.data()) v = rng.uniform(-lim, lim);
    Tensor b(Shape{out});
    for (double& v : b.data()) v = rng.uniform(-lim, lim);
    weights_.push_back(std::move(w));
    biases_.push_back(std::move(b));
  }
}

Mlp::Mlp(MlpConfig config, std::vector<Tensor> weights, std::vector<Tensor> biases)
    : config_(std::move(config)), weights_(std::move(weights)), biases_(std::move(biases)) {
  config_.validate();
  check_shapes();
}

void Mlp::check_shapes() const {
  if (weights_.size() != config_.layers() || biases_.size() != config_.layers()) {
    throw ShapeError("Mlp: expected " + std::to_string(config_.layers()) + " layers of parameters");
  }
  for (std::size_t l = 0; l < config_.layers(); ++l) {
    const Shape ws{config_.layer_widths[l], config_.layer_widths[l + 1]};
    const Shape bs{config_.layer_widths[l + 1]};
    if (weights_[l].shape() != ws || biases_[l].shape() != bs) {
      throw ShapeError("Mlp: layer " + std::to_string(l) + " parameters have shapes " +
                       shape_to_string(weights_[l].shape()) + "/" + shape_to_string(biases_[l].shape()) +
                       ", expected " + shape_to_string(ws) + "/" + shape_to_string(bs));
    }
  }
}

std::vector<Tensor*> Mlp::parameters() {
  std::vector<Tensor*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
  return n;
}

Tensor Mlp::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != config_.input_width()) {
    throw ShapeError("Mlp::forward: input " + shape_to_string(x.shape()) + " does not match input width " +
                     std::to_string(config_.input_width()));
  }
  Tensor h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Tensor z = matmul(h, weights_[l]);
    const auto& b = biases_[l];
    const bool hidden = l + 1 < weights_.size();
    for (std::size_t r = 0; r < z.rows(); ++r) {
      for (std::size_t c = 0; c < z.cols(); ++c) {
        double v = z.at(r, c) + b[c];
        if (hidden) v = config_.activation == Activation::kRelu ? (v > 0.0 ? v : 0.0) : std::tanh(v);
        z.at(r, c) = v;
      }
    }
    h = std::move(z);
  }
  return h;
}

MlpNodes Mlp::attach(Graph& g, NodeId input, bool differentiable) const {
  std::vector<NodeId> w, b;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    w.push_back(g.input(weights_[l], differentiable));
    b.push_back(g.input(biases_[l], differentiable));
  }
  return build_mlp_forward(g, std::move(w), std::move(b), config_.activation, input);
}

bool Mlp::all_finite() const {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (!weights_[l].all_finite() || !biases_[l].all_finite()) return false;
  }
  return true;
}

std::vector<NodeId> parameter_nodes(const MlpNodes& nodes) {
  std::vector<NodeId> out;
  for (std::size_t l = 0; l < nodes.weights.size(); ++l) {
    out.push_back(nodes.weights[l]);
    out.push_back(nodes.biases[l]);
  }
  return out;
}

}  // namespace splitleak
