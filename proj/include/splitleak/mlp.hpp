// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "splitleak/graph.hpp"
#include "splitleak/mlp_graph.hpp"
#include "splitleak/random.hpp"
#include "splitleak/tensor.hpp"

namespace splitleak {

/// Fully-connected architecture: widths run from input to output, hidden
/// layers use `activation`, the last layer is linear.
struct MlpConfig {
  std::vector<std::size_t> layer_widths;
  Activation activation = Activation::kRelu;

  std::size_t layers() const { return layer_widths.empty() ? 0 : layer_widths.size() - 1; }
  std::size_t input_width() const { return layer_widths.front(); }
  std::size_t output_width() const { return layer_widths.back(); }
  void validate() const;

  /// "FC-k" network: k layers, k-1 hidden layers of width `hidden`.
  static MlpConfig fc(std::size_t depth, std::size_t input, std::size_t hidden, std::size_t output,
                      Activation activation = Activation::kRelu);
};

class Mlp {
 public:
  Mlp() = default;
  /// Scaled-uniform fan-in initialization: W, b ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Mlp(const MlpConfig& config, Rng& rng);
  Mlp(MlpConfig config, std::vector<Tensor> weights, std::vector<Tensor> biases);

  const MlpConfig& config() const { return config_; }
  const std::vector<Tensor>& weights() const { return weights_; }
  const std::vector<Tensor>& biases() const { return biases_; }
  std::vector<Tensor>& weights() { return weights_; }
  std::vector<Tensor>& biases() { return biases_; }

  /// Parameters in a fixed order: W0, b0, W1, b1, ...
  std::vector<Tensor*> parameters();
  std::size_t parameter_count() const;

  /// Plain numeric forward pass on an n x input_width batch.
  Tensor forward(const Tensor& x) const;

  /// Adds parameter leaves and the forward pass to `g`.
  MlpNodes attach(Graph& g, NodeId input, bool differentiable) const;

  bool all_finite() const;

 private:
  void check_shapes() const;

  MlpConfig config_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

/// Parameter ids of an attached MLP in parameters() order.
std::vector<NodeId> parameter_nodes(const MlpNodes& nodes);

}  // namespace splitleak
