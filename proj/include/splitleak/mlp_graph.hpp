// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "splitleak/graph.hpp"

namespace splitleak {

enum class Activation { kRelu, kTanh };
enum class LossKind { kL1, kL2 };

std::string_view to_string(Activation a);
std::string_view to_string(LossKind k);
Activation parse_activation(std::string_view s);
LossKind parse_loss_kind(std::string_view s);

/// Node ids of an MLP forward pass recorded in a graph.
///
/// Layer l computes pre[l] = post[l-1] * W[l] + b[l]; hidden layers apply
/// the activation, the last layer is linear, so output == pre.back().
struct MlpNodes {
  Activation activation = Activation::kRelu;
  NodeId input;
  std::vector<NodeId> weights;
  std::vector<NodeId> biases;
  std::vector<NodeId> pre;
  std::vector<NodeId> post;
  NodeId output;
};

/// Appends the forward pass for the given parameter nodes to `g`.
MlpNodes build_mlp_forward(Graph& g, std::vector<NodeId> weights, std::vector<NodeId> biases,
                           Activation activation, NodeId input);

/// Per-sample loss terms |p - y| or (p - y)^2 as an n x 1 node.
NodeId per_sample_loss(Graph& g, LossKind kind, NodeId prediction, NodeId label);

/// Appends nodes computing the cut-layer gradient dL/dE of a batch loss in
/// closed form, as a differentiable expression of the label-model weights
/// and of `label`.
///
/// L = sum_i scale_i * loss(p_i, y_i). `sample_scale` is an n x 1 constant
/// node holding scale_i; when absent every scale_i is 1/n (batch mean).
/// The chain is dL/dp * W_L^T * D_{L-1} * W_{L-1}^T ... with D the
/// activation derivative. tanh derivatives are built from graph ops; relu
/// masks and the L1 sign enter as constants (sign(0) = 0). `l1_sign`, an
/// n x 1 constant node, replaces sign(p - y) for L1 when given.
NodeId embedding_gradient_as_graph(Graph& g, const MlpNodes& model, LossKind kind, NodeId label,
                                   std::optional<NodeId> sample_scale = std::nullopt,
                                   std::optional<NodeId> l1_sign = std::nullopt);

}  // namespace splitleak
