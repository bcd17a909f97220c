// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

#include "splitleak/mlp_graph.hpp"

#include <stdexcept>
#include <string>

namespace splitleak {

std::string_view to_string(Activation a) { return a == Activation::kRelu ? "relu" : "tanh"; }
std::string_view to_string(LossKind k) { return k == LossKind::kL1 ? "l1" : "l2"; }

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  throw std::invalid_argument("unsupported activation '" + std::string(s) + "' (expected relu|tanh)");
}

LossKind parse_loss_kind(std::string_view s) {
  if (s == "l1" || s == "L1") return LossKind::kL1;
  if (s == "l2" || s == "L2") return LossKind::kL2;
  throw std::invalid_argument("unsupported loss '" + std::string(s) + "' (expected l1|l2)");
}

MlpNodes build_mlp_forward(Graph& g, std::vector<NodeId> weights, std::vector<NodeId> biases,
                           Activation activation, NodeId input) {
  if (weights.empty() || weights.size() != biases.size()) {
    throw std::invalid_argument("build_mlp_forward: need one bias per weight matrix and >= 1 layer");
  }
  MlpNodes m;
  m.activation = activation;
  m.input = input;
  m.weights = std::move(weights);
  m.biases = std::move(biases);
  NodeId h = input;
  const std::size_t layers = m.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    NodeId z = g.add_bias(g.matmul(h, m.weights[l]), m.biases[l]);
    m.pre.push_back(z);
    if (l + 1 < layers) {
      h = activation == Activation::kRelu ? g.relu(z) : g.tanh(z);
    } else {
      h = z;
    }
    m.post.push_back(h);
  }
  m.output = m.post.back();
  return m;
}

NodeId per_sample_loss(Graph& g, LossKind kind, NodeId prediction, NodeId label) {
  NodeId r = g.sub(prediction, label);
  return kind == LossKind::kL1 ? g.abs(r) : g.square(r);
}

NodeId embedding_gradient_as_graph(Graph& g, const MlpNodes& model, LossKind kind, NodeId label,
                                   std::optional<NodeId> sample_scale, std::optional<NodeId> l1_sign) {
  const Tensor& out = g.value(model.output);
  if (out.rank() != 2 || out.cols() != 1) {
    throw ShapeError("embedding_gradient_as_graph: label model must output n x 1, got " +
                     shape_to_string(out.shape()));
  }
  const std::size_t n = out.rows();

  NodeId residual = g.sub(model.output, label);
  NodeId dloss;
  if (kind == LossKind::kL2) {
    dloss = g.scale(residual, 2.0);
  } else if (l1_sign) {
    if (!g.value(*l1_sign).same_shape(g.value(residual))) {
      throw ShapeError("embedding_gradient_as_graph: l1_sign must be " + shape_to_string(g.value(residual).shape()));
    }
    dloss = *l1_sign;
  } else {
    const Tensor& r = g.value(residual);
    Tensor s(r.shape());
    for (std::size_t i = 0; i < r.size(); ++i) s[i] = r[i] > 0.0 ? 1.0 : (r[i] < 0.0 ? -1.0 : 0.0);
    dloss = g.constant(std::move(s));
  }
  if (sample_scale) {
    dloss = g.mul(dloss, *sample_scale);
  } else {
    dloss = g.scale(dloss, 1.0 / static_cast<double>(n));
  }

  // delta holds dL/d(pre[l]) as an n x width_l node.
  NodeId delta = dloss;
  for (std::size_t l = model.weights.size(); l-- > 0;) {
    NodeId back = g.matmul(delta, g.transpose(model.weights[l]));
    if (l == 0) return back;
    NodeId deriv;
    if (model.activation == Activation::kTanh) {
      // 1 - tanh(z)^2, differentiable through the weights.
      deriv = g.add_scalar(g.scale(g.square(model.post[l - 1]), -1.0), 1.0);
    } else {
      const Tensor& z = g.value(model.pre[l - 1]);
      Tensor mask(z.shape());
      for (std::size_t i = 0; i < z.size(); ++i) mask[i] = z[i] > 0.0 ? 1.0 : 0.0;
      deriv = g.constant(std::move(mask));
    }
    delta = g.mul(back, deriv);
  }
  return delta;  // unreachable: loop returns at l == 0
}

}  // namespace splitleak
