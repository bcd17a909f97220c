// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

// Reverse-mode differentiable computation graph with eager evaluation.
//
// Nodes are appended in topological order and cache their value as soon
// as they are created. backward() runs reverse accumulation from a scalar
// node. Gradients of gradients are obtained by building the first-order
// gradient explicitly out of graph ops (see mlp_graph.hpp) and then calling
// backward() on an expression of it.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "splitleak/tensor.hpp"

namespace splitleak {

struct NodeId {
  std::uint32_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

enum class OpKind : std::uint8_t {
  kInput,
  kConstant,
  kMatMul,
  kAddBias,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddScalar,
  kRelu,
  kTanh,
  kSquare,
  kAbs,
  kSum,
  kMean,
  kSumSquares,
  kTranspose,
};

std::string_view op_name(OpKind op);

class GradientMap {
 public:
  void set(NodeId id, Tensor grad) { grads_.insert_or_assign(id.index, std::move(grad)); }
  bool contains(NodeId id) const { return grads_.contains(id.index); }
  const Tensor& at(NodeId id) const;
  std::size_t size() const { return grads_.size(); }

 private:
  std::unordered_map<std::uint32_t, Tensor> grads_;
};

class Graph {
 public:
  /// Leaf holding `value`; `differentiable` leaves can be backward() targets
  /// and propagate gradients to their descendants.
  NodeId input(Tensor value, bool differentiable = true);
  NodeId constant(Tensor value) { return input(std::move(value), false); }

  NodeId matmul(NodeId a, NodeId b);
  /// x[n x c] + b broadcast over rows; b is a length-c vector or 1 x c.
  NodeId add_bias(NodeId x, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  NodeId add_scalar(NodeId a, double offset);
  NodeId relu(NodeId a);
  NodeId tanh(NodeId a);
  NodeId square(NodeId a);
  NodeId abs(NodeId a);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId sum_squares(NodeId a);
  NodeId transpose(NodeId a);

  const Tensor& value(NodeId id) const { return node(id).value; }
  OpKind op(NodeId id) const { return node(id).op; }
  bool differentiable(NodeId id) const { return node(id).differentiable; }
  std::span<const NodeId> parents(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }

  /// d loss / d target for every target. Targets that do not influence the
  /// loss receive a zero tensor. Throws ShapeError when loss is not scalar.
  GradientMap backward(NodeId loss, std::span<const NodeId> targets) const;
  GradientMap backward(NodeId loss, std::initializer_list<NodeId> targets) const {
    return backward(loss, std::span<const NodeId>(targets.begin(), targets.size()));
  }

 private:
  struct Node {
    OpKind op;
    std::uint8_t arity;
    NodeId parents[2];
    double attr;
    bool differentiable;
    Tensor value;
  };

  const Node& node(NodeId id) const;
  NodeId push(OpKind op, std::initializer_list<NodeId> parents, double attr, Tensor value);

  std::vector<Node> nodes_;
};

}  // namespace splitleak
