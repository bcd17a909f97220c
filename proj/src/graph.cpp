// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

#include "splitleak/graph.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace splitleak {

std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::kInput: return "input";
    case OpKind::kConstant: return "constant";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kAddBias: return "add_bias";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kRelu: return "relu";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSquare: return "square";
    case OpKind::kAbs: return "abs";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kSumSquares: return "sum_squares";
    case OpKind::kTranspose: return "transpose";
  }
  return "?";
}

const Tensor& GradientMap::at(NodeId id) const {
  auto it = grads_.find(id.index);
  if (it == grads_.end()) {
    throw std::out_of_range("no gradient recorded for node " + std::to_string(id.index));
  }
  return it->second;
}

namespace {

template <class F>
Tensor map_unary(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

template <class F>
Tensor map_binary(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void accumulate(std::optional<Tensor>& slot, const Tensor& g) {
  if (!slot) {
    slot = g;
    return;
  }
  auto d = slot->data();
  for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
}

}  // namespace

const Graph::Node& Graph::node(NodeId id) const {
  if (id.index >= nodes_.size()) {
    throw std::out_of_range("node id " + std::to_string(id.index) + " not in graph");
  }
  return nodes_[id.index];
}

std::span<const NodeId> Graph::parents(NodeId id) const {
  const Node& n = node(id);
  return {n.parents, n.arity};
}

NodeId Graph::push(OpKind op, std::initializer_list<NodeId> parents, double attr, Tensor value) {
  Node n{op, static_cast<std::uint8_t>(parents.size()), {}, attr, false, std::move(value)};
  std::size_t k = 0;
  for (NodeId p : parents) {
    n.parents[k++] = p;
    n.differentiable = n.differentiable || node(p).differentiable;
  }
  nodes_.push_back(std::move(n));
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

NodeId Graph::input(Tensor value, bool differentiable) {
  nodes_.push_back(Node{differentiable ? OpKind::kInput : OpKind::kConstant, 0, {}, 0.0,
                        differentiable, std::move(value)});
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  return push(OpKind::kMatMul, {a, b}, 0.0, splitleak::matmul(value(a), value(b)));
}

NodeId Graph::add_bias(NodeId x, NodeId b) {
  const Tensor& xv = value(x);
  const Tensor& bv = value(b);
  if (xv.rank() != 2 || bv.size() != xv.cols() || (bv.rank() == 2 && bv.rows() != 1)) {
    throw ShapeError("add_bias: cannot broadcast " + shape_to_string(bv.shape()) + " over rows of " +
                     shape_to_string(xv.shape()));
  }
  Tensor out = xv;
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < xv.cols(); ++c) out.at(r, c) += bv[c];
  return push(OpKind::kAddBias, {x, b}, 0.0, std::move(out));
}

namespace {

void require_same(const Tensor& a, const Tensor& b, std::string_view what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

}  // namespace

NodeId Graph::add(NodeId a, NodeId b) {
  require_same(value(a), value(b), "add");
  return push(OpKind::kAdd, {a, b}, 0.0,
              map_binary(value(a), value(b), [](double x, double y) { return x + y; }));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  require_same(value(a), value(b), "sub");
  return push(OpKind::kSub, {a, b}, 0.0,
              map_binary(value(a), value(b), [](double x, double y) { return x - y; }));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  require_same(value(a), value(b), "mul");
  return push(OpKind::kMul, {a, b}, 0.0,
              map_binary(value(a), value(b), [](double x, double y) { return x * y; }));
}

NodeId Graph::scale(NodeId a, double factor) {
  return push(OpKind::kScale, {a}, factor, map_unary(value(a), [factor](double x) { return factor * x; }));
}

NodeId Graph::add_scalar(NodeId a, double offset) {
  return push(OpKind::kAddScalar, {a}, offset,
              map_unary(value(a), [offset](double x) { return x + offset; }));
}

NodeId Graph::relu(NodeId a) {
  return push(OpKind::kRelu, {a}, 0.0, map_unary(value(a), [](double x) { return x > 0.0 ? x : 0.0; }));
}

NodeId Graph::tanh(NodeId a) {
  return push(OpKind::kTanh, {a}, 0.0, map_unary(value(a), [](double x) { return std::tanh(x); }));
}

NodeId Graph::square(NodeId a) {
  return push(OpKind::kSquare, {a}, 0.0, map_unary(value(a), [](double x) { return x * x; }));
}

NodeId Graph::abs(NodeId a) {
  return push(OpKind::kAbs, {a}, 0.0, map_unary(value(a), [](double x) { return std::abs(x); }));
}

NodeId Graph::sum(NodeId a) {
  double s = 0.0;
  for (double v : value(a).data()) s += v;
  return push(OpKind::kSum, {a}, 0.0, Tensor::scalar(s));
}

NodeId Graph::mean(NodeId a) {
  double s = 0.0;
  for (double v : value(a).data()) s += v;
  return push(OpKind::kMean, {a}, 0.0, Tensor::scalar(s / static_cast<double>(value(a).size())));
}

NodeId Graph::sum_squares(NodeId a) {
  double s = 0.0;
  for (double v : value(a).data()) s += v * v;
  return push(OpKind::kSumSquares, {a}, 0.0, Tensor::scalar(s));
}

NodeId Graph::transpose(NodeId a) {
  return push(OpKind::kTranspose, {a}, 0.0, splitleak::transpose(value(a)));
}

GradientMap Graph::backward(NodeId loss, std::span<const NodeId> targets) const {
  if (!value(loss).is_scalar()) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_to_string(value(loss).shape()));
  }
  std::vector<std::optional<Tensor>> adj(loss.index + 1);
  adj[loss.index] = Tensor(value(loss).shape(), 1.0);

  for (std::size_t i = loss.index + 1; i-- > 0;) {
    if (!adj[i]) continue;
    const Node& n = nodes_[i];
    if (!n.differentiable || n.arity == 0) continue;
    const Tensor& g = *adj[i];
    const NodeId p0 = n.parents[0];
    const bool d0 = nodes_[p0.index].differentiable;
    const bool d1 = n.arity > 1 && nodes_[n.parents[1].index].differentiable;
    const Tensor& a = nodes_[p0.index].value;

    switch (n.op) {
      case OpKind::kInput:
      case OpKind::kConstant:
        break;
      case OpKind::kMatMul: {
        const Tensor& b = nodes_[n.parents[1].index].value;
        if (d0) accumulate(adj[p0.index], splitleak::matmul(g, splitleak::transpose(b)));
        if (d1) accumulate(adj[n.parents[1].index], splitleak::matmul(splitleak::transpose(a), g));
        break;
      }
      case OpKind::kAddBias: {
        if (d0) accumulate(adj[p0.index], g);
        if (d1) {
          Tensor gb(nodes_[n.parents[1].index].value.shape());
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g.at(r, c);
          accumulate(adj[n.parents[1].index], gb);
        }
        break;
      }
      case OpKind::kAdd:
        if (d0) accumulate(adj[p0.index], g);
        if (d1) accumulate(adj[n.parents[1].index], g);
        break;
      case OpKind::kSub:
        if (d0) accumulate(adj[p0.index], g);
        if (d1) accumulate(adj[n.parents[1].index], map_unary(g, [](double x) { return -x; }));
        break;
      case OpKind::kMul: {
        const Tensor& b = nodes_[n.parents[1].index].value;
        if (d0) accumulate(adj[p0.index], map_binary(g, b, [](double x, double y) { return x * y; }));
        if (d1) accumulate(adj[n.parents[1].index], map_binary(g, a, [](double x, double y) { return x * y; }));
        break;
      }
      case OpKind::kScale: {
        const double f = n.attr;
        accumulate(adj[p0.index], map_unary(g, [f](double x) { return f * x; }));
        break;
      }
      case OpKind::kAddScalar:
        accumulate(adj[p0.index], g);
        break;
      case OpKind::kRelu:
        accumulate(adj[p0.index], map_binary(g, a, [](double x, double y) { return y > 0.0 ? x : 0.0; }));
        break;
      case OpKind::kTanh:
        accumulate(adj[p0.index],
                   map_binary(g, n.value, [](double x, double t) { return x * (1.0 - t * t); }));
        break;
      case OpKind::kSquare:
        accumulate(adj[p0.index], map_binary(g, a, [](double x, double y) { return 2.0 * x * y; }));
        break;
      case OpKind::kAbs:
        accumulate(adj[p0.index], map_binary(g, a, [](double x, double y) { return x * sign0(y); }));
        break;
      case OpKind::kSum:
        accumulate(adj[p0.index], Tensor(a.shape(), g.item()));
        break;
      case OpKind::kMean:
        accumulate(adj[p0.index], Tensor(a.shape(), g.item() / static_cast<double>(a.size())));
        break;
      case OpKind::kSumSquares: {
        const double s = g.item();
        accumulate(adj[p0.index], map_unary(a, [s](double y) { return 2.0 * s * y; }));
        break;
      }
      case OpKind::kTranspose:
        accumulate(adj[p0.index], splitleak::transpose(g));
        break;
    }
  }

  GradientMap out;
  for (NodeId t : targets) {
    const Tensor& v = value(t);
    if (t.index <= loss.index && adj[t.index]) {
      out.set(t, *adj[t.index]);
    } else {
      out.set(t, Tensor(v.shape(), 0.0));
    }
  }
  return out;
}

}  // namespace splitleak
