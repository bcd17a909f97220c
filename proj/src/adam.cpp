// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

#include "splitleak/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace splitleak {

void Adam::step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("Adam::step: params/grads length mismatch");
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.emplace_back(p->shape(), 0.0);
      v_.emplace_back(p->shape(), 0.0);
    }
  } else if (m_.size() != params.size()) {
    throw std::invalid_argument("Adam::step: parameter list changed between steps");
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = grads[k];
    if (!p.same_shape(g) || !p.same_shape(m_[k])) {
      throw ShapeError("Adam::step: gradient shape " + shape_to_string(g.shape()) +
                       " does not match parameter " + shape_to_string(p.shape()));
    }
    auto m = m_[k].data();
    auto v = v_[k].data();
    auto pd = p.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      pd[i] -= config_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
  }
}

}  // namespace splitleak
