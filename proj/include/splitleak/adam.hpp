// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "splitleak/tensor.hpp"

namespace splitleak {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are created on the first step
/// and mirror the parameter shapes from then on.
class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}

  void step(std::span<Tensor* const> params, std::span<const Tensor> grads);

  const AdamConfig& config() const { return config_; }
  long steps_taken() const { return t_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  long t_ = 0;
};

}  // namespace splitleak
