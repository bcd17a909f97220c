// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

// Label-party protections: Laplace noise on labels (applied once, before
// training) and Gaussian noise on released cut-layer gradients.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "splitleak/random.hpp"
#include "splitleak/split_protocol.hpp"
#include "splitleak/tensor.hpp"

namespace splitleak {

struct LabelNoiseConfig {
  double epsilon = 1.0;
  double sensitivity = 1.0;  // s, usually the maximum label value
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument unless epsilon > 0 and sensitivity > 0.
  void validate() const;
  double scale() const { return sensitivity / epsilon; }
};

struct GradientNoiseConfig {
  std::uint64_t seed = 0;
};

/// y + Lap(0, s / epsilon), one independent draw per label.
std::vector<double> noise_labels(std::span<const double> labels, const LabelNoiseConfig& config);

/// Laplace(0, b) by inverse CDF from one uniform draw.
double sample_laplace(Rng& rng, double b);

/// max |g_ij| / sqrt(d), d = number of columns (cut dimension).
double gradient_noise_sigma(const Tensor& gradients);

/// Adds i.i.d. N(0, sigma^2) per coordinate with sigma from
/// gradient_noise_sigma(). Stateless: every call uses `config.seed`.
Tensor noise_gradients(const Tensor& gradients, const GradientNoiseConfig& config);

/// Stateful sampler for use as a release hook during training: each batch
/// draws from the same seeded stream, so a training run is reproducible.
class GradientNoiser {
 public:
  explicit GradientNoiser(GradientNoiseConfig config) : rng_(config.seed) {}

  void operator()(Tensor& gradients);

 private:
  Rng rng_;
};

/// Wraps a fresh GradientNoiser as a GradientTransform.
GradientTransform make_gradient_noise_transform(const GradientNoiseConfig& config);

}  // namespace splitleak
