// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

#include "splitleak/defenses.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

namespace splitleak {

void LabelNoiseConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw std::invalid_argument("label noise: epsilon must be > 0 (got " + std::to_string(epsilon) +
                                "); disable the defense instead of passing 0");
  }
  if (!(sensitivity > 0.0) || !std::isfinite(sensitivity)) {
    throw std::invalid_argument("label noise: sensitivity must be > 0 (got " + std::to_string(sensitivity) + ")");
  }
}

double sample_laplace(Rng& rng, double b) {
  // u in (-1/2, 1/2); x = -b sgn(u) ln(1 - 2|u|)
  double u = 0.0;
  do {
    u = rng.uniform(-0.5, 0.5);
  } while (u == -0.5);
  const double sgn = u < 0.0 ? -1.0 : 1.0;
  return -b * sgn * std::log1p(-2.0 * std::abs(u));
}

std::vector<double> noise_labels(std::span<const double> labels, const LabelNoiseConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const double b = config.scale();
  std::vector<double> out(labels.begin(), labels.end());
  for (double& y : out) y += sample_laplace(rng, b);
  return out;
}

double gradient_noise_sigma(const Tensor& gradients) {
  double m = 0.0;
  for (double v : gradients.data()) m = std::max(m, std::abs(v));
  return m / std::sqrt(static_cast<double>(gradients.cols()));
}

void GradientNoiser::operator()(Tensor& gradients) {
  const double sigma = gradient_noise_sigma(gradients);
  if (!(sigma > 0.0)) return;
  for (double& v : gradients.data()) v += rng_.normal(0.0, sigma);
}

Tensor noise_gradients(const Tensor& gradients, const GradientNoiseConfig& config) {
  Tensor out = gradients;
  GradientNoiser noiser(config);
  noiser(out);
  return out;
}

GradientTransform make_gradient_noise_transform(const GradientNoiseConfig& config) {
  auto noiser = std::make_shared<GradientNoiser>(config);
  return [noiser](Tensor& g) { (*noiser)(g); };
}

}  // namespace splitleak
