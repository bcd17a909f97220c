// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

// Shared test helpers: random models and finite-difference oracles.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "splitleak/attack.hpp"
#include "splitleak/mlp.hpp"
#include "splitleak/random.hpp"
#include "splitleak/split_protocol.hpp"
#include "splitleak/tensor.hpp"

namespace splitleak::testing {

inline Tensor random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Tensor t = Tensor::matrix(rows, cols);
  for (double& v : t.data()) v = rng.normal(0.0, scale);
  return t;
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal(0.0, scale);
  return v;
}

/// Random widths: input, depth-1 hidden layers, output.
inline MlpConfig random_config(Rng& rng, std::size_t max_depth, std::size_t max_width, std::size_t input,
                               std::size_t output, Activation act) {
  const auto depth = static_cast<std::size_t>(rng.uniform(1.0, static_cast<double>(max_depth) + 1.0));
  std::vector<std::size_t> widths{input};
  for (std::size_t l = 1; l < depth; ++l) {
    widths.push_back(static_cast<std::size_t>(rng.uniform(1.0, static_cast<double>(max_width) + 1.0)));
  }
  widths.push_back(output);
  return MlpConfig{widths, act};
}

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

/// Central differences of `f` with respect to every entry of `x` (which is
/// perturbed in place and restored).
inline std::vector<double> central_difference(Tensor& x, const std::function<double()>& f, double h = 1e-5) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

/// Linear label model y_hat = w^T E + b trained with L2 on a batch of n.
/// The batch-mean gradient is g_i = (2 / n) (y_hat_i - y_i) w, so
/// y_i = y_hat_i - n g_i^T w / (2 w^T w).
struct InversionInstance {
  Mlp label;
  AttackProblem problem;
  std::vector<double> truth;
  std::vector<double> closed_form;
};

inline InversionInstance make_inversion_instance(std::uint64_t seed, std::size_t n = 5, std::size_t d = 4,
                                                 double w_scale = 1.0) {
  Rng rng(derive_seed(seed, "inversion"));
  Tensor w = random_matrix(rng, d, 1, w_scale);
  InversionInstance out;
  out.label = Mlp(MlpConfig{{d, 1}, Activation::kRelu}, {w}, {Tensor::vector({rng.normal()})});
  const Tensor e = random_matrix(rng, n, d);
  const Tensor p = out.label.forward(e);
  for (std::size_t i = 0; i < n; ++i) out.truth.push_back(p[i] + rng.normal());
  const Tensor g = shared_gradient(out.label, e, out.truth, LossKind::kL2);

  double ww = 0.0;
  for (double v : w.data()) ww += v * v;
  for (std::size_t i = 0; i < n; ++i) {
    double gw = 0.0;
    for (std::size_t c = 0; c < d; ++c) gw += g.at(i, c) * w[c];
    out.closed_form.push_back(p[i] - static_cast<double>(n) * gw / (2.0 * ww));
  }
  out.problem.embeddings = e;
  out.problem.gradients = g;
  for (std::size_t i = 0; i < n; ++i) out.problem.sample_indices.push_back(i);
  out.problem.sample_scale.assign(n, 1.0 / static_cast<double>(n));
  return out;
}

/// Attack settings for the inversion oracle: gradient matching only, the
/// surrogate frozen at the true linear model.
inline AttackConfig inversion_attack_config(std::size_t d, std::uint64_t seed) {
  AttackConfig c;
  c.lambda1 = 0.0;
  c.lambda2 = 0.0;
  c.loss = LossKind::kL2;
  c.surrogate = MlpConfig{{d, 1}, Activation::kRelu};
  c.iterations = 6000;  // Adam moves z at most ~lr per step; labels can sit 10+ away
  c.seed = seed;
  return c;
}

}  // namespace splitleak::testing
