// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>

#include "iposter/numerics/tape.hpp"

namespace iposter::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (!(lr > 0) || !(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1) || !(epsilon > 0)) {
      throw InvalidInput("AdamConfig: require lr > 0, 0 < beta1, beta2 < 1, epsilon > 0");
    }
  }
};

/// Bias-corrected Adam update of every parameter; gradients are zeroed afterwards.
template <typename Scalar>
void adam_step(ParameterStore<Scalar>& store, const AdamConfig& cfg) {
  cfg.validate();
  ++store.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(store.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(store.step));
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  const auto step_size = static_cast<Scalar>(cfg.lr / c1);
  const auto inv_sqrt_c2 = static_cast<Scalar>(1.0 / std::sqrt(c2));
  const auto eps = static_cast<Scalar>(cfg.epsilon);
  for (auto& p : store.params()) {
    p.m = b1 * p.m + (Scalar(1) - b1) * p.grad;
    p.v = b2 * p.v + (Scalar(1) - b2) * p.grad.cwiseAbs2();
    p.value.array() -= step_size * p.m.array() / (p.v.array().sqrt() * inv_sqrt_c2 + eps);
    p.grad.setZero();
  }
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`. Returns the norm before clipping.
template <typename Scalar>
double clip_grad_norm(ParameterStore<Scalar>& store, double max_norm) {
  double sq = 0.0;
  for (const auto& p : store.params()) sq += static_cast<double>(p.grad.squaredNorm());
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const auto f = static_cast<Scalar>(max_norm / norm);
    for (auto& p : store.params()) p.grad *= f;
  }
  return norm;
}

}  // namespace iposter::nn
