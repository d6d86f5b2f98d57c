// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "iposter/numerics/tape.hpp"

// Differentiable building blocks. Every op records itself on the tape of its first operand
// and throws InvalidInput on shape mismatch. Explicitly instantiated for float and double.
namespace iposter::nn {

template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b);
template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b);
template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b);
/// Elementwise product.
template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b);
template <typename S>
Var<S> scale(const Var<S>& a, S factor);
/// Adds a 1 x cols row to every row of `a`.
template <typename S>
Var<S> add_row(const Var<S>& a, const Var<S>& row);
/// Multiplies row i of `a` by the constant weights[i].
template <typename S>
Var<S> scale_rows(const Var<S>& a, std::span<const S> weights);

template <typename S>
Var<S> concat_cols(const std::vector<Var<S>>& parts);
template <typename S>
Var<S> concat_rows(const std::vector<Var<S>>& parts);
template <typename S>
Var<S> slice_cols(const Var<S>& a, Eigen::Index start, Eigen::Index count);
template <typename S>
Var<S> slice_rows(const Var<S>& a, Eigen::Index start, Eigen::Index count);

/// 1 x 1 reductions.
template <typename S>
Var<S> sum(const Var<S>& a);
template <typename S>
Var<S> mean(const Var<S>& a);

/// out.row(k) = a.row(index[k]).
template <typename S>
Var<S> gather_rows(const Var<S>& a, std::span<const int> index);
/// out.row(index[k]) += a.row(k); out has `num_rows` rows.
template <typename S>
Var<S> scatter_add(const Var<S>& a, std::span<const int> index, Eigen::Index num_rows);
/// Like scatter_add but divides each output row by the number of contributions (rows with none stay 0).
template <typename S>
Var<S> scatter_mean(const Var<S>& a, std::span<const int> index, Eigen::Index num_rows);

/// Exact (erf) GELU.
template <typename S>
Var<S> gelu(const Var<S>& a);
/// Softmax along the last axis.
template <typename S>
Var<S> softmax(const Var<S>& a);
/// Normalizes each row, then applies the 1 x cols gain and bias.
template <typename S>
Var<S> layer_norm(const Var<S>& a, const Var<S>& gain, const Var<S>& bias, S eps = S(1e-5));

/// Scaled dot-product multi-head attention on row groups. Rows of `q` form consecutive groups of
/// `q_group` rows; rows of `k`/`v` form groups of `kv_group` rows; group g attends only within g.
template <typename S>
Var<S> grouped_attention(const Var<S>& q, const Var<S>& k, const Var<S>& v, int heads, int q_group, int kv_group);

/// x W + b.
template <typename S>
Var<S> linear(const Var<S>& x, const Var<S>& weight, const Var<S>& bias) {
  return add_row(matmul(x, weight), bias);
}

/// Sum over entries of weight * (a - target)^2 divided by the weight total (0 when it is 0).
template <typename S>
Var<S> weighted_mse(const Var<S>& a, const Matrix<S>& target, const Matrix<S>& weight);

/// Constant sinusoidal embedding, one row per timestep: [sin(t w_0), cos(t w_0), sin(t w_1), ...]
/// with w_k = 10000^(-2k/dim).
template <typename S>
Matrix<S> sinusoidal_embed(std::span<const int> timesteps, int dim);

}  // namespace iposter::nn
