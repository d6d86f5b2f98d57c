// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#include "iposter/numerics/ops.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <string>

#include <unsupported/Eigen/SpecialFunctions>

namespace iposter::nn {

namespace {

template <typename S>
void require(bool ok, const char* op, const char* what) {
  if (!ok) throw InvalidInput(std::string(op) + ": " + what);
}

template <typename S>
void require_same_tape(const Var<S>& a, const Var<S>& b, const char* op) {
  require<S>(&a.tape() == &b.tape(), op, "operands live on different tapes");
}

}  // namespace

template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  require_same_tape(a, b, "matmul");
  require<S>(a.cols() == b.rows(), "matmul", "inner dimensions differ");
  Matrix<S> out = a.value() * b.value();
  const int ia = a.id(), ib = b.id();
  return a.tape().push(std::move(out), {ia, ib}, [ia, ib](Tape<S>& t, int self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia).noalias() += g * t.value(ib).transpose();
    if (t.requires_grad(ib)) t.grad(ib).noalias() += t.value(ia).transpose() * g;
  }, "matmul");
}

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  require_same_tape(a, b, "add");
  require<S>(a.rows() == b.rows() && a.cols() == b.cols(), "add", "shape mismatch");
  Matrix<S> out = a.value() + b.value();
  const int ia = a.id(), ib = b.id();
  return a.tape().push(std::move(out), {ia, ib}, [ia, ib](Tape<S>& t, int self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia) += g;
    if (t.requires_grad(ib)) t.grad(ib) += g;
  }, "add");
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  require_same_tape(a, b, "sub");
  require<S>(a.rows() == b.rows() && a.cols() == b.cols(), "sub", "shape mismatch");
  Matrix<S> out = a.value() - b.value();
  const int ia = a.id(), ib = b.id();
  return a.tape().push(std::move(out), {ia, ib}, [ia, ib](Tape<S>& t, int self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia) += g;
    if (t.requires_grad(ib)) t.grad(ib) -= g;
  }, "sub");
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  require_same_tape(a, b, "mul");
  require<S>(a.rows() == b.rows() && a.cols() == b.cols(), "mul", "shape mismatch");
  Matrix<S> out = a.value().cwiseProduct(b.value());
  const int ia = a.id(), ib = b.id();
  return a.tape().push(std::move(out), {ia, ib}, [ia, ib](Tape<S>& t, int self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia) += g.cwiseProduct(t.value(ib));
    if (t.requires_grad(ib)) t.grad(ib) += g.cwiseProduct(t.value(ia));
  }, "mul");
}

template <typename S>
Var<S> scale(const Var<S>& a, S factor) {
  Matrix<S> out = a.value() * factor;
  const int ia = a.id();
  return a.tape().push(std::move(out), {ia}, [ia, factor](Tape<S>& t, int self) {
    t.grad(ia) += t.grad(self) * factor;
  }, "scale");
}

template <typename S>
Var<S> add_row(const Var<S>& a, const Var<S>& row) {
  require_same_tape(a, row, "add_row");
  require<S>(row.rows() == 1 && row.cols() == a.cols(), "add_row", "row must be 1 x cols");
  Matrix<S> out = a.value().rowwise() + row.value().row(0);
  const int ia = a.id(), ir = row.id();
  return a.tape().push(std::move(out), {ia, ir}, [ia, ir](Tape<S>& t, int self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia) += g;
    if (t.requires_grad(ir)) t.grad(ir) += g.colwise().sum();
  }, "add_row");
}

template <typename S>
Var<S> scale_rows(const Var<S>& a, std::span<const S> weights) {
  require<S>(static_cast<Eigen::Index>(weights.size()) == a.rows(), "scale_rows", "one weight per row required");
  Eigen::Matrix<S, Eigen::Dynamic, 1> w(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) w[static_cast<Eigen::Index>(i)] = weights[i];
  Matrix<S> out = w.asDiagonal() * a.value();
  const int ia = a.id();
  return a.tape().push(std::move(out), {ia}, [ia, w](Tape<S>& t, int self) {
    t.grad(ia) += w.asDiagonal() * t.grad(self);
  }, "scale_rows");
}

template <typename S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  require<S>(!parts.empty(), "concat_cols", "no operands");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    require_same_tape(parts[0], p, "concat_cols");
    require<S>(p.rows() == rows, "concat_cols", "row counts differ");
    cols += p.cols();
  }
  Matrix<S> out(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.cols();
  }
  auto& tape = parts[0].tape();
  auto back = [ids, offsets](Tape<S>& t, int self) {
    const auto& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.requires_grad(ids[k])) continue;
      auto& gk = t.grad(ids[k]);
      gk += g.middleCols(offsets[k], gk.cols());
    }
  };
  return tape.push(std::move(out), std::span<const int>(ids), back, "concat_cols");
}

template <typename S>
Var<S> concat_rows(const std::vector<Var<S>>& parts) {
  require<S>(!parts.empty(), "concat_rows", "no operands");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    require_same_tape(parts[0], p, "concat_rows");
    require<S>(p.cols() == cols, "concat_rows", "column counts differ");
    rows += p.rows();
  }
  Matrix<S> out(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.rows();
  }
  auto& tape = parts[0].tape();
  auto back = [ids, offsets](Tape<S>& t, int self) {
    const auto& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.requires_grad(ids[k])) continue;
      auto& gk = t.grad(ids[k]);
      gk += g.middleRows(offsets[k], gk.rows());
    }
  };
  return tape.push(std::move(out), std::span<const int>(ids), back, "concat_rows");
}

template <typename S>
Var<S> slice_cols(const Var<S>& a, Eigen::Index start, Eigen::Index count) {
  require<S>(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols", "range out of bounds");
  Matrix<S> out = a.value().middleCols(start, count);
  const int ia = a.id();
  return a.tape().push(std::move(out), {ia}, [ia, start, count](Tape<S>& t, int self) {
    t.grad(ia).middleCols(start, count) += t.grad(self);
  }, "slice_cols");
}

template <typename S>
Var<S> slice_rows(const Var<S>& a, Eigen::Index start, Eigen::Index count) {
  require<S>(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows", "range out of bounds");
  Matrix<S> out = a.value().middleRows(start, count);
  const int ia = a.id();
  return a.tape().push(std::move(out), {ia}, [ia, start, count](Tape<S>& t, int self) {
    t.grad(ia).middleRows(start, count) += t.grad(self);
  }, "slice_rows");
}

template <typename S>
Var<S> sum(const Var<S>& a) {
  Matrix<S> out(1, 1);
  out(0, 0) = a.value().sum();
  const int ia = a.id();
  return a.tape().push(std::move(out), {ia}, [ia](Tape<S>& t, int self) {
    t.grad(ia).array() += t.grad(self)(0, 0);
  }, "sum");
}

template <typename S>
Var<S> mean(const Var<S>& a) {
  require<S>(a.value().size() > 0, "mean", "empty operand");
  const S n = static_cast<S>(a.value().size());
  Matrix<S> out(1, 1);
  out(0, 0) = a.value().sum() / n;
  const int ia = a.id();
  return a.tape().push(std::move(out), {ia}, [ia, n](Tape<S>& t, int self) {
    t.grad(ia).array() += t.grad(self)(0, 0) / n;
  }, "mean");
}

template <typename S>
Var<S> gather_rows(const Var<S>& a, std::span<const int> index) {
  const auto& av = a.value();
  Matrix<S> out(static_cast<Eigen::Index>(index.size()), av.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    require<S>(index[k] >= 0 && index[k] < av.rows(), "gather_rows", "index out of range");
    out.row(static_cast<Eigen::Index>(k)) = av.row(index[k]);
  }
  const int ia = a.id();
  std::vector<int> idx(index.begin(), index.end());
  return a.tape().push(std::move(out), {ia}, [ia, idx = std::move(idx)](Tape<S>& t, int self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(ia);
    for (std::size_t k = 0; k < idx.size(); ++k) ga.row(idx[k]) += g.row(static_cast<Eigen::Index>(k));
  }, "gather_rows");
}

namespace {

template <typename S>
Var<S> scatter_impl(const Var<S>& a, std::span<const int> index, Eigen::Index num_rows, bool average) {
  const auto& av = a.value();
  require<S>(static_cast<Eigen::Index>(index.size()) == av.rows(), "scatter", "one index per row required");
  Matrix<S> out = Matrix<S>::Zero(num_rows, av.cols());
  std::vector<S> inv(static_cast<std::size_t>(num_rows), S(1));
  if (average) {
    std::vector<int> counts(static_cast<std::size_t>(num_rows), 0);
    for (int i : index) {
      require<S>(i >= 0 && i < num_rows, "scatter", "index out of range");
      ++counts[static_cast<std::size_t>(i)];
    }
    for (std::size_t r = 0; r < counts.size(); ++r) inv[r] = counts[r] > 0 ? S(1) / S(counts[r]) : S(0);
  }
  for (std::size_t k = 0; k < index.size(); ++k) {
    require<S>(index[k] >= 0 && index[k] < num_rows, "scatter", "index out of range");
    out.row(index[k]) += av.row(static_cast<Eigen::Index>(k));
  }
  if (average) {
    for (Eigen::Index r = 0; r < num_rows; ++r) out.row(r) *= inv[static_cast<std::size_t>(r)];
  }
  const int ia = a.id();
  std::vector<int> idx(index.begin(), index.end());
  return a.tape().push(std::move(out), {ia}, [ia, idx = std::move(idx), inv = std::move(inv)](Tape<S>& t, int self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(ia);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      ga.row(static_cast<Eigen::Index>(k)) += g.row(idx[k]) * inv[static_cast<std::size_t>(idx[k])];
    }
  }, average ? "scatter_mean" : "scatter_add");
}

}  // namespace

template <typename S>
Var<S> scatter_add(const Var<S>& a, std::span<const int> index, Eigen::Index num_rows) {
  return scatter_impl(a, index, num_rows, false);
}

template <typename S>
Var<S> scatter_mean(const Var<S>& a, std::span<const int> index, Eigen::Index num_rows) {
  return scatter_impl(a, index, num_rows, true);
}

template <typename S>
Var<S> gelu(const Var<S>& a) {
  const S inv_sqrt2 = S(1) / std::numbers::sqrt2_v<S>;
  // Phi(x) is kept for the backward pass; erf and exp use Eigen's vectorized kernels
  auto cdf = std::make_shared<Matrix<S>>((S(0.5) * (S(1) + (a.value().array() * inv_sqrt2).erf())).matrix());
  Matrix<S> out = a.value().cwiseProduct(*cdf);
  const int ia = a.id();
  return a.tape().push(std::move(out), {ia}, [ia, cdf, inv_sqrt2](Tape<S>& t, int self) {
    const S inv_sqrt_2pi = inv_sqrt2 * std::numbers::inv_sqrtpi_v<S>;
    const auto x = t.value(ia).array();
    t.grad(ia).array() += t.grad(self).array() * (cdf->array() + x * inv_sqrt_2pi * (S(-0.5) * x.square()).exp());
  }, "gelu");
}

namespace {

template <typename S>
void softmax_rows_inplace(Matrix<S>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const S mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
}

}  // namespace

template <typename S>
Var<S> softmax(const Var<S>& a) {
  Matrix<S> out = a.value();
  softmax_rows_inplace(out);
  const int ia = a.id();
  return a.tape().push(std::move(out), {ia}, [ia](Tape<S>& t, int self) {
    const auto& y = t.value(self);
    const auto& g = t.grad(self);
    const Eigen::Matrix<S, Eigen::Dynamic, 1> dot = g.cwiseProduct(y).rowwise().sum();
    t.grad(ia) += y.cwiseProduct(g - dot.replicate(1, g.cols()));
  }, "softmax");
}

template <typename S>
Var<S> layer_norm(const Var<S>& a, const Var<S>& gain, const Var<S>& bias, S eps) {
  require_same_tape(a, gain, "layer_norm");
  require<S>(gain.rows() == 1 && gain.cols() == a.cols() && bias.rows() == 1 && bias.cols() == a.cols(),
             "layer_norm", "gain/bias must be 1 x cols");
  const auto& x = a.value();
  const Eigen::Index n = x.cols();
  Matrix<S> xhat(x.rows(), n);
  Eigen::Matrix<S, Eigen::Dynamic, 1> rstd(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const S mu = x.row(r).mean();
    const S var = (x.row(r).array() - mu).square().mean();
    rstd[r] = S(1) / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mu) * rstd[r];
  }
  Matrix<S> out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  const int ia = a.id(), ig = gain.id(), ib = bias.id();
  return a.tape().push(std::move(out), {ia, ig, ib},
                       [ia, ig, ib, xhat = std::move(xhat), rstd = std::move(rstd), n](Tape<S>& t, int self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ig)) t.grad(ig) += g.cwiseProduct(xhat).colwise().sum();
    if (t.requires_grad(ib)) t.grad(ib) += g.colwise().sum();
    if (t.requires_grad(ia)) {
      const Matrix<S> dxhat = g.array().rowwise() * t.value(ig).row(0).array();
      auto& ga = t.grad(ia);
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        const S m1 = dxhat.row(r).sum() / S(n);
        const S m2 = dxhat.row(r).dot(xhat.row(r)) / S(n);
        ga.row(r).array() += rstd[r] * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
      }
    }
  }, "layer_norm");
}

template <typename S>
Var<S> grouped_attention(const Var<S>& q, const Var<S>& k, const Var<S>& v, int heads, int q_group, int kv_group) {
  require_same_tape(q, k, "attention");
  require_same_tape(q, v, "attention");
  const Eigen::Index d = q.cols();
  require<S>(heads > 0 && d % heads == 0, "attention", "width must be divisible by heads");
  require<S>(k.cols() == d && v.cols() == d, "attention", "q/k/v widths differ");
  require<S>(q_group > 0 && kv_group > 0 && q.rows() % q_group == 0, "attention", "bad query grouping");
  const Eigen::Index groups = q.rows() / q_group;
  require<S>(k.rows() == groups * kv_group && v.rows() == k.rows(), "attention", "key/value rows do not match groups");
  const Eigen::Index dh = d / heads;
  const S inv_scale = S(1) / std::sqrt(static_cast<S>(dh));

  const auto& Q = q.value();
  const auto& K = k.value();
  const auto& V = v.value();
  Matrix<S> out(q.rows(), d);
  auto probs = std::make_shared<std::vector<Matrix<S>>>();
  probs->reserve(static_cast<std::size_t>(groups * heads));
  for (Eigen::Index g = 0; g < groups; ++g) {
    for (Eigen::Index h = 0; h < heads; ++h) {
      const auto qg = Q.block(g * q_group, h * dh, q_group, dh);
      const auto kg = K.block(g * kv_group, h * dh, kv_group, dh);
      const auto vg = V.block(g * kv_group, h * dh, kv_group, dh);
      Matrix<S> p = (qg * kg.transpose()) * inv_scale;
      softmax_rows_inplace(p);
      out.block(g * q_group, h * dh, q_group, dh).noalias() = p * vg;
      probs->push_back(std::move(p));
    }
  }
  const int iq = q.id(), ik = k.id(), iv = v.id();
  return q.tape().push(std::move(out), {iq, ik, iv},
                       [=](Tape<S>& t, int self) {
    const auto& G = t.grad(self);
    const auto& Qv = t.value(iq);
    const auto& Kv = t.value(ik);
    const auto& Vv = t.value(iv);
    const bool gq = t.requires_grad(iq), gk = t.requires_grad(ik), gv = t.requires_grad(iv);
    Matrix<S>* dQ = gq ? &t.grad(iq) : nullptr;
    Matrix<S>* dK = gk ? &t.grad(ik) : nullptr;
    Matrix<S>* dV = gv ? &t.grad(iv) : nullptr;
    std::size_t idx = 0;
    for (Eigen::Index g = 0; g < groups; ++g) {
      for (Eigen::Index h = 0; h < heads; ++h, ++idx) {
        const Matrix<S>& p = (*probs)[idx];
        const auto dO = G.block(g * q_group, h * dh, q_group, dh);
        const auto vg = Vv.block(g * kv_group, h * dh, kv_group, dh);
        if (dV) dV->block(g * kv_group, h * dh, kv_group, dh).noalias() += p.transpose() * dO;
        if (!dQ && !dK) continue;
        const Matrix<S> dP = dO * vg.transpose();
        const Eigen::Matrix<S, Eigen::Dynamic, 1> dot = dP.cwiseProduct(p).rowwise().sum();
        const Matrix<S> dS = p.cwiseProduct(dP - dot.replicate(1, dP.cols())) * inv_scale;
        if (dQ) dQ->block(g * q_group, h * dh, q_group, dh).noalias() += dS * Kv.block(g * kv_group, h * dh, kv_group, dh);
        if (dK) dK->block(g * kv_group, h * dh, kv_group, dh).noalias() += dS.transpose() * Qv.block(g * q_group, h * dh, q_group, dh);
      }
    }
  }, "attention");
}

template <typename S>
Var<S> weighted_mse(const Var<S>& a, const Matrix<S>& target, const Matrix<S>& weight) {
  require<S>(target.rows() == a.rows() && target.cols() == a.cols() && weight.rows() == a.rows() &&
                 weight.cols() == a.cols(),
             "weighted_mse", "shape mismatch");
  const S total = weight.sum();
  const S norm = total > S(0) ? S(1) / total : S(0);
  const Matrix<S> diff = a.value() - target;
  Matrix<S> out(1, 1);
  out(0, 0) = (diff.array().square() * weight.array()).sum() * norm;
  const int ia = a.id();
  return a.tape().push(std::move(out), {ia}, [ia, diff, weight, norm](Tape<S>& t, int self) {
    const S g = t.grad(self)(0, 0);
    t.grad(ia).array() += (S(2) * norm * g) * diff.array() * weight.array();
  }, "weighted_mse");
}

template <typename S>
Matrix<S> sinusoidal_embed(std::span<const int> timesteps, int dim) {
  if (dim < 2 || dim % 2 != 0) throw InvalidInput("sinusoidal_embed: dim must be even and >= 2");
  Matrix<S> out(static_cast<Eigen::Index>(timesteps.size()), dim);
  const int half = dim / 2;
  for (std::size_t r = 0; r < timesteps.size(); ++r) {
    for (int k = 0; k < half; ++k) {
      const double w = std::pow(10000.0, -2.0 * k / dim);
      const double arg = timesteps[r] * w;
      out(static_cast<Eigen::Index>(r), 2 * k) = static_cast<S>(std::sin(arg));
      out(static_cast<Eigen::Index>(r), 2 * k + 1) = static_cast<S>(std::cos(arg));
    }
  }
  return out;
}

#define IPOSTER_INSTANTIATE_OPS(S)                                                                     \
  template Var<S> matmul(const Var<S>&, const Var<S>&);                                              \
  template Var<S> add(const Var<S>&, const Var<S>&);                                                 \
  template Var<S> sub(const Var<S>&, const Var<S>&);                                                 \
  template Var<S> mul(const Var<S>&, const Var<S>&);                                                 \
  template Var<S> scale(const Var<S>&, S);                                                           \
  template Var<S> add_row(const Var<S>&, const Var<S>&);                                             \
  template Var<S> scale_rows(const Var<S>&, std::span<const S>);                                     \
  template Var<S> concat_cols(const std::vector<Var<S>>&);                                           \
  template Var<S> concat_rows(const std::vector<Var<S>>&);                                           \
  template Var<S> slice_cols(const Var<S>&, Eigen::Index, Eigen::Index);                             \
  template Var<S> slice_rows(const Var<S>&, Eigen::Index, Eigen::Index);                             \
  template Var<S> sum(const Var<S>&);                                                                \
  template Var<S> mean(const Var<S>&);                                                               \
  template Var<S> gather_rows(const Var<S>&, std::span<const int>);                                  \
  template Var<S> scatter_add(const Var<S>&, std::span<const int>, Eigen::Index);                    \
  template Var<S> scatter_mean(const Var<S>&, std::span<const int>, Eigen::Index);                   \
  template Var<S> gelu(const Var<S>&);                                                               \
  template Var<S> softmax(const Var<S>&);                                                            \
  template Var<S> layer_norm(const Var<S>&, const Var<S>&, const Var<S>&, S);                        \
  template Var<S> grouped_attention(const Var<S>&, const Var<S>&, const Var<S>&, int, int, int);     \
  template Var<S> weighted_mse(const Var<S>&, const Matrix<S>&, const Matrix<S>&);                   \
  template Matrix<S> sinusoidal_embed<S>(std::span<const int>, int);

IPOSTER_INSTANTIATE_OPS(float)
IPOSTER_INSTANTIATE_OPS(double)

}  // namespace iposter::nn
