// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "doctest.h"
#include "iposter/errors.hpp"
#include "iposter/numerics/adam.hpp"
#include "iposter/numerics/checkpoint.hpp"
#include "iposter/numerics/ops.hpp"
#include "iposter/numerics/tape.hpp"

using namespace iposter;
using nn::Matrixd;
using Vd = nn::Var<double>;
using Td = nn::Tape<double>;

namespace {

Matrixd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrixd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

using Fn = std::function<Vd(Td&, const std::vector<Vd>&)>;

// Worst mismatch between tape gradients and central differences of <f(x), R> for a fixed random R.
double grad_mismatch(std::vector<Matrixd> inputs, const Fn& f, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  Matrixd proj;
  auto objective = [&](const std::vector<Matrixd>& xs, std::vector<Matrixd>* grads) {
    Td tape;
    std::vector<Vd> vars;
    for (const auto& x : xs) vars.push_back(tape.input(x));
    Vd out = f(tape, vars);
    if (proj.size() == 0) proj = random_matrix(out.rows(), out.cols(), rng);
    Vd loss = nn::sum(nn::mul(out, tape.constant(proj)));
    if (grads) {
      tape.backward(loss);
      for (const auto& v : vars) grads->push_back(tape.grad(v));
    }
    return loss.value()(0, 0);
  };
  std::vector<Matrixd> analytic;
  objective(inputs, &analytic);
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      const double x = inputs[k].data()[i];
      inputs[k].data()[i] = x + h;
      const double up = objective(inputs, nullptr);
      inputs[k].data()[i] = x - h;
      const double down = objective(inputs, nullptr);
      inputs[k].data()[i] = x;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[k].data()[i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  return worst;
}

constexpr double kGradTol = 1e-6;

}  // namespace

TEST_CASE("op gradients match central differences") {
  std::mt19937_64 rng(42);
  auto R = [&](Eigen::Index r, Eigen::Index c) { return random_matrix(r, c, rng); };

  SUBCASE("matmul") {
    CHECK(grad_mismatch({R(3, 4), R(4, 2)}, [](Td&, const auto& v) { return nn::matmul(v[0], v[1]); }) < kGradTol);
  }
  SUBCASE("add sub mul scale") {
    CHECK(grad_mismatch({R(3, 4), R(3, 4)}, [](Td&, const auto& v) {
            return nn::scale(nn::mul(nn::add(v[0], v[1]), nn::sub(v[0], v[1])), 0.7);
          }) < kGradTol);
  }
  SUBCASE("add_row and scale_rows") {
    CHECK(grad_mismatch({R(4, 3), R(1, 3)}, [](Td&, const auto& v) {
            static const double w[] = {0.5, -1.0, 2.0, 0.0};
            return nn::scale_rows(nn::add_row(v[0], v[1]), std::span<const double>(w));
          }) < kGradTol);
  }
  SUBCASE("concat and slice") {
    CHECK(grad_mismatch({R(2, 3), R(2, 2), R(1, 5)}, [](Td&, const auto& v) {
            auto c = nn::concat_cols<double>({v[0], v[1]});
            auto r = nn::concat_rows<double>({c, v[2]});
            return nn::slice_rows(nn::slice_cols(r, 1, 3), 1, 2);
          }) < kGradTol);
  }
  SUBCASE("sum and mean") {
    CHECK(grad_mismatch({R(3, 3)}, [](Td&, const auto& v) { return nn::add(nn::sum(v[0]), nn::mean(v[0])); }) <
          kGradTol);
  }
  SUBCASE("gather and scatter") {
    CHECK(grad_mismatch({R(4, 3)}, [](Td&, const auto& v) {
            static const int gi[] = {0, 2, 2, 3, 1};
            static const int si[] = {1, 1, 0, 3, 1};
            auto g = nn::gather_rows(v[0], std::span<const int>(gi));
            auto a = nn::scatter_add(g, std::span<const int>(si), 5);
            auto m = nn::scatter_mean(g, std::span<const int>(si), 5);
            return nn::add(a, m);
          }) < kGradTol);
  }
  SUBCASE("gelu and softmax") {
    CHECK(grad_mismatch({R(3, 5)}, [](Td&, const auto& v) { return nn::softmax(nn::gelu(v[0])); }) < kGradTol);
  }
  SUBCASE("layer norm") {
    CHECK(grad_mismatch({R(4, 6), R(1, 6), R(1, 6)},
                        [](Td&, const auto& v) { return nn::layer_norm(v[0], v[1], v[2]); }) < kGradTol);
  }
  SUBCASE("grouped attention") {
    // two groups: 3 queries over 4 keys each, 2 heads of width 2
    CHECK(grad_mismatch({R(6, 4), R(8, 4), R(8, 4)}, [](Td&, const auto& v) {
            return nn::grouped_attention(v[0], v[1], v[2], 2, 3, 4);
          }) < kGradTol);
  }
  SUBCASE("weighted mse") {
    const Matrixd target = R(3, 2);
    Matrixd weight = Matrixd::Ones(3, 2);
    weight(1, 0) = 0.0;
    CHECK(grad_mismatch({R(3, 2)}, [&](Td&, const auto& v) { return nn::weighted_mse(v[0], target, weight); }) <
          kGradTol);
  }
}

TEST_CASE("forward values of basic ops") {
  Td tape;
  Matrixd a(2, 2);
  a << 1, 2, 3, 4;
  auto x = tape.input(a);
  CHECK(nn::sum(x).value()(0, 0) == 10.0);
  CHECK(nn::mean(x).value()(0, 0) == 2.5);
  auto s = nn::softmax(x).value();
  CHECK(s.row(0).sum() == doctest::Approx(1.0));
  CHECK(s(0, 1) / s(0, 0) == doctest::Approx(std::exp(1.0)));
  auto g = nn::gelu(tape.input(Matrixd::Constant(1, 1, 1.0))).value()(0, 0);
  CHECK(g == doctest::Approx(0.8413447460685429));
  const Matrixd target = Matrixd::Zero(2, 2);
  Matrixd w = Matrixd::Ones(2, 2);
  w(1, 1) = 0.0;
  CHECK(nn::weighted_mse(x, target, w).value()(0, 0) == doctest::Approx((1 + 4 + 9) / 3.0));
  CHECK(nn::weighted_mse(x, target, Matrixd(Matrixd::Zero(2, 2))).value()(0, 0) == 0.0);
}

TEST_CASE("attention groups do not see each other") {
  std::mt19937_64 rng(3);
  Td tape;
  Matrixd q = random_matrix(2, 2, rng);
  Matrixd k = random_matrix(4, 2, rng);
  Matrixd v = random_matrix(4, 2, rng);
  const Matrixd before = nn::grouped_attention(tape.input(q), tape.input(k), tape.input(v), 1, 1, 2).value();
  v.row(3).setConstant(100.0);
  k.row(3).setConstant(-5.0);
  const Matrixd after = nn::grouped_attention(tape.input(q), tape.input(k), tape.input(v), 1, 1, 2).value();
  CHECK(before.row(0).isApprox(after.row(0)));
  CHECK_FALSE(before.row(1).isApprox(after.row(1)));
}

TEST_CASE("sinusoidal embedding") {
  const int ts[] = {0, 5};
  const Matrixd e = nn::sinusoidal_embed<double>(std::span<const int>(ts), 4);
  CHECK(e(0, 0) == 0.0);
  CHECK(e(0, 1) == 1.0);
  CHECK(e(1, 0) == doctest::Approx(std::sin(5.0)));
  CHECK(e(1, 2) == doctest::Approx(std::sin(5.0 * std::pow(10000.0, -0.5))));
}

TEST_CASE("checked tapes reject non-finite values") {
  nn::Tape<float> tape(true, true);
  Eigen::Matrix<float, -1, -1, Eigen::RowMajor> m(1, 2);
  m << 1.0f, std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(tape.input(m), NumericsError);
  auto big = tape.input(nn::Matrixf::Constant(1, 1, 1e30f));
  CHECK_THROWS_AS(nn::scale(big, 1e30f), NumericsError);
  nn::Tape<float> lax(true, false);
  CHECK_NOTHROW(lax.input(m));
}

TEST_CASE("parameter gradients accumulate through the tape") {
  nn::ParameterStore<double> store;
  auto& p = store.add("w", Matrixd::Constant(1, 2, 2.0));
  CHECK_THROWS_AS(store.add("w", Matrixd::Zero(1, 1)), InvalidInput);
  Td tape;
  auto w = tape.param(p);
  tape.backward(nn::sum(nn::mul(w, w)));
  CHECK(p.grad(0, 0) == doctest::Approx(4.0));
  store.zero_grad();
  CHECK(p.grad(0, 1) == 0.0);
  Td frozen(false);
  CHECK_THROWS_AS(frozen.backward(nn::sum(frozen.param(p))), InvalidInput);
}

TEST_CASE("adam matches a hand computation") {
  nn::ParameterStore<double> store;
  auto& p = store.add("x", Matrixd::Constant(1, 1, 1.0));
  nn::AdamConfig cfg;
  cfg.lr = 0.1;
  // bias correction makes the first steps move by lr * sign(grad) for a constant gradient
  p.grad(0, 0) = 0.5;
  nn::adam_step(store, cfg);
  CHECK(p.value(0, 0) == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(p.m(0, 0) == doctest::Approx(0.05));
  CHECK(p.v(0, 0) == doctest::Approx(0.00025));
  CHECK(p.grad(0, 0) == 0.0);
  p.grad(0, 0) = -1.0;
  nn::adam_step(store, cfg);
  // m = 0.9*0.05 - 0.1 = -0.055, v = 0.999*0.00025 + 0.001 = 0.00124975
  const double mhat = -0.055 / (1 - 0.81);
  const double vhat = 0.00124975 / (1 - 0.998001);
  CHECK(p.value(0, 0) == doctest::Approx(0.9 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8)));
  CHECK(store.step == 2);
  nn::AdamConfig bad;
  bad.beta1 = 1.0;
  CHECK_THROWS_AS(nn::adam_step(store, bad), InvalidInput);
}

TEST_CASE("gradient clipping by global norm") {
  nn::ParameterStore<double> store;
  auto& a = store.add("a", Matrixd::Zero(1, 1));
  auto& b = store.add("b", Matrixd::Zero(1, 1));
  a.grad(0, 0) = 3.0;
  b.grad(0, 0) = 4.0;
  CHECK(nn::clip_grad_norm(store, 1.0) == doctest::Approx(5.0));
  CHECK(a.grad(0, 0) == doctest::Approx(0.6));
  CHECK(b.grad(0, 0) == doctest::Approx(0.8));
  CHECK(nn::clip_grad_norm(store, 10.0) == doctest::Approx(1.0));
  CHECK(a.grad(0, 0) == doctest::Approx(0.6));
}

TEST_CASE("checkpoint serialization") {
  nn::Checkpoint ck;
  ck.config_json = R"({"model":{"d_model":8}})";
  nn::Matrixf m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  ck.tensors.push_back(nn::to_named_tensor("param/a", m));
  ck.tensors.push_back(nn::to_named_tensor("ema/a", m * 2));
  const auto bytes = nn::serialize_checkpoint(ck);
  const nn::Checkpoint back = nn::deserialize_checkpoint(bytes);
  CHECK(back.config_json == ck.config_json);
  REQUIRE(back.tensors.size() == 2);
  CHECK(nn::to_matrix(*back.find("ema/a")) == m * 2);
  CHECK(back.find("missing") == nullptr);
  CHECK(nn::serialize_checkpoint(back) == bytes);

  SUBCASE("truncation is detected at every length") {
    for (std::size_t n = 0; n < bytes.size(); ++n) {
      std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(n));
      CHECK_THROWS_AS(nn::deserialize_checkpoint(cut), InvalidInput);
    }
  }
  SUBCASE("bad magic and trailing bytes") {
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(nn::deserialize_checkpoint(bad), InvalidInput);
    auto longer = bytes;
    longer.push_back(0);
    CHECK_THROWS_AS(nn::deserialize_checkpoint(longer), InvalidInput);
  }
  SUBCASE("file round trip") {
    const auto path = std::filesystem::temp_directory_path() / "iposter_ckpt_test.bin";
    nn::save_checkpoint(path, ck);
    CHECK(nn::serialize_checkpoint(nn::load_checkpoint(path)) == bytes);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(nn::load_checkpoint(path), InvalidInput);
  }
}
