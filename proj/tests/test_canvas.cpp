// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>

#include "doctest.h"
#include "iposter/canvas.hpp"
#include "iposter/errors.hpp"
#include "test_support.hpp"

using namespace iposter;

namespace {

Raster quantized(int w, int h, int c, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> level(0, 255);
  Raster r(w, h, c);
  for (auto& v : r.data()) v = static_cast<float>(level(rng)) / 255.0f;
  return r;
}

}  // namespace

TEST_CASE("png round trip is exact for 8-bit levels") {
  for (int channels : {1, 3}) {
    const Raster r = quantized(13, 7, channels, 3 + channels);
    const Raster back = decode_png(encode_png(r));
    CHECK(back == r);
  }
  // alpha is dropped on read: inputs are RGB canvases and gray saliency maps
  Raster opaque = quantized(5, 5, 4, 1);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) opaque.at(x, y, 3) = 1.0f;
  const Raster rgb = decode_png(encode_png(opaque));
  CHECK(rgb.channels() == 3);
  CHECK(rgb.at(2, 3, 1) == opaque.at(2, 3, 1));
  test::TempDir dir("png");
  const Raster r = quantized(8, 8, 3, 11);
  write_png(dir.path() / "x.png", r);
  CHECK(read_png(dir.path() / "x.png") == r);
}

TEST_CASE("png errors are reported") {
  const std::vector<std::uint8_t> junk = {1, 2, 3, 4, 5};
  CHECK_THROWS_AS(decode_png(junk), InvalidInput);
  CHECK_THROWS_AS(read_png("/nonexistent/none.png"), InvalidInput);
}

TEST_CASE("salbox from a thresholded map") {
  Raster s(10, 10, 1, 0.0f);
  s.at(2, 3) = 0.9f;
  s.at(6, 4) = 0.5f;
  s.at(8, 8) = 0.49f;
  const auto b = extract_salbox(s);
  REQUIRE(b.has_value());
  CHECK(b->left() == doctest::Approx(0.2));
  CHECK(b->right() == doctest::Approx(0.7));
  CHECK(b->top() == doctest::Approx(0.3));
  CHECK(b->bottom() == doctest::Approx(0.5));
  CHECK_FALSE(extract_salbox(Raster(4, 4, 1, 0.2f)).has_value());
}

TEST_CASE("patchify and unpatchify are inverse") {
  const Raster r = quantized(16, 8, 4, 5);
  const PatchGrid g = patchify(r, 4);
  CHECK(g.rows == 2);
  CHECK(g.cols == 4);
  CHECK(g.patches.rows() == 8);
  CHECK(g.patches.cols() == 4 * 4 * 4);
  CHECK(unpatchify(g) == r);
  CHECK_THROWS_AS(patchify(r, 5), InvalidInput);
}

TEST_CASE("compose, resize and grayscale") {
  const Raster c = quantized(8, 8, 3, 1);
  const Raster s = quantized(8, 8, 1, 2);
  const Raster four = compose_four_channel(c, s);
  CHECK(four.channels() == 4);
  CHECK(four.at(3, 5, 3) == s.at(3, 5));
  CHECK(four.at(3, 5, 1) == c.at(3, 5, 1));
  CHECK_THROWS_AS(compose_four_channel(c, quantized(4, 4, 1, 2)), InvalidInput);

  const Raster half = resize(c, 4, 4);
  const float expect = (c.at(2, 2, 0) + c.at(3, 2, 0) + c.at(2, 3, 0) + c.at(3, 3, 0)) / 4.0f;
  CHECK(half.at(1, 1, 0) == doctest::Approx(expect));
  CHECK(resize(c, 8, 8) == c);

  Raster white(2, 2, 3, 1.0f);
  CHECK(to_grayscale(white).at(1, 1) == doctest::Approx(1.0f));
}
