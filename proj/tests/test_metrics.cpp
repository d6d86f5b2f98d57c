// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "iposter/metrics.hpp"

using namespace iposter;

namespace {

Element el(Category c, double x0, double y0, double x1, double y1) { return {c, Box::from_corners(x0, y0, x1, y1)}; }

Raster left_half_salient(int n) {
  Raster s(n, n, 1, 0.0f);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n / 2; ++x) s.at(x, y) = 1.0f;
  return s;
}

}  // namespace

TEST_CASE("occlusion by hand") {
  const Raster s = left_half_salient(8);
  Layout l;
  l.elements.push_back(el(Category::Text, 0.25, 0.0, 0.75, 0.5));
  CHECK(occlusion(l, s) == doctest::Approx(0.5));
  // overlapping boxes count their union once
  l.elements.push_back(el(Category::Logo, 0.25, 0.0, 0.5, 0.5));
  CHECK(occlusion(l, s) == doctest::Approx(0.5));
  l.elements.push_back(el(Category::Logo, 0.75, 0.5, 1.0, 1.0));
  CHECK(occlusion(l, s) == doctest::Approx(0.125 / 0.375));
  CHECK(occlusion(Layout{}, s) == 0.0);
  // sub-pixel box inside one pixel takes that pixel's value
  Raster g(4, 4, 1, 0.0f);
  g.at(1, 2) = 0.6f;
  Layout tiny;
  tiny.elements.push_back(el(Category::Text, 0.3, 0.55, 0.45, 0.7));
  CHECK(occlusion(tiny, g) == doctest::Approx(0.6));
}

TEST_CASE("underlay scores by hand") {
  Layout l;
  l.elements.push_back(el(Category::Underlay, 0.1, 0.1, 0.5, 0.3));
  l.elements.push_back(el(Category::Text, 0.2, 0.15, 0.4, 0.25));
  CHECK(underlay_loose(l) == doctest::Approx(1.0));
  CHECK(underlay_strict(l) == 1.0);
  // a second underlay covering only half of a text
  l.elements.push_back(el(Category::Underlay, 0.3, 0.15, 0.6, 0.25));
  CHECK(underlay_loose(l) == doctest::Approx(0.75));
  CHECK(underlay_strict(l) == doctest::Approx(0.5));
  // no underlays: vacuous
  Layout plain;
  plain.elements.push_back(el(Category::Text, 0.2, 0.15, 0.4, 0.25));
  CHECK(underlay_loose(plain) == 1.0);
  CHECK(underlay_strict(plain) == 1.0);
  // an underlay with nothing to hold
  Layout lonely;
  lonely.elements.push_back(el(Category::Underlay, 0.1, 0.1, 0.5, 0.3));
  CHECK(underlay_loose(lonely) == 0.0);
  CHECK(underlay_strict(lonely) == 0.0);
}

TEST_CASE("overlay by hand") {
  Layout l;
  l.elements.push_back(el(Category::Text, 0.0, 0.0, 0.5, 0.5));
  l.elements.push_back(el(Category::Logo, 0.25, 0.25, 0.75, 0.75));
  l.elements.push_back(el(Category::Underlay, 0.0, 0.0, 1.0, 1.0));
  CHECK(overlay(l) == doctest::Approx(0.0625 / 0.4375));
  l.elements.push_back(el(Category::Text, 0.8, 0.8, 0.9, 0.9));
  CHECK(overlay(l) == doctest::Approx(0.0625 / 0.4375 / 3));
  Layout one;
  one.elements.push_back(el(Category::Text, 0.0, 0.0, 0.5, 0.5));
  CHECK(overlay(one) == 0.0);
}

TEST_CASE("readability is the mean gradient under text") {
  Raster flat(16, 16, 3, 0.5f);
  Layout l;
  l.elements.push_back(el(Category::Text, 0.25, 0.25, 0.75, 0.75));
  CHECK(readability(l, flat) == 0.0);
  Raster edge(16, 16, 3, 0.0f);
  for (int y = 0; y < 16; ++y)
    for (int x = 8; x < 16; ++x)
      for (int c = 0; c < 3; ++c) edge.at(x, y, c) = 1.0f;
  // columns 7 and 8 see a horizontal Sobel response of 4; 8 columns are covered
  CHECK(readability(l, edge) == doctest::Approx(4.0 * 2 / 8).epsilon(1e-5));
  Layout logos;
  logos.elements.push_back(el(Category::Logo, 0.25, 0.25, 0.75, 0.75));
  CHECK(readability(logos, edge) == 0.0);
}

TEST_CASE("rasterization uses pixel centers") {
  const Box b = Box::from_corners(0.1, 0.0, 0.3, 0.5);
  const CoverageMask m = rasterize(std::span<const Box>(&b, 1), 10, 2);
  // centers 0.15 and 0.25 fall inside, 0.05 and 0.35 do not
  CHECK(m.count() == 2);
  CHECK(m.at(1, 0));
  CHECK(m.at(2, 0));
  CHECK_FALSE(m.at(3, 0));
  CHECK_FALSE(m.at(1, 1));
}

TEST_CASE("analytic metrics agree with a raster oracle") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int R = 256;
  Raster sal(32, 32, 1);
  for (auto& v : sal.data()) v = static_cast<float>(u(rng));
  for (int trial = 0; trial < 30; ++trial) {
    Layout l;
    const int n = 2 + static_cast<int>(u(rng) * 5);
    for (int i = 0; i < n; ++i) {
      const double x0 = u(rng), y0 = u(rng);
      const auto cat = static_cast<Category>(1 + static_cast<int>(u(rng) * 3));
      l.elements.push_back(el(cat, x0, y0, std::min(1.0, x0 + 0.05 + 0.4 * u(rng)), std::min(1.0, y0 + 0.05 + 0.4 * u(rng))));
    }
    const CoverageMask cover = rasterize(l, R, R);
    double mass = 0.0;
    for (int y = 0; y < R; ++y)
      for (int x = 0; x < R; ++x)
        if (cover.at(x, y)) mass += sal.at(x * 32 / R, y * 32 / R);
    CHECK(std::abs(occlusion(l, sal) - mass / static_cast<double>(cover.count())) < 0.02);
  }
}

TEST_CASE("metrics are exactly permutation invariant") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Raster sal(16, 16, 1), canvas(16, 16, 3);
  for (auto& v : sal.data()) v = static_cast<float>(u(rng));
  for (auto& v : canvas.data()) v = static_cast<float>(u(rng));
  for (int trial = 0; trial < 20; ++trial) {
    Layout l;
    for (int i = 0; i < 7; ++i) {
      const auto cat = static_cast<Category>(1 + i % 3);
      l.elements.push_back({cat, clamp_to_canvas(Box{u(rng), u(rng), 0.1 + 0.5 * u(rng), 0.1 + 0.5 * u(rng)})});
    }
    const MetricsReport base = evaluate(l, canvas, sal);
    for (int p = 0; p < 5; ++p) {
      Layout q = l;
      std::shuffle(q.elements.begin(), q.elements.end(), rng);
      const MetricsReport r = evaluate(q, canvas, sal);
      CHECK(r.occ == base.occ);
      CHECK(r.rea == base.rea);
      CHECK(r.und_l == base.und_l);
      CHECK(r.und_s == base.und_s);
      CHECK(r.ove == base.ove);
    }
  }
}

namespace {

// Plain loops over the definitions, sharing only the Box accessors with the library.
double overlap_area(const Box& a, const Box& b) {
  const double w = std::min(a.right(), b.right()) - std::max(a.left(), b.left());
  const double h = std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
  return w > 0 && h > 0 ? w * h : 0.0;
}

double loop_und_l(const Layout& l) {
  double sum = 0.0;
  int underlays = 0;
  for (const auto& u : l.elements) {
    if (u.category != Category::Underlay) continue;
    ++underlays;
    double best = 0.0;
    for (const auto& e : l.elements) {
      const double a = e.box.w * e.box.h;
      if (e.category != Category::Underlay && a > 0) best = std::max(best, overlap_area(u.box, e.box) / a);
    }
    sum += best;
  }
  return underlays ? sum / underlays : 1.0;
}

double loop_und_s(const Layout& l, double eps) {
  int underlays = 0, valid = 0;
  for (const auto& u : l.elements) {
    if (u.category != Category::Underlay) continue;
    ++underlays;
    bool ok = false;
    for (const auto& e : l.elements) {
      ok = ok || (e.category != Category::Underlay && e.box.w * e.box.h > 0 && e.box.left() >= u.box.left() - eps &&
                  e.box.top() >= u.box.top() - eps && e.box.right() <= u.box.right() + eps &&
                  e.box.bottom() <= u.box.bottom() + eps);
    }
    valid += ok ? 1 : 0;
  }
  return underlays ? static_cast<double>(valid) / underlays : 1.0;
}

double loop_ove(const Layout& l) {
  double sum = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < l.size(); ++i) {
    for (std::size_t j = i + 1; j < l.size(); ++j) {
      const auto& a = l.elements[i];
      const auto& b = l.elements[j];
      if (a.category == Category::Underlay || b.category == Category::Underlay) continue;
      const double inter = overlap_area(a.box, b.box);
      const double uni = a.box.w * a.box.h + b.box.w * b.box.h - inter;
      sum += uni > 0 ? inter / uni : 0.0;
      ++pairs;
    }
  }
  return pairs ? sum / pairs : 0.0;
}

// Occlusion with exact fractional coverage of each saliency pixel by the union of boxes, found by
// splitting every pixel at all box edges.
double loop_occ(const Layout& l, const Raster& sal) {
  std::vector<double> xs = {0.0, 1.0}, ys = {0.0, 1.0};
  for (int k = 1; k < sal.width(); ++k) xs.push_back(static_cast<double>(k) / sal.width());
  for (int k = 1; k < sal.height(); ++k) ys.push_back(static_cast<double>(k) / sal.height());
  for (const auto& e : l.elements) {
    xs.push_back(std::clamp(e.box.left(), 0.0, 1.0));
    xs.push_back(std::clamp(e.box.right(), 0.0, 1.0));
    ys.push_back(std::clamp(e.box.top(), 0.0, 1.0));
    ys.push_back(std::clamp(e.box.bottom(), 0.0, 1.0));
  }
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  double mass = 0.0, area = 0.0;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    for (std::size_t j = 0; j + 1 < ys.size(); ++j) {
      const double w = xs[i + 1] - xs[i], h = ys[j + 1] - ys[j];
      if (w <= 0 || h <= 0) continue;
      const double cx = (xs[i] + xs[i + 1]) / 2, cy = (ys[j] + ys[j + 1]) / 2;
      bool covered = false;
      for (const auto& e : l.elements) {
        covered = covered || (cx > e.box.left() && cx < e.box.right() && cy > e.box.top() && cy < e.box.bottom());
      }
      if (!covered) continue;
      const int px = std::min(sal.width() - 1, static_cast<int>(cx * sal.width()));
      const int py = std::min(sal.height() - 1, static_cast<int>(cy * sal.height()));
      mass += w * h * sal.at(px, py);
      area += w * h;
    }
  }
  return area > 0 ? mass / area : 0.0;
}

}  // namespace

TEST_CASE("metrics agree with scalar loop oracles") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Raster sal(12, 12, 1);
  for (auto& v : sal.data()) v = static_cast<float>(u(rng));
  double worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    Layout l;
    const int n = 1 + static_cast<int>(u(rng) * 8);
    for (int i = 0; i < n; ++i) {
      const double w = 0.02 + 0.6 * u(rng), h = 0.02 + 0.6 * u(rng);
      const auto cat = static_cast<Category>(1 + static_cast<int>(u(rng) * 3) % 3);
      l.elements.push_back({cat, Box{w / 2 + (1 - w) * u(rng), h / 2 + (1 - h) * u(rng), w, h}});
    }
    // an underlay wrapping the first element exercises containment
    if (u(rng) < 0.5) {
      Box b = l.elements.front().box;
      b.w += 0.02;
      b.h += 0.02;
      l.elements.push_back({Category::Underlay, b});
    }
    worst = std::max(worst, std::abs(occlusion(l, sal) - loop_occ(l, sal)));
    worst = std::max(worst, std::abs(underlay_loose(l) - loop_und_l(l)));
    worst = std::max(worst, std::abs(underlay_strict(l) - loop_und_s(l, kContainEps)));
    worst = std::max(worst, std::abs(overlay(l) - loop_ove(l)));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("adding an element never shrinks the covered pixels") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    Layout l;
    std::size_t previous = 0;
    for (int i = 0; i < 8; ++i) {
      l.elements.push_back(el(Category::Text, u(rng) * 0.7, u(rng) * 0.7, 0.3 + u(rng) * 0.7, 0.3 + u(rng) * 0.7));
      const CoverageMask m = rasterize(l, 64, 64);
      CHECK(m.count() >= previous);
      previous = m.count();
    }
  }
}

TEST_CASE("overlay is zero for pairwise disjoint boxes") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    // one box per cell of a 4x4 grid, each strictly inside its cell
    Layout l;
    for (int cell = 0; cell < 16; ++cell) {
      if (u(rng) < 0.4) continue;
      const double x0 = (cell % 4) * 0.25, y0 = (cell / 4) * 0.25;
      const double a = u(rng) * 0.1, b = u(rng) * 0.1;
      const auto cat = static_cast<Category>(1 + static_cast<int>(u(rng) * 3) % 3);
      l.elements.push_back(el(cat, x0 + a, y0 + b, x0 + a + 0.02 + u(rng) * 0.12, y0 + b + 0.02 + u(rng) * 0.12));
    }
    CHECK(overlay(l) == 0.0);
  }
}

TEST_CASE("aggregate averages reports") {
  MetricsReport a, b;
  a.occ = 0.2;
  a.und_s = 0.0;
  a.elements = 3;
  b.occ = 0.4;
  b.elements = 1;
  const MetricsReport reports[] = {a, b};
  const MetricsReport m = aggregate(reports);
  CHECK(m.occ == doctest::Approx(0.3));
  CHECK(m.und_s == doctest::Approx(0.5));
  CHECK(m.elements == 4);
  CHECK(aggregate({}).und_s == 1.0);
}
