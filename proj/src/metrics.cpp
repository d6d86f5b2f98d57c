// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#include "iposter/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace iposter {

namespace {

bool is_underlay(const Element& e) { return e.category == Category::Underlay; }

/// Order-independent sum: sorting first makes the result invariant under element permutation.
double sorted_sum(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return std::accumulate(values.begin(), values.end(), 0.0);
}

std::vector<double> breakpoints(int pixels, const std::vector<Box>& boxes, bool horizontal) {
  std::vector<double> pts;
  pts.reserve(static_cast<std::size_t>(pixels) + 1 + 2 * boxes.size());
  for (int k = 0; k <= pixels; ++k) pts.push_back(static_cast<double>(k) / pixels);
  for (const auto& b : boxes) {
    const double lo = horizontal ? b.left() : b.top();
    const double hi = horizontal ? b.right() : b.bottom();
    pts.push_back(std::clamp(lo, 0.0, 1.0));
    pts.push_back(std::clamp(hi, 0.0, 1.0));
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

}  // namespace

nlohmann::json MetricsReport::to_json() const {
  return {{"occ", occ},     {"rea", rea},           {"und_l", und_l},         {"und_s", und_s},
          {"ove", ove},     {"elements", elements}, {"underlays", underlays}, {"texts", texts}};
}

double occlusion(const Layout& layout, const Raster& saliency) {
  if (saliency.channels() != 1) throw InvalidInput("occlusion: expected a 1-channel saliency map");
  std::vector<Box> boxes;
  for (const auto& e : layout.elements) {
    if (area(e.box) > 0) boxes.push_back(e.box);
  }
  if (boxes.empty()) return 0.0;
  // Every box edge is a breakpoint, so each grid cell is either fully inside the union or fully outside,
  // and each cell lies within one saliency pixel.
  const int W = saliency.width();
  const int H = saliency.height();
  const auto xs = breakpoints(W, boxes, true);
  const auto ys = breakpoints(H, boxes, false);
  double covered = 0.0;
  double mass = 0.0;
  for (std::size_t j = 0; j + 1 < ys.size(); ++j) {
    const double h = ys[j + 1] - ys[j];
    const double my = 0.5 * (ys[j] + ys[j + 1]);
    const int py = std::min(H - 1, static_cast<int>(my * H));
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
      const double mx = 0.5 * (xs[i] + xs[i + 1]);
      const bool inside = std::any_of(boxes.begin(), boxes.end(), [&](const Box& b) {
        return mx > b.left() && mx < b.right() && my > b.top() && my < b.bottom();
      });
      if (!inside) continue;
      const double a = (xs[i + 1] - xs[i]) * h;
      const int px = std::min(W - 1, static_cast<int>(mx * W));
      covered += a;
      mass += a * saliency.at(px, py);
    }
  }
  return covered > 0.0 ? std::clamp(mass / covered, 0.0, 1.0) : 0.0;
}

double readability(const Layout& layout, const Raster& canvas) {
  std::vector<Box> texts;
  for (const auto& e : layout.elements) {
    if (e.category == Category::Text) texts.push_back(e.box);
  }
  if (texts.empty()) return 0.0;
  const Raster gray = to_grayscale(canvas);
  const CoverageMask mask = rasterize(texts, gray.width(), gray.height());
  const int W = gray.width();
  const int H = gray.height();
  auto px = [&](int x, int y) { return static_cast<double>(gray.at(std::clamp(x, 0, W - 1), std::clamp(y, 0, H - 1))); };
  double total = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!mask.at(x, y)) continue;
      const double gx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1)) -
                        (px(x - 1, y - 1) + 2 * px(x - 1, y) + px(x - 1, y + 1));
      const double gy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1)) -
                        (px(x - 1, y - 1) + 2 * px(x, y - 1) + px(x + 1, y - 1));
      total += std::sqrt(gx * gx + gy * gy);
      ++n;
    }
  }
  return n > 0 ? total / static_cast<double>(n) : 0.0;
}

double underlay_loose(const Layout& layout) {
  std::vector<double> scores;
  for (const auto& u : layout.elements) {
    if (!is_underlay(u)) continue;
    double best = 0.0;
    for (const auto& e : layout.elements) {
      if (is_underlay(e) || area(e.box) <= 0) continue;
      best = std::max(best, intersection_area(u.box, e.box) / area(e.box));
    }
    scores.push_back(std::clamp(best, 0.0, 1.0));
  }
  if (scores.empty()) return 1.0;
  const double n = static_cast<double>(scores.size());
  return sorted_sum(std::move(scores)) / n;
}

double underlay_strict(const Layout& layout, double eps) {
  int underlays = 0;
  int valid = 0;
  for (const auto& u : layout.elements) {
    if (!is_underlay(u)) continue;
    ++underlays;
    const bool ok = std::any_of(layout.elements.begin(), layout.elements.end(), [&](const Element& e) {
      return !is_underlay(e) && area(e.box) > 0 && contains(u.box, e.box, eps);
    });
    valid += ok ? 1 : 0;
  }
  return underlays == 0 ? 1.0 : static_cast<double>(valid) / underlays;
}

double overlay(const Layout& layout) {
  std::vector<Box> boxes;
  for (const auto& e : layout.elements) {
    if (!is_underlay(e)) boxes.push_back(e.box);
  }
  if (boxes.size() < 2) return 0.0;
  std::vector<double> ious;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    for (std::size_t j = i + 1; j < boxes.size(); ++j) ious.push_back(iou(boxes[i], boxes[j]));
  }
  const double n = static_cast<double>(ious.size());
  return sorted_sum(std::move(ious)) / n;
}

MetricsReport evaluate(const Layout& layout, const Raster& canvas, const Raster& saliency) {
  MetricsReport r;
  r.occ = occlusion(layout, saliency);
  r.rea = readability(layout, canvas);
  r.und_l = underlay_loose(layout);
  r.und_s = underlay_strict(layout);
  r.ove = overlay(layout);
  r.elements = static_cast<int>(layout.size());
  for (const auto& e : layout.elements) {
    r.underlays += e.category == Category::Underlay ? 1 : 0;
    r.texts += e.category == Category::Text ? 1 : 0;
  }
  return r;
}

std::size_t CoverageMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

CoverageMask rasterize(std::span<const Box> boxes, int width, int height) {
  if (width < 1 || height < 1) throw InvalidInput("rasterize: resolution must be >= 1");
  CoverageMask m;
  m.width = width;
  m.height = height;
  m.bits.assign(static_cast<std::size_t>(width) * height, 0);
  for (const auto& b : boxes) {
    // pixel centers (k + 0.5)/n in [lo, hi)  <=>  k in [ceil(lo*n - 0.5), ceil(hi*n - 0.5))
    const int x0 = std::max(0, static_cast<int>(std::ceil(b.left() * width - 0.5)));
    const int x1 = std::min(width, static_cast<int>(std::ceil(b.right() * width - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(b.top() * height - 0.5)));
    const int y1 = std::min(height, static_cast<int>(std::ceil(b.bottom() * height - 0.5)));
    for (int y = y0; y < y1; ++y) {
      std::fill(m.bits.begin() + static_cast<std::ptrdiff_t>(y) * width + x0,
                m.bits.begin() + static_cast<std::ptrdiff_t>(y) * width + std::max(x0, x1), std::uint8_t{1});
    }
  }
  return m;
}

CoverageMask rasterize(const Layout& layout, int width, int height) {
  std::vector<Box> boxes;
  for (const auto& e : layout.elements) boxes.push_back(e.box);
  return rasterize(boxes, width, height);
}

MetricsReport aggregate(std::span<const MetricsReport> reports) {
  MetricsReport out;
  if (reports.empty()) {
    out.und_l = out.und_s = 1.0;
    return out;
  }
  out.und_l = out.und_s = 0.0;
  for (const auto& r : reports) {
    out.occ += r.occ;
    out.rea += r.rea;
    out.und_l += r.und_l;
    out.und_s += r.und_s;
    out.ove += r.ove;
    out.elements += r.elements;
    out.underlays += r.underlays;
    out.texts += r.texts;
  }
  const double n = static_cast<double>(reports.size());
  out.occ /= n;
  out.rea /= n;
  out.und_l /= n;
  out.und_s /= n;
  out.ove /= n;
  return out;
}

}  // namespace iposter
