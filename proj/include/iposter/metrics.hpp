// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "iposter/canvas.hpp"
#include "iposter/layout.hpp"
#include "json.hpp"

namespace iposter {

/// Layout quality. Lower is better for occ, rea and ove; higher for und_l and und_s.
/// Absent element classes score the best value (no underlays -> und = 1, fewer than two
/// non-underlay elements -> ove = 0, no text -> rea = 0, empty layout -> occ = 0).
struct MetricsReport {
  double occ = 0.0;
  double rea = 0.0;
  double und_l = 1.0;
  double und_s = 1.0;
  double ove = 0.0;
  int elements = 0;
  int underlays = 0;
  int texts = 0;

  nlohmann::json to_json() const;
};

/// Saliency mass under the union of element boxes divided by the union area, with exact
/// fractional pixel coverage.
double occlusion(const Layout& layout, const Raster& saliency);

/// Mean Sobel gradient magnitude of the canvas luminance over pixels whose centers fall inside
/// a text box (union).
double readability(const Layout& layout, const Raster& canvas);

/// Mean over underlays of the best covered fraction of any non-underlay element.
double underlay_loose(const Layout& layout);

/// Fraction of underlays that contain some non-underlay element (eps-containment).
double underlay_strict(const Layout& layout, double eps = kContainEps);

/// Mean IoU over unordered pairs of non-underlay elements.
double overlay(const Layout& layout);

MetricsReport evaluate(const Layout& layout, const Raster& canvas, const Raster& saliency);

/// Boolean pixel mask, row-major, a pixel is set when its center lies in some box
/// (half-open [left, right) x [top, bottom)).
struct CoverageMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  std::size_t count() const;
};

CoverageMask rasterize(std::span<const Box> boxes, int width, int height);
CoverageMask rasterize(const Layout& layout, int width, int height);

/// Mean of the per-sample reports (counts summed).
MetricsReport aggregate(std::span<const MetricsReport> reports);

}  // namespace iposter
