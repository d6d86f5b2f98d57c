// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>

namespace iposter {

/// Axis-aligned box in normalized canvas coordinates, center format.
/// Corner extent is [cx - w/2, cx + w/2] x [cy - h/2, cy + h/2].
template <typename Scalar>
struct BBox {
  Scalar cx{};
  Scalar cy{};
  Scalar w{};
  Scalar h{};

  Scalar left() const { return cx - w / 2; }
  Scalar right() const { return cx + w / 2; }
  Scalar top() const { return cy - h / 2; }
  Scalar bottom() const { return cy + h / 2; }

  static BBox from_corners(Scalar x0, Scalar y0, Scalar x1, Scalar y1) {
    return {(x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0};
  }

  template <typename Other>
  BBox<Other> cast() const {
    return {static_cast<Other>(cx), static_cast<Other>(cy), static_cast<Other>(w), static_cast<Other>(h)};
  }

  bool operator==(const BBox&) const = default;
};

using Box = BBox<double>;
using Boxf = BBox<float>;

/// Default slack for containment tests.
inline constexpr double kContainEps = 0.002;

template <typename Scalar>
Scalar area(const BBox<Scalar>& b) {
  return b.w * b.h;
}

template <typename Scalar>
Scalar intersection_area(const BBox<Scalar>& a, const BBox<Scalar>& b) {
  const Scalar iw = std::min(a.right(), b.right()) - std::max(a.left(), b.left());
  const Scalar ih = std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
  if (iw <= 0 || ih <= 0) return Scalar(0);
  return iw * ih;
}

/// Zero when the union is empty, so two degenerate boxes score 0 rather than NaN.
template <typename Scalar>
Scalar iou(const BBox<Scalar>& a, const BBox<Scalar>& b) {
  const Scalar inter = intersection_area(a, b);
  const Scalar uni = area(a) + area(b) - inter;
  if (uni <= 0) return Scalar(0);
  return std::clamp(inter / uni, Scalar(0), Scalar(1));
}

template <typename Scalar>
bool contains(const BBox<Scalar>& outer, const BBox<Scalar>& inner, Scalar eps = Scalar(kContainEps)) {
  return inner.left() >= outer.left() - eps && inner.right() <= outer.right() + eps &&
         inner.top() >= outer.top() - eps && inner.bottom() <= outer.bottom() + eps;
}

template <typename Scalar>
bool inside_canvas(const BBox<Scalar>& b) {
  return b.left() >= 0 && b.top() >= 0 && b.right() <= 1 && b.bottom() <= 1;
}

template <typename Scalar>
BBox<Scalar> clamp_to_canvas(const BBox<Scalar>& b) {
  if (inside_canvas(b)) return b;
  auto clip = [](Scalar v) { return std::clamp(v, Scalar(0), Scalar(1)); };
  const Scalar x0 = clip(b.left());
  const Scalar x1 = clip(b.right());
  const Scalar y0 = clip(b.top());
  const Scalar y1 = clip(b.bottom());
  return BBox<Scalar>::from_corners(x0, y0, std::max(x0, x1), std::max(y0, y1));
}

}  // namespace iposter
