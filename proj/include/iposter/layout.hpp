// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "iposter/geometry.hpp"

namespace iposter {

/// Element vocabulary. `Empty` marks padding rows of the diffusion state and never
/// appears in a decoded layout.
enum class Category : int { Empty = 0, Logo = 1, Text = 2, Underlay = 3 };

inline constexpr int kNumCategories = 4;

inline constexpr std::array<std::string_view, kNumCategories> kCategoryNames = {"empty", "logo", "text",
                                                                                "underlay"};

inline std::string_view category_name(Category c) { return kCategoryNames[static_cast<int>(c)]; }

inline std::optional<Category> parse_category(std::string_view name) {
  for (int i = 0; i < kNumCategories; ++i) {
    if (kCategoryNames[i] == name) return static_cast<Category>(i);
  }
  return std::nullopt;
}

struct Element {
  Category category = Category::Empty;
  Box box;

  bool operator==(const Element&) const = default;
};

struct Layout {
  std::vector<Element> elements;

  bool operator==(const Layout&) const = default;
  std::size_t size() const { return elements.size(); }
  bool empty() const { return elements.empty(); }
};

}  // namespace iposter
