// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#include "iposter/layout_json.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "iposter/errors.hpp"

namespace iposter {

nlohmann::json layout_to_json(const Layout& layout) {
  nlohmann::json elements = nlohmann::json::array();
  for (const auto& e : layout.elements) {
    elements.push_back({{"category", std::string(category_name(e.category))},
                        {"cx", e.box.cx},
                        {"cy", e.box.cy},
                        {"w", e.box.w},
                        {"h", e.box.h}});
  }
  return {{"elements", elements}};
}

namespace {

double number_field(const nlohmann::json& e, const char* key, std::size_t index) {
  if (!e.contains(key) || !e.at(key).is_number()) {
    throw InvalidInput("layout element " + std::to_string(index) + ": missing numeric field '" + key + "'");
  }
  const double v = e.at(key).get<double>();
  if (!std::isfinite(v)) throw InvalidInput("layout element " + std::to_string(index) + ": non-finite '" + key + "'");
  return v;
}

}  // namespace

Layout layout_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("elements") || !j.at("elements").is_array()) {
    throw InvalidInput("layout JSON must be an object with an 'elements' array");
  }
  Layout layout;
  const auto& arr = j.at("elements");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto& e = arr[i];
    if (!e.is_object() || !e.contains("category") || !e.at("category").is_string()) {
      throw InvalidInput("layout element " + std::to_string(i) + ": missing 'category'");
    }
    const auto name = e.at("category").get<std::string>();
    const auto cat = parse_category(name);
    if (!cat || *cat == Category::Empty) {
      throw InvalidInput("layout element " + std::to_string(i) + ": unknown category '" + name + "'");
    }
    Box b{number_field(e, "cx", i), number_field(e, "cy", i), number_field(e, "w", i), number_field(e, "h", i)};
    if (b.w < 0 || b.h < 0) throw InvalidInput("layout element " + std::to_string(i) + ": negative size");
    layout.elements.push_back({*cat, b});
  }
  return layout;
}

std::string dump_layout(const Layout& layout) { return layout_to_json(layout).dump(); }

Layout parse_layout(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInput(std::string("layout JSON: ") + e.what());
  }
  return layout_from_json(j);
}

Layout read_layout_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open layout file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_layout(ss.str());
  } catch (const InvalidInput& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
}

void write_layout_file(const std::filesystem::path& path, const Layout& layout) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write layout file: " + path.string());
  out << dump_layout(layout) << '\n';
}

}  // namespace iposter
