// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include "iposter/layout.hpp"
#include "json.hpp"

namespace iposter {

/// {"elements":[{"category":"text","cx":0.5,"cy":0.3,"w":0.4,"h":0.1}, ...]}
nlohmann::json layout_to_json(const Layout& layout);

/// Strict: every element needs a known non-empty category and finite cx, cy, w >= 0, h >= 0.
Layout layout_from_json(const nlohmann::json& j);

std::string dump_layout(const Layout& layout);
Layout parse_layout(const std::string& text);

Layout read_layout_file(const std::filesystem::path& path);
void write_layout_file(const std::filesystem::path& path, const Layout& layout);

}  // namespace iposter
