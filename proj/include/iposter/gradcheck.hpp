// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace iposter {

struct GradcheckOptions {
  std::uint64_t seed = 0;
  int coordinates = 128;  // sampled parameter entries per block
  double step = 1e-6;     // central difference half-width
  double tolerance = 1e-3;
  double floor = 1e-8;    // denominator floor of the relative error
  bool corrupt = false;   // perturb analytic gradients (negative control)
};

struct BlockResult {
  std::string name;
  int coordinates = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<BlockResult> blocks;
  double tolerance = 0.0;
  double seconds = 0.0;
  bool passed = false;

  nlohmann::json to_json() const;
};

/// Compares reverse-mode gradients with central finite differences, both in double precision,
/// on the default model configuration.
GradcheckReport run_gradcheck(const GradcheckOptions& opts);

}  // namespace iposter
