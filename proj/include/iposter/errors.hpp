// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>

namespace iposter {

/// Thrown for malformed arguments: shape mismatches, out-of-range values, bad files.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite value produced under checked mode.
class NumericsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace iposter
