// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "iposter/numerics/tape.hpp"

namespace iposter::nn {

/// Binary container layout (all integers little-endian):
///   "IPST" | u32 version | u64 json length | json bytes | u64 tensor count |
///   per tensor: u32 name length | name (UTF-8) | u32 rank | rank x u64 dims | f32 data
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<float> data;
};

struct Checkpoint {
  std::string config_json;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

NamedTensor to_named_tensor(std::string name, const Matrixf& m);
/// Rank-2 tensors map to rows x cols; rank 1 to 1 x n; rank 0 to 1 x 1.
Matrixf to_matrix(const NamedTensor& t);

}  // namespace iposter::nn
