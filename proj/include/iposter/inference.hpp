// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "iposter/diffusion.hpp"
#include "iposter/model.hpp"
#include "iposter/numerics/checkpoint.hpp"
#include "json.hpp"

namespace iposter {

/// Read-only sampling snapshot of a checkpoint. EMA weights are used when present.
struct LoadedModel {
  ModelConfig config;
  DiffusionSchedule schedule;
  CategoryCodec codec;
  NoiseModel<float> model;
  nn::ParameterStore<float> weights;
  std::size_t parameter_count = 0;  // sum of the stored "param/" tensor sizes
  std::string sha256;

  LoadedModel(const nn::Checkpoint& ckpt, std::string hash);
  nlohmann::json describe() const;
};

std::shared_ptr<const LoadedModel> load_model(const std::filesystem::path& path);

std::string sha256_hex(std::span<const std::uint8_t> bytes);

/// Noise predictor bound to one canvas; condition features are computed once.
NoisePredictor make_predictor(const LoadedModel& m, const Condition& cond);

struct UserConstraints {
  Layout layout;
  std::vector<bool> anchors;
};

/// Validates user elements ({category, cx, cy, w, h, anchored}) against the fields the task fixes.
/// Positions and sizes must lie in [0, 1]; fully specified boxes must lie inside the canvas.
UserConstraints parse_user_elements(const nlohmann::json& elements, Task task, int max_elements);

/// Decodes a model-space state for presentation. Attributes the constraint fixes are copied from `user`
/// verbatim; boxes with a fixed size are shifted into the canvas instead of clipped.
Layout finalize_layout(const LayoutState& x, const ConstraintSpec& spec, const Layout& user,
                       const CategoryCodec& codec);

/// Sample `seed` of a request. Sample k of a multi-sample request uses seed + k, so any single result
/// can be reproduced with num_samples = 1.
SampleResult generate_layout(const LoadedModel& m, const Condition& cond, const ConstraintSpec& spec,
                             std::uint64_t seed, bool keep_trajectory = false, const StepCallback& on_step = {});

SampleResult refine_layout(const LoadedModel& m, const Condition& cond, const Layout& initial, double strength,
                           std::uint64_t seed, bool keep_trajectory = false, const StepCallback& on_step = {});

}  // namespace iposter
