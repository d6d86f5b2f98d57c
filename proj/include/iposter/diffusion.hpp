// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "iposter/layout.hpp"
#include "iposter/numerics/tape.hpp"

namespace iposter {

/// N x 5 rows [c, cx, cy, w, h] in model space ([-1, 1] per channel).
using LayoutState = nn::Matrixf;
/// N x 5 with entries in {0, 1}; 1 marks a user-fixed attribute.
using ConstraintMask = nn::Matrixf;

/// Variance-preserving DDPM noise schedule, timesteps 1..T.
struct DiffusionSchedule {
  int T = 0;
  std::vector<double> betas;       // index t-1
  std::vector<double> alphas;      // 1 - beta
  std::vector<double> alpha_bars;  // cumulative products

  /// Linear betas from beta_start to beta_end, both scaled by 1000/T so that T=1000 gives the
  /// canonical range and shorter chains still end near pure noise.
  static DiffusionSchedule linear(int T, double beta_start = 1e-4, double beta_end = 0.02);

  double beta(int t) const { return betas[static_cast<std::size_t>(t - 1)]; }
  double alpha(int t) const { return alphas[static_cast<std::size_t>(t - 1)]; }
  /// alpha_bar(0) == 1.
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bars[static_cast<std::size_t>(t - 1)]; }
};

/// Categories as equally spaced values in [-1, 1]; decode snaps to the nearest bin.
class CategoryCodec {
 public:
  explicit CategoryCodec(int num_categories = kNumCategories);

  float encode(Category c) const;
  Category decode(float value) const;
  int size() const { return k_; }

 private:
  int k_;
};

enum class Task { CtoSP, CStoP, Completion, Refinement, Unconstrained };

std::string_view task_name(Task task);
std::optional<Task> parse_task(std::string_view name);

struct ConstraintSpec {
  Task task = Task::Unconstrained;
  LayoutState x_user;          // encoded user values, zeros where unspecified
  std::vector<bool> anchors;   // per row; only meaningful for Completion
};

/// Maps a normalized box coordinate to model space and back.
inline float to_model(double v) { return static_cast<float>(2.0 * v - 1.0); }
inline double from_model(float v) { return (static_cast<double>(v) + 1.0) / 2.0; }

/// Encodes `layout` into N rows; rows past the layout are `empty` with a zero box.
LayoutState encode_layout_state(const Layout& layout, int n, const CategoryCodec& codec);
/// Snaps categories, drops `empty` rows, clamps boxes to the canvas.
Layout decode_layout_state(const LayoutState& x, const CategoryCodec& codec);

/// Builds the user-constraint spec for a task. `anchors` has one flag per layout element (Completion).
/// Rows past the layout are padding: for Completion, the first `free_slots` of them (default: none) are
/// left for the model to fill and the rest are pinned to `empty`. Unanchored elements are regenerated.
ConstraintSpec make_constraint(Task task, const Layout& user, const std::vector<bool>& anchors, int n,
                               const CategoryCodec& codec, std::optional<int> free_slots = std::nullopt);

ConstraintMask build_mask(const ConstraintSpec& spec, int n);

/// M * x_user + (1 - M) * x_hat, realized as a per-entry selection so fixed entries are bit-exact.
LayoutState apply_mask(const LayoutState& x_hat, const LayoutState& x_user, const ConstraintMask& mask);

/// sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps. t == 0 returns x0.
LayoutState forward_noise(const LayoutState& x0, int t, const LayoutState& eps, const DiffusionSchedule& sched);

/// Standard-normal matrix drawn from `rng`.
nn::Matrixf gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

/// Derives an independent stream seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// eps estimate for (x_t, t).
using NoisePredictor = std::function<LayoutState(const LayoutState& x_t, int t)>;
/// Called after each denoising step with the step index and masked state; return false to abort.
using StepCallback = std::function<bool(int t, const LayoutState& x)>;

struct SamplerOptions {
  bool stochastic = true;   // false: sigma_t = 0
  bool clip_x0 = true;      // clamp the implied x0 estimate to [-1, 1]
  bool keep_trajectory = true;
};

struct SampleResult {
  Layout layout;
  LayoutState final_state;
  std::vector<LayoutState> trajectory;  // one masked state per step, t = T..1
  bool aborted = false;
};

/// One ancestral update from x_t to x_{t-1} given eps_hat; `noise` is ignored when t == 1.
LayoutState reverse_step(const LayoutState& x_t, const LayoutState& eps_hat, int t, const DiffusionSchedule& sched,
                         const LayoutState* noise, bool clip_x0);

SampleResult sample(const NoisePredictor& predictor, const ConstraintSpec& spec, const DiffusionSchedule& sched,
                    std::uint64_t seed, const CategoryCodec& codec, const SamplerOptions& options = {},
                    const StepCallback& on_step = {});

/// Re-noises `initial` to t_r = round(strength * T) (at least 1) and denoises back with no mask.
/// At t_r = T the input is discarded and the run equals unconstrained sampling with the same seed.
SampleResult refine(const Layout& initial, double strength, int n, const NoisePredictor& predictor,
                    const DiffusionSchedule& sched, std::uint64_t seed, const CategoryCodec& codec,
                    const SamplerOptions& options = {}, const StepCallback& on_step = {});

inline constexpr double kDefaultRefineStrength = 0.1;

}  // namespace iposter
