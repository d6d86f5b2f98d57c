// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#include "iposter/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace iposter {

DiffusionSchedule DiffusionSchedule::linear(int T, double beta_start, double beta_end) {
  if (T < 1) throw InvalidInput("schedule: T must be >= 1");
  const double scale = 1000.0 / T;
  const double lo = beta_start * scale;
  const double hi = beta_end * scale;
  if (!(lo > 0 && hi < 1 && lo <= hi)) throw InvalidInput("schedule: betas must satisfy 0 < start <= end < 1");
  DiffusionSchedule s;
  s.T = T;
  double prod = 1.0;
  for (int i = 0; i < T; ++i) {
    const double b = T == 1 ? lo : lo + (hi - lo) * i / (T - 1);
    s.betas.push_back(b);
    s.alphas.push_back(1.0 - b);
    prod *= 1.0 - b;
    s.alpha_bars.push_back(prod);
  }
  return s;
}

CategoryCodec::CategoryCodec(int num_categories) : k_(num_categories) {
  if (k_ < 2) throw InvalidInput("category codec: need at least two categories");
}

float CategoryCodec::encode(Category c) const {
  const int i = static_cast<int>(c);
  if (i < 0 || i >= k_) throw InvalidInput("category codec: category out of range");
  return static_cast<float>(-1.0 + 2.0 * i / (k_ - 1));
}

Category CategoryCodec::decode(float value) const {
  if (!std::isfinite(value)) return Category::Empty;
  const double pos = (static_cast<double>(value) + 1.0) * (k_ - 1) / 2.0;
  const int i = std::clamp(static_cast<int>(std::lround(pos)), 0, k_ - 1);
  return static_cast<Category>(i);
}

std::string_view task_name(Task task) {
  switch (task) {
    case Task::CtoSP: return "c_to_sp";
    case Task::CStoP: return "cs_to_p";
    case Task::Completion: return "completion";
    case Task::Refinement: return "refinement";
    case Task::Unconstrained: return "unconstrained";
  }
  return "unknown";
}

std::optional<Task> parse_task(std::string_view name) {
  for (Task t : {Task::CtoSP, Task::CStoP, Task::Completion, Task::Refinement, Task::Unconstrained}) {
    if (task_name(t) == name) return t;
  }
  return std::nullopt;
}

LayoutState encode_layout_state(const Layout& layout, int n, const CategoryCodec& codec) {
  if (static_cast<int>(layout.size()) > n) throw InvalidInput("layout has more elements than the model supports");
  LayoutState x(n, 5);
  for (int i = 0; i < n; ++i) {
    if (i < static_cast<int>(layout.size())) {
      const auto& e = layout.elements[static_cast<std::size_t>(i)];
      x.row(i) << codec.encode(e.category), to_model(e.box.cx), to_model(e.box.cy), to_model(e.box.w),
          to_model(e.box.h);
    } else {
      x.row(i) << codec.encode(Category::Empty), -1.0f, -1.0f, -1.0f, -1.0f;
    }
  }
  return x;
}

Layout decode_layout_state(const LayoutState& x, const CategoryCodec& codec) {
  if (x.cols() != 5) throw InvalidInput("decode: layout state must have 5 columns");
  Layout out;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Category c = codec.decode(x(i, 0));
    if (c == Category::Empty) continue;
    Box b{from_model(x(i, 1)), from_model(x(i, 2)), std::max(0.0, from_model(x(i, 3))),
          std::max(0.0, from_model(x(i, 4)))};
    out.elements.push_back({c, clamp_to_canvas(b)});
  }
  return out;
}

ConstraintSpec make_constraint(Task task, const Layout& user, const std::vector<bool>& anchors, int n,
                               const CategoryCodec& codec, std::optional<int> free_slots) {
  const int count = static_cast<int>(user.size());
  if (count > n) throw InvalidInput("constraint: more elements than the model supports");
  ConstraintSpec spec;
  spec.task = task;
  spec.x_user = LayoutState::Zero(n, 5);
  spec.anchors.assign(static_cast<std::size_t>(n), false);
  const LayoutState encoded = encode_layout_state(user, n, codec);
  switch (task) {
    case Task::CtoSP:
      spec.x_user.col(0) = encoded.col(0);
      break;
    case Task::CStoP:
      spec.x_user.col(0) = encoded.col(0);
      spec.x_user.col(3) = encoded.col(3);
      spec.x_user.col(4) = encoded.col(4);
      break;
    case Task::Completion: {
      if (!anchors.empty() && static_cast<int>(anchors.size()) != count) {
        throw InvalidInput("constraint: one anchor flag per element required");
      }
      const int slots = free_slots.value_or(0);
      if (slots < 0) throw InvalidInput("constraint: free_slots must be >= 0");
      for (int i = 0; i < n; ++i) {
        bool anchored = false;
        if (i < count) {
          anchored = !anchors.empty() && anchors[static_cast<std::size_t>(i)];
        } else {
          anchored = i - count >= slots;  // pinned padding
        }
        spec.anchors[static_cast<std::size_t>(i)] = anchored;
        if (anchored) spec.x_user.row(i) = encoded.row(i);
      }
      break;
    }
    case Task::Refinement:
      spec.x_user = encoded;
      break;
    case Task::Unconstrained:
      break;
  }
  return spec;
}

ConstraintMask build_mask(const ConstraintSpec& spec, int n) {
  if (spec.x_user.rows() != n || spec.x_user.cols() != 5) throw InvalidInput("build_mask: x_user must be N x 5");
  ConstraintMask m = ConstraintMask::Zero(n, 5);
  switch (spec.task) {
    case Task::CtoSP:
      m.col(0).setOnes();
      break;
    case Task::CStoP:
      m.col(0).setOnes();
      m.col(3).setOnes();
      m.col(4).setOnes();
      break;
    case Task::Completion:
      if (static_cast<int>(spec.anchors.size()) != n) throw InvalidInput("build_mask: anchors must have N entries");
      for (int i = 0; i < n; ++i) {
        if (spec.anchors[static_cast<std::size_t>(i)]) m.row(i).setOnes();
      }
      break;
    case Task::Refinement:
    case Task::Unconstrained:
      break;
  }
  return m;
}

LayoutState apply_mask(const LayoutState& x_hat, const LayoutState& x_user, const ConstraintMask& mask) {
  if (x_hat.rows() != x_user.rows() || x_hat.cols() != x_user.cols() || mask.rows() != x_hat.rows() ||
      mask.cols() != x_hat.cols()) {
    throw InvalidInput("apply_mask: shape mismatch");
  }
  return (mask.array() > 0.5f).select(x_user, x_hat);
}

LayoutState forward_noise(const LayoutState& x0, int t, const LayoutState& eps, const DiffusionSchedule& sched) {
  if (t < 0 || t > sched.T) throw InvalidInput("forward_noise: timestep out of range");
  if (eps.rows() != x0.rows() || eps.cols() != x0.cols()) throw InvalidInput("forward_noise: shape mismatch");
  if (t == 0) return x0;
  const double ab = sched.alpha_bar(t);
  return (x0 * static_cast<float>(std::sqrt(ab)) + eps * static_cast<float>(std::sqrt(1.0 - ab))).eval();
}

nn::Matrixf gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<float> dist(0.0f, 1.0f);
  nn::Matrixf m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 over the combined value
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

LayoutState reverse_step(const LayoutState& x_t, const LayoutState& eps_hat, int t, const DiffusionSchedule& sched,
                         const LayoutState* noise, bool clip_x0) {
  if (t < 1 || t > sched.T) throw InvalidInput("reverse_step: timestep out of range");
  const double ab = sched.alpha_bar(t);
  const double ab_prev = sched.alpha_bar(t - 1);
  const double beta = sched.beta(t);
  const double alpha = sched.alpha(t);
  nn::Matrixf x0 = (x_t - eps_hat * static_cast<float>(std::sqrt(1.0 - ab))) / static_cast<float>(std::sqrt(ab));
  if (clip_x0) x0 = x0.cwiseMax(-1.0f).cwiseMin(1.0f);
  const auto c0 = static_cast<float>(std::sqrt(ab_prev) * beta / (1.0 - ab));
  const auto ct = static_cast<float>(std::sqrt(alpha) * (1.0 - ab_prev) / (1.0 - ab));
  LayoutState mean = x0 * c0 + x_t * ct;
  if (t > 1 && noise) mean += *noise * static_cast<float>(std::sqrt(beta));
  return mean;
}

namespace {

SampleResult run_reverse(LayoutState x, int t_start, const NoisePredictor& predictor, const LayoutState& x_user,
                         const ConstraintMask& mask, const DiffusionSchedule& sched, std::mt19937_64& rng,
                         const CategoryCodec& codec, const SamplerOptions& options, const StepCallback& on_step) {
  SampleResult result;
  if (options.keep_trajectory) result.trajectory.reserve(static_cast<std::size_t>(t_start));
  for (int t = t_start; t >= 1; --t) {
    const LayoutState eps_hat = predictor(x, t);
    LayoutState z;
    if (options.stochastic && t > 1) z = gaussian(x.rows(), x.cols(), rng);
    x = reverse_step(x, eps_hat, t, sched, z.size() ? &z : nullptr, options.clip_x0);
    x = apply_mask(x, x_user, mask);
    if (options.keep_trajectory) result.trajectory.push_back(x);
    if (on_step && !on_step(t, x)) {
      result.aborted = true;
      break;
    }
  }
  result.final_state = x;
  result.layout = decode_layout_state(x, codec);
  return result;
}

}  // namespace

SampleResult sample(const NoisePredictor& predictor, const ConstraintSpec& spec, const DiffusionSchedule& sched,
                    std::uint64_t seed, const CategoryCodec& codec, const SamplerOptions& options,
                    const StepCallback& on_step) {
  const auto n = static_cast<int>(spec.x_user.rows());
  const ConstraintMask mask = build_mask(spec, n);
  std::mt19937_64 rng(seed);
  LayoutState x = apply_mask(gaussian(n, 5, rng), spec.x_user, mask);
  return run_reverse(std::move(x), sched.T, predictor, spec.x_user, mask, sched, rng, codec, options, on_step);
}

SampleResult refine(const Layout& initial, double strength, int n, const NoisePredictor& predictor,
                    const DiffusionSchedule& sched, std::uint64_t seed, const CategoryCodec& codec,
                    const SamplerOptions& options, const StepCallback& on_step) {
  if (initial.empty()) throw InvalidInput("refine: initial layout is empty");
  if (!(strength > 0.0 && strength <= 1.0)) throw InvalidInput("refine: strength must be in (0, 1]");
  const int t_r = std::clamp(static_cast<int>(std::lround(strength * sched.T)), 1, sched.T);
  const LayoutState x0 = encode_layout_state(initial, n, codec);
  std::mt19937_64 rng(seed);
  // full strength starts from pure noise, so it coincides with unconstrained sampling
  const LayoutState eps = gaussian(n, 5, rng);
  const LayoutState x = t_r == sched.T ? eps : forward_noise(x0, t_r, eps, sched);
  const ConstraintMask none = ConstraintMask::Zero(n, 5);
  return run_reverse(x, t_r, predictor, x0, none, sched, rng, codec, options, on_step);
}

}  // namespace iposter
