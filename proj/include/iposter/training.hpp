// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "iposter/data.hpp"
#include "iposter/diffusion.hpp"
#include "iposter/model.hpp"
#include "iposter/numerics/adam.hpp"
#include "iposter/numerics/checkpoint.hpp"
#include "json.hpp"

namespace iposter {

struct TrainConfig {
  int batch_size = 32;
  long steps = 20000;
  nn::AdamConfig adam;
  double clip_norm = 1.0;
  double ema_decay = 0.999;
  double anchor_probability = 0.5;  // per-element anchor rate for Completion batches
  std::string lr_schedule = "constant";  // or "cosine": decays from adam.lr to lr_floor * adam.lr over `steps`
  double lr_floor = 0.05;
  int eval_batch = 64;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);

  /// Learning rate for the update that follows `completed` steps.
  double lr_at(long completed) const;
};

/// One poster prepared for training: encoded layout and conditioning at model resolution.
struct TrainingExample {
  LayoutState x0;        // N x 5
  nn::Matrixf patches;   // M x patch_dim
  nn::Matrixf salbox;    // 1 x 4
  int num_elements = 0;
};

/// Layouts longer than N keep their first N elements.
TrainingExample prepare_example(const PosterSample& sample, const ModelConfig& cfg, const CategoryCodec& codec);

/// Tasks drawn uniformly during training.
inline constexpr Task kTrainingTasks[] = {Task::CtoSP, Task::CStoP, Task::Completion, Task::Unconstrained};

/// A fully specified batch: noisy inputs with constrained entries restored and the loss weights.
struct TrainingBatch {
  ModelBatch<float> inputs;
  nn::Matrixf eps;     // target noise, (B*N) x 5
  nn::Matrixf weight;  // 1 on entries that contribute to the loss
};

/// Loss weights exclude user-fixed entries and the box columns of padding rows.
TrainingBatch make_batch(std::span<const TrainingExample> examples, std::span<const std::size_t> picks,
                         const ModelConfig& cfg, const DiffusionSchedule& sched, const TrainConfig& tc,
                         std::mt19937_64& rng);

/// Weighted eps-prediction MSE; accumulates parameter gradients when `backward` is set.
double batch_loss(const NoiseModel<float>& model, nn::ParameterStore<float>& store, const TrainingBatch& batch,
                  bool backward);

struct LossRecord {
  long step = 0;
  double loss = 0.0;
};

class Trainer {
 public:
  Trainer(ModelConfig model_cfg, TrainConfig train_cfg, std::vector<TrainingExample> examples);

  /// Fresh initialization from train_cfg.seed.
  void init();
  /// Restores parameters, optimizer moments, EMA weights and the step counter.
  void resume(const nn::Checkpoint& ckpt);
  nn::Checkpoint checkpoint() const;

  /// One optimizer step; returns the pre-update batch loss. Batch contents depend only on (seed, step).
  double step();
  /// Loss of the given weights on a fixed evaluation batch drawn from the seed.
  double eval_loss(const nn::ParameterStore<float>& store) const;
  double eval_loss() const { return eval_loss(params_); }

  long current_step() const { return params_.step; }
  const ModelConfig& model_config() const { return model_.config(); }
  const TrainConfig& train_config() const { return tc_; }
  const nn::ParameterStore<float>& params() const { return params_; }
  const nn::ParameterStore<float>& ema() const { return ema_; }
  const DiffusionSchedule& schedule() const { return sched_; }

 private:
  void update_ema();

  NoiseModel<float> model_;
  TrainConfig tc_;
  DiffusionSchedule sched_;
  std::vector<TrainingExample> examples_;
  TrainingBatch eval_batch_;
  nn::ParameterStore<float> params_;
  nn::ParameterStore<float> ema_;
};

}  // namespace iposter
