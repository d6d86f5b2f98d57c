// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#include "iposter/training.hpp"

#include <algorithm>
#include <cmath>

namespace iposter {

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidInput("train: batch_size must be >= 1");
  if (steps < 0) throw InvalidInput("train: steps must be >= 0");
  adam.validate();
  if (!(clip_norm > 0)) throw InvalidInput("train: clip_norm must be > 0");
  if (!(ema_decay >= 0 && ema_decay < 1)) throw InvalidInput("train: ema_decay must be in [0, 1)");
  if (!(anchor_probability >= 0 && anchor_probability <= 1)) {
    throw InvalidInput("train: anchor_probability must be in [0, 1]");
  }
  if (eval_batch < 1) throw InvalidInput("train: eval_batch must be >= 1");
  if (lr_schedule != "constant" && lr_schedule != "cosine") {
    throw InvalidInput("train: lr_schedule must be 'constant' or 'cosine'");
  }
  if (!(lr_floor >= 0 && lr_floor <= 1)) throw InvalidInput("train: lr_floor must be in [0, 1]");
}

double TrainConfig::lr_at(long completed) const {
  if (lr_schedule == "constant" || steps <= 1) return adam.lr;
  const double progress = std::clamp(static_cast<double>(completed) / static_cast<double>(steps - 1), 0.0, 1.0);
  const double pi = std::acos(-1.0);
  return adam.lr * (lr_floor + (1.0 - lr_floor) * 0.5 * (1.0 + std::cos(pi * progress)));
}

nlohmann::json TrainConfig::to_json() const {
  return {{"batch_size", batch_size},       {"steps", steps},
          {"lr", adam.lr},                  {"beta1", adam.beta1},
          {"beta2", adam.beta2},            {"epsilon", adam.epsilon},
          {"clip_norm", clip_norm},         {"ema_decay", ema_decay},
          {"anchor_probability", anchor_probability}, {"eval_batch", eval_batch},
          {"seed", seed},                   {"lr_schedule", lr_schedule},
          {"lr_floor", lr_floor}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.steps = j.value("steps", c.steps);
  c.adam.lr = j.value("lr", c.adam.lr);
  c.adam.beta1 = j.value("beta1", c.adam.beta1);
  c.adam.beta2 = j.value("beta2", c.adam.beta2);
  c.adam.epsilon = j.value("epsilon", c.adam.epsilon);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.ema_decay = j.value("ema_decay", c.ema_decay);
  c.anchor_probability = j.value("anchor_probability", c.anchor_probability);
  c.eval_batch = j.value("eval_batch", c.eval_batch);
  c.seed = j.value("seed", c.seed);
  c.lr_schedule = j.value("lr_schedule", c.lr_schedule);
  c.lr_floor = j.value("lr_floor", c.lr_floor);
  c.validate();
  return c;
}

TrainingExample prepare_example(const PosterSample& sample, const ModelConfig& cfg, const CategoryCodec& codec) {
  Layout layout = sample.layout;
  if (static_cast<int>(layout.size()) > cfg.max_elements) layout.elements.resize(static_cast<std::size_t>(cfg.max_elements));
  const Condition cond = make_condition(sample.canvas, sample.saliency, cfg);
  TrainingExample ex;
  ex.x0 = encode_layout_state(layout, cfg.max_elements, codec);
  ex.patches = cond.patches;
  ex.salbox = salbox_row(cond.salbox);
  ex.num_elements = static_cast<int>(layout.size());
  return ex;
}

TrainingBatch make_batch(std::span<const TrainingExample> examples, std::span<const std::size_t> picks,
                         const ModelConfig& cfg, const DiffusionSchedule& sched, const TrainConfig& tc,
                         std::mt19937_64& rng) {
  const int B = static_cast<int>(picks.size());
  const int N = cfg.max_elements;
  const int M = cfg.num_patches();
  TrainingBatch tb;
  tb.inputs.x_t.resize(static_cast<Eigen::Index>(B) * N, 5);
  tb.inputs.patches.resize(static_cast<Eigen::Index>(B) * M, cfg.patch_dim());
  tb.inputs.salbox.resize(B, 4);
  tb.inputs.t.resize(static_cast<std::size_t>(B));
  tb.eps.resize(static_cast<Eigen::Index>(B) * N, 5);
  tb.weight.resize(static_cast<Eigen::Index>(B) * N, 5);

  std::uniform_int_distribution<int> pick_task(0, static_cast<int>(std::size(kTrainingTasks)) - 1);
  std::uniform_int_distribution<int> pick_t(1, sched.T);
  std::bernoulli_distribution anchor(tc.anchor_probability);
  for (int b = 0; b < B; ++b) {
    const auto& ex = examples[picks[static_cast<std::size_t>(b)]];
    const Task task = kTrainingTasks[pick_task(rng)];
    const int t = pick_t(rng);
    ConstraintSpec spec;
    spec.task = task;
    spec.x_user = ex.x0;
    spec.anchors.assign(static_cast<std::size_t>(N), false);
    if (task == Task::Completion) {
      for (int i = 0; i < ex.num_elements; ++i) spec.anchors[static_cast<std::size_t>(i)] = anchor(rng);
      // padding is pinned to `empty` unless extra slots were requested
      const bool pin_padding = anchor(rng);
      for (int i = ex.num_elements; i < N; ++i) spec.anchors[static_cast<std::size_t>(i)] = pin_padding;
    }
    const ConstraintMask mask = build_mask(spec, N);
    const LayoutState eps = gaussian(N, 5, rng);
    const LayoutState x_t = apply_mask(forward_noise(ex.x0, t, eps, sched), ex.x0, mask);

    // padding rows are trained on all five columns: sampling needs their boxes pulled to -1 as well
    const LayoutState w = (1.0f - mask.array()).matrix();

    const Eigen::Index r0 = static_cast<Eigen::Index>(b) * N;
    tb.inputs.x_t.middleRows(r0, N) = x_t;
    tb.eps.middleRows(r0, N) = eps;
    tb.weight.middleRows(r0, N) = w;
    tb.inputs.patches.middleRows(static_cast<Eigen::Index>(b) * M, M) = ex.patches;
    tb.inputs.salbox.row(b) = ex.salbox;
    tb.inputs.t[static_cast<std::size_t>(b)] = t;
  }
  return tb;
}

double batch_loss(const NoiseModel<float>& model, nn::ParameterStore<float>& store, const TrainingBatch& batch,
                  bool backward) {
  if (!(batch.weight.sum() > 0.0f)) return 0.0;
  nn::Tape<float> tape(backward);
  const auto eps_hat = model.predict_noise(tape, store, batch.inputs);
  const auto loss = nn::weighted_mse(eps_hat, batch.eps, batch.weight);
  const double value = static_cast<double>(loss.value()(0, 0));
  if (!std::isfinite(value)) throw NumericsError("training loss is not finite");
  if (backward) tape.backward(loss);
  return value;
}

Trainer::Trainer(ModelConfig model_cfg, TrainConfig train_cfg, std::vector<TrainingExample> examples)
    : model_(model_cfg),
      tc_(train_cfg),
      sched_(DiffusionSchedule::linear(model_cfg.timesteps)),
      examples_(std::move(examples)) {
  tc_.validate();
  if (examples_.empty()) throw InvalidInput("train: no training examples");
  std::mt19937_64 rng(derive_seed(tc_.seed, 0xE7A1));
  std::uniform_int_distribution<std::size_t> pick(0, examples_.size() - 1);
  std::vector<std::size_t> picks(static_cast<std::size_t>(tc_.eval_batch));
  for (auto& p : picks) p = pick(rng);
  eval_batch_ = make_batch(examples_, picks, model_.config(), sched_, tc_, rng);
}

void Trainer::init() {
  params_ = nn::ParameterStore<float>();
  model_.init_parameters(params_, tc_.seed);
  ema_ = params_;
}

namespace {

void restore(nn::ParameterStore<float>& store, const nn::Checkpoint& ckpt, const std::string& prefix,
             nn::Matrixf nn::Parameter<float>::*field) {
  for (auto& p : store.params()) {
    const auto* t = ckpt.find(prefix + p.name);
    if (!t) throw InvalidInput("checkpoint is missing tensor " + prefix + p.name);
    nn::Matrixf m = nn::to_matrix(*t);
    if (m.rows() != p.value.rows() || m.cols() != p.value.cols()) {
      throw InvalidInput("checkpoint tensor " + prefix + p.name + " has the wrong shape");
    }
    p.*field = std::move(m);
  }
}

}  // namespace

void Trainer::resume(const nn::Checkpoint& ckpt) {
  init();
  restore(params_, ckpt, "param/", &nn::Parameter<float>::value);
  restore(params_, ckpt, "adam.m/", &nn::Parameter<float>::m);
  restore(params_, ckpt, "adam.v/", &nn::Parameter<float>::v);
  restore(ema_, ckpt, "ema/", &nn::Parameter<float>::value);
  const auto j = nlohmann::json::parse(ckpt.config_json);
  params_.step = j.at("train_state").at("step").get<long>();
  ema_.step = params_.step;
}

nn::Checkpoint Trainer::checkpoint() const {
  nn::Checkpoint c;
  nlohmann::json j;
  j["model"] = nlohmann::json::parse(model_.config().to_json());
  j["train"] = tc_.to_json();
  j["train_state"] = {{"step", params_.step}};
  c.config_json = j.dump();
  for (const auto& p : params_.params()) c.tensors.push_back(nn::to_named_tensor("param/" + p.name, p.value));
  for (const auto& p : ema_.params()) c.tensors.push_back(nn::to_named_tensor("ema/" + p.name, p.value));
  for (const auto& p : params_.params()) c.tensors.push_back(nn::to_named_tensor("adam.m/" + p.name, p.m));
  for (const auto& p : params_.params()) c.tensors.push_back(nn::to_named_tensor("adam.v/" + p.name, p.v));
  return c;
}

double Trainer::step() {
  std::mt19937_64 rng(derive_seed(tc_.seed, static_cast<std::uint64_t>(params_.step) + 1));
  std::uniform_int_distribution<std::size_t> pick(0, examples_.size() - 1);
  std::vector<std::size_t> picks(static_cast<std::size_t>(tc_.batch_size));
  for (auto& p : picks) p = pick(rng);
  const TrainingBatch batch = make_batch(examples_, picks, model_.config(), sched_, tc_, rng);
  params_.zero_grad();
  const double loss = batch_loss(model_, params_, batch, true);
  nn::clip_grad_norm(params_, tc_.clip_norm);
  nn::AdamConfig adam = tc_.adam;
  adam.lr = tc_.lr_at(params_.step);
  nn::adam_step(params_, adam);
  update_ema();
  return loss;
}

void Trainer::update_ema() {
  // warm-up keeps the average from being dominated by the random initialization
  const double n = static_cast<double>(params_.step);
  const auto d = static_cast<float>(std::min(tc_.ema_decay, (1.0 + n) / (10.0 + n)));
  auto src = params_.params().begin();
  for (auto& p : ema_.params()) {
    p.value = d * p.value + (1.0f - d) * src->value;
    ++src;
  }
  ema_.step = params_.step;
}

double Trainer::eval_loss(const nn::ParameterStore<float>& store) const {
  return batch_loss(model_, const_cast<nn::ParameterStore<float>&>(store), eval_batch_, false);
}

}  // namespace iposter
