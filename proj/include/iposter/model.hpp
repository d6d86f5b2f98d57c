// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "iposter/canvas.hpp"
#include "iposter/graph.hpp"
#include "iposter/layout.hpp"
#include "iposter/numerics/ops.hpp"

namespace iposter {

enum class AttnDirection { BlmQueries, IlmQueries };

struct ModelConfig {
  int d_model = 64;
  int gnn_layers = 2;
  int attn_heads = 4;
  int patch_size = 8;
  int resolution = 64;
  int max_elements = 10;
  int num_categories = kNumCategories;
  int timesteps = 100;
  int image_blocks = 2;
  int mlp_ratio = 2;
  AttnDirection attn_direction = AttnDirection::BlmQueries;

  void validate() const;
  int grid() const { return resolution / patch_size; }
  int num_patches() const { return grid() * grid(); }
  int patch_dim() const { return patch_size * patch_size * 4; }

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

/// Conditioning derived from one (canvas, saliency) pair at model resolution.
struct Condition {
  nn::Matrixf patches;  // num_patches x patch_dim, values mapped to [-1, 1]
  Box salbox;           // normalized; empty_salbox() when nothing passes the threshold
  bool has_salbox = false;
};

Condition make_condition(const Raster& canvas, const Raster& saliency, const ModelConfig& cfg,
                         float threshold = kSaliencyThreshold);

/// Salbox as the 1 x 4 model-space row fed to the bbox encoder.
nn::Matrixf salbox_row(const Box& b);

/// Directed message lists for `copies` disjoint replicas of a graph, nodes laid out replica by replica.
struct MessageGraph {
  std::vector<int> receivers;
  std::vector<int> senders;
  int num_nodes = 0;

  static MessageGraph replicate(const LayoutGraph& g, int copies);
};

/// Inputs of one forward pass over a batch of B layouts.
template <typename S>
struct ModelBatch {
  nn::Matrix<S> x_t;       // (B*N) x 5, model space
  std::vector<int> t;      // B timesteps in [1, T]
  nn::Matrix<S> patches;   // (B*M) x patch_dim
  nn::Matrix<S> salbox;    // B x 4
  int batch() const { return static_cast<int>(t.size()); }
};

/// Conditional noise predictor: image/layout/bbox encoders, BLM and ILM graph modules,
/// cross attention between their element features and a per-element linear head.
template <typename S>
class NoiseModel {
 public:
  using Tape = nn::Tape<S>;
  using Var = nn::Var<S>;
  using Store = nn::ParameterStore<S>;
  using Mat = nn::Matrix<S>;

  explicit NoiseModel(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }

  /// Registers every parameter with a deterministic random initialization.
  void init_parameters(Store& store, std::uint64_t seed) const;

  /// (B*M) x d.
  Var encode_image(Tape& tape, Store& store, const Mat& patches, int batch, bool use_positional = true) const;
  /// (B*N) x d: per-row MLP plus the timestep embedding of the row's sample.
  Var encode_layout(Tape& tape, Store& store, const Var& x_t, std::span<const int> t) const;
  /// B x d.
  Var encode_bbox(Tape& tape, Store& store, const Mat& salbox) const;

  /// `layers` rounds of edge-MLP messages, mean aggregation and residual LayerNorm update.
  Var gnn_message_pass(Tape& tape, Store& store, const std::string& prefix, const MessageGraph& graph,
                       Var feats) const;

  /// Element rows (B*N) x d after message passing on the batched BLM / ILM graphs.
  Var blm_forward(Tape& tape, Store& store, const Var& f_bbox, const Var& f_layout, int batch) const;
  Var ilm_forward(Tape& tape, Store& store, const Var& f_image, const Var& f_layout, int batch) const;

  Var cross_attention(Tape& tape, Store& store, const Var& h_blm, const Var& h_ilm, int batch) const;

  /// (B*N) x 5 noise estimate.
  Var predict_noise(Tape& tape, Store& store, const ModelBatch<S>& batch) const;

  /// Condition features that do not depend on x_t or t, reusable across denoising steps.
  struct Encoded {
    Mat image;  // M x d
    Mat bbox;   // 1 x d
  };
  Encoded encode_condition(const Store& store, const Mat& patches, const Mat& salbox) const;
  /// Inference-only noise estimate for one layout (N x 5) using cached condition features.
  Mat predict_noise(const Store& store, const Encoded& cond, const Mat& x_t, int t) const;

 private:
  Var param(Tape& tape, Store& store, const std::string& name) const;
  Var mlp(Tape& tape, Store& store, const std::string& prefix, const Var& x) const;
  Var layer_norm(Tape& tape, Store& store, const std::string& prefix, const Var& x) const;
  Var linear(Tape& tape, Store& store, const std::string& prefix, const Var& x) const;
  Var predict_from_features(Tape& tape, Store& store, const Var& f_image, const Var& f_bbox, const Var& x_t,
                            std::span<const int> t) const;

  ModelConfig cfg_;
  LayoutGraph blm_graph_;
  LayoutGraph ilm_graph_;
};

extern template class NoiseModel<float>;
extern template class NoiseModel<double>;

}  // namespace iposter
