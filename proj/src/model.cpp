// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#include "iposter/model.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "json.hpp"

namespace iposter {

using nn::Matrixf;

void ModelConfig::validate() const {
  if (d_model < 2 || d_model % 2 != 0) throw InvalidInput("model config: d_model must be even and >= 2");
  if (attn_heads < 1 || d_model % attn_heads != 0) throw InvalidInput("model config: d_model % attn_heads != 0");
  if (gnn_layers < 1 || image_blocks < 0 || mlp_ratio < 1) throw InvalidInput("model config: bad depth settings");
  if (patch_size < 1 || resolution < patch_size || resolution % patch_size != 0) {
    throw InvalidInput("model config: resolution must be a multiple of patch_size");
  }
  if (max_elements < 1) throw InvalidInput("model config: max_elements must be >= 1");
  if (num_categories < 2) throw InvalidInput("model config: num_categories must be >= 2");
  if (timesteps < 1) throw InvalidInput("model config: timesteps must be >= 1");
}

std::string ModelConfig::to_json() const {
  nlohmann::json j = {{"d_model", d_model},
                      {"gnn_layers", gnn_layers},
                      {"attn_heads", attn_heads},
                      {"patch_size", patch_size},
                      {"resolution", resolution},
                      {"max_elements", max_elements},
                      {"num_categories", num_categories},
                      {"timesteps", timesteps},
                      {"image_blocks", image_blocks},
                      {"mlp_ratio", mlp_ratio},
                      {"attn_direction", attn_direction == AttnDirection::BlmQueries ? "blm_queries" : "ilm_queries"}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  ModelConfig c;
  c.d_model = j.value("d_model", c.d_model);
  c.gnn_layers = j.value("gnn_layers", c.gnn_layers);
  c.attn_heads = j.value("attn_heads", c.attn_heads);
  c.patch_size = j.value("patch_size", c.patch_size);
  c.resolution = j.value("resolution", c.resolution);
  c.max_elements = j.value("max_elements", c.max_elements);
  c.num_categories = j.value("num_categories", c.num_categories);
  c.timesteps = j.value("timesteps", c.timesteps);
  c.image_blocks = j.value("image_blocks", c.image_blocks);
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
  const auto dir = j.value("attn_direction", std::string("blm_queries"));
  if (dir == "blm_queries") {
    c.attn_direction = AttnDirection::BlmQueries;
  } else if (dir == "ilm_queries") {
    c.attn_direction = AttnDirection::IlmQueries;
  } else {
    throw InvalidInput("model config: unknown attn_direction '" + dir + "'");
  }
  c.validate();
  return c;
}

Matrixf salbox_row(const Box& b) {
  Matrixf row(1, 4);
  row << static_cast<float>(2 * b.cx - 1), static_cast<float>(2 * b.cy - 1), static_cast<float>(2 * b.w - 1),
      static_cast<float>(2 * b.h - 1);
  return row;
}

Condition make_condition(const Raster& canvas, const Raster& saliency, const ModelConfig& cfg, float threshold) {
  Condition c;
  const auto sb = extract_salbox(saliency, threshold);
  c.has_salbox = sb.has_value();
  c.salbox = sb.value_or(empty_salbox());
  const Raster img4 = compose_four_channel(resize(canvas, cfg.resolution, cfg.resolution),
                                           resize(saliency, cfg.resolution, cfg.resolution));
  c.patches = patchify(img4, cfg.patch_size).patches.array() * 2.0f - 1.0f;
  return c;
}

MessageGraph MessageGraph::replicate(const LayoutGraph& g, int copies) {
  const auto d = g.directed();
  MessageGraph m;
  m.num_nodes = g.num_nodes() * copies;
  m.receivers.reserve(d.receivers.size() * copies);
  m.senders.reserve(d.senders.size() * copies);
  for (int c = 0; c < copies; ++c) {
    const int off = c * g.num_nodes();
    for (std::size_t e = 0; e < d.receivers.size(); ++e) {
      m.receivers.push_back(d.receivers[e] + off);
      m.senders.push_back(d.senders[e] + off);
    }
  }
  return m;
}

namespace {

template <typename S>
class Initializer {
 public:
  Initializer(nn::ParameterStore<S>& store, std::uint64_t seed) : store_(store), rng_(seed) {}

  void linear(const std::string& name, int in, int out, bool bias = true) {
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
    nn::Matrix<S> w(in, out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<S>(dist(rng_));
    store_.add(name + ".w", std::move(w));
    if (bias) store_.add(name + ".b", nn::Matrix<S>::Zero(1, out));
  }

  void norm(const std::string& name, int d) {
    store_.add(name + ".g", nn::Matrix<S>::Ones(1, d));
    store_.add(name + ".b", nn::Matrix<S>::Zero(1, d));
  }

  void embedding(const std::string& name, int rows, int cols, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    nn::Matrix<S> w(rows, cols);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<S>(dist(rng_));
    store_.add(name, std::move(w));
  }

 private:
  nn::ParameterStore<S>& store_;
  std::mt19937_64 rng_;
};

}  // namespace

template <typename S>
NoiseModel<S>::NoiseModel(ModelConfig cfg)
    : cfg_(cfg),
      blm_graph_(build_blm_graph(cfg.max_elements)),
      ilm_graph_(build_ilm_graph(cfg.grid(), cfg.grid(), cfg.max_elements)) {
  cfg_.validate();
}

template <typename S>
void NoiseModel<S>::init_parameters(Store& store, std::uint64_t seed) const {
  const int d = cfg_.d_model;
  const int hidden = cfg_.mlp_ratio * d;
  Initializer<S> init(store, seed);

  init.linear("img.embed", cfg_.patch_dim(), d);
  init.embedding("img.pos", cfg_.num_patches(), d, 0.02);
  for (int b = 0; b < cfg_.image_blocks; ++b) {
    const std::string p = "img." + std::to_string(b);
    init.norm(p + ".ln1", d);
    init.linear(p + ".qkv", d, 3 * d);
    init.linear(p + ".proj", d, d);
    init.norm(p + ".ln2", d);
    init.linear(p + ".fc1", d, hidden);
    init.linear(p + ".fc2", hidden, d);
  }
  init.norm("img.ln_f", d);

  init.linear("layout.fc1", 5, d);
  init.linear("layout.fc2", d, d);
  init.linear("bbox.fc1", 4, d);
  init.linear("bbox.fc2", d, d);

  for (const char* module : {"blm", "ilm"}) {
    for (int l = 0; l < cfg_.gnn_layers; ++l) {
      const std::string p = std::string(module) + "." + std::to_string(l);
      init.linear(p + ".msg.recv", d, d);
      init.linear(p + ".msg.send", d, d, false);
      init.linear(p + ".msg.out", d, d);
      init.linear(p + ".upd.fc1", 2 * d, d);
      init.linear(p + ".upd.fc2", d, d);
      init.norm(p + ".ln", d);
    }
  }

  init.linear("xattn.q", d, d);
  init.linear("xattn.k", d, d);
  init.linear("xattn.v", d, d);
  init.linear("xattn.o", d, d);
  init.norm("xattn.ln1", d);
  init.linear("xattn.fc1", d, hidden);
  init.linear("xattn.fc2", hidden, d);
  init.norm("xattn.ln2", d);

  init.linear("head", d, 5);
}

template <typename S>
typename NoiseModel<S>::Var NoiseModel<S>::param(Tape& tape, Store& store, const std::string& name) const {
  return tape.param(store.get(name));
}

template <typename S>
typename NoiseModel<S>::Var NoiseModel<S>::linear(Tape& tape, Store& store, const std::string& prefix,
                                                  const Var& x) const {
  return nn::linear(x, param(tape, store, prefix + ".w"), param(tape, store, prefix + ".b"));
}

template <typename S>
typename NoiseModel<S>::Var NoiseModel<S>::mlp(Tape& tape, Store& store, const std::string& prefix,
                                               const Var& x) const {
  return linear(tape, store, prefix + ".fc2", nn::gelu(linear(tape, store, prefix + ".fc1", x)));
}

template <typename S>
typename NoiseModel<S>::Var NoiseModel<S>::layer_norm(Tape& tape, Store& store, const std::string& prefix,
                                                      const Var& x) const {
  return nn::layer_norm(x, param(tape, store, prefix + ".g"), param(tape, store, prefix + ".b"));
}

template <typename S>
typename NoiseModel<S>::Var NoiseModel<S>::encode_image(Tape& tape, Store& store, const Mat& patches, int batch,
                                                        bool use_positional) const {
  const int m = cfg_.num_patches();
  const int d = cfg_.d_model;
  if (patches.rows() != static_cast<Eigen::Index>(batch) * m || patches.cols() != cfg_.patch_dim()) {
    throw InvalidInput("encode_image: patch matrix does not match (batch * M) x patch_dim");
  }
  Var x = linear(tape, store, "img.embed", tape.constant(patches));
  if (use_positional) {
    std::vector<int> idx(static_cast<std::size_t>(batch) * m);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i % m);
    x = nn::add(x, nn::gather_rows(param(tape, store, "img.pos"), std::span<const int>(idx)));
  }
  for (int b = 0; b < cfg_.image_blocks; ++b) {
    const std::string p = "img." + std::to_string(b);
    const Var qkv = linear(tape, store, p + ".qkv", layer_norm(tape, store, p + ".ln1", x));
    const Var attn = nn::grouped_attention(nn::slice_cols(qkv, 0, d), nn::slice_cols(qkv, d, d),
                                           nn::slice_cols(qkv, 2 * d, d), cfg_.attn_heads, m, m);
    x = nn::add(x, linear(tape, store, p + ".proj", attn));
    x = nn::add(x, mlp(tape, store, p, layer_norm(tape, store, p + ".ln2", x)));
  }
  return layer_norm(tape, store, "img.ln_f", x);
}

template <typename S>
typename NoiseModel<S>::Var NoiseModel<S>::encode_layout(Tape& tape, Store& store, const Var& x_t,
                                                         std::span<const int> t) const {
  if (x_t.cols() != 5 || t.empty() || x_t.rows() % static_cast<Eigen::Index>(t.size()) != 0) {
    throw InvalidInput("encode_layout: x_t must be (B*N) x 5 with one timestep per sample");
  }
  const auto per_sample = x_t.rows() / static_cast<Eigen::Index>(t.size());
  std::vector<int> row_t(static_cast<std::size_t>(x_t.rows()));
  for (std::size_t r = 0; r < row_t.size(); ++r) row_t[r] = t[r / static_cast<std::size_t>(per_sample)];
  const Var temb = tape.constant(nn::sinusoidal_embed<S>(row_t, cfg_.d_model));
  return nn::add(mlp(tape, store, "layout", x_t), temb);
}

template <typename S>
typename NoiseModel<S>::Var NoiseModel<S>::encode_bbox(Tape& tape, Store& store, const Mat& salbox) const {
  if (salbox.cols() != 4) throw InvalidInput("encode_bbox: expected B x 4 salbox rows");
  return mlp(tape, store, "bbox", tape.constant(salbox));
}

template <typename S>
typename NoiseModel<S>::Var NoiseModel<S>::gnn_message_pass(Tape& tape, Store& store, const std::string& prefix,
                                                            const MessageGraph& graph, Var h) const {
  if (h.rows() != graph.num_nodes || h.cols() != cfg_.d_model) {
    throw InvalidInput("gnn_message_pass: feature rows must equal graph node count");
  }
  std::vector<S> has_incoming(static_cast<std::size_t>(graph.num_nodes), S(0));
  for (int r : graph.receivers) has_incoming[static_cast<std::size_t>(r)] = S(1);
  const std::span<const int> recv(graph.receivers);
  const std::span<const int> send(graph.senders);

  for (int l = 0; l < cfg_.gnn_layers; ++l) {
    const std::string p = prefix + "." + std::to_string(l);
    // m_ij = W_out gelu(W_r h_i + W_s h_j + b) + b_out, averaged over senders j of receiver i.
    Var agg;
    if (!graph.receivers.empty()) {
      const Var hr = linear(tape, store, p + ".msg.recv", h);
      const Var hs = nn::matmul(h, param(tape, store, p + ".msg.send.w"));
      const Var pre = nn::add(nn::gather_rows(hr, recv), nn::gather_rows(hs, send));
      const Var hidden = nn::scatter_mean(nn::gelu(pre), recv, graph.num_nodes);
      agg = nn::scale_rows(linear(tape, store, p + ".msg.out", hidden), std::span<const S>(has_incoming));
    } else {
      agg = tape.constant(Mat::Zero(h.rows(), h.cols()));
    }
    const Var update = mlp(tape, store, p + ".upd", nn::concat_cols<S>({h, agg}));
    h = layer_norm(tape, store, p + ".ln", nn::add(h, update));
  }
  return h;
}

template <typename S>
typename NoiseModel<S>::Var NoiseModel<S>::blm_forward(Tape& tape, Store& store, const Var& f_bbox,
                                                       const Var& f_layout, int batch) const {
  const int n = cfg_.max_elements;
  if (f_bbox.rows() != batch || f_layout.rows() != static_cast<Eigen::Index>(batch) * n) {
    throw InvalidInput("blm_forward: feature rows do not match batch");
  }
  // Stack [salbox_b, elements_b] per sample.
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(batch) * (n + 1));
  for (int b = 0; b < batch; ++b) {
    order.push_back(b);
    for (int e = 0; e < n; ++e) order.push_back(batch + b * n + e);
  }
  const Var nodes = nn::gather_rows(nn::concat_rows<S>({f_bbox, f_layout}), std::span<const int>(order));
  const Var out = gnn_message_pass(tape, store, "blm", MessageGraph::replicate(blm_graph_, batch), nodes);
  std::vector<int> elements;
  elements.reserve(static_cast<std::size_t>(batch) * n);
  for (int b = 0; b < batch; ++b) {
    for (int e = 0; e < n; ++e) elements.push_back(b * (n + 1) + 1 + e);
  }
  return nn::gather_rows(out, std::span<const int>(elements));
}

template <typename S>
typename NoiseModel<S>::Var NoiseModel<S>::ilm_forward(Tape& tape, Store& store, const Var& f_image,
                                                       const Var& f_layout, int batch) const {
  const int n = cfg_.max_elements;
  const int m = cfg_.num_patches();
  if (f_image.rows() != static_cast<Eigen::Index>(batch) * m || f_layout.rows() != static_cast<Eigen::Index>(batch) * n) {
    throw InvalidInput("ilm_forward: feature rows do not match batch");
  }
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(batch) * (m + n));
  for (int b = 0; b < batch; ++b) {
    for (int p = 0; p < m; ++p) order.push_back(b * m + p);
    for (int e = 0; e < n; ++e) order.push_back(batch * m + b * n + e);
  }
  const Var nodes = nn::gather_rows(nn::concat_rows<S>({f_image, f_layout}), std::span<const int>(order));
  const Var out = gnn_message_pass(tape, store, "ilm", MessageGraph::replicate(ilm_graph_, batch), nodes);
  std::vector<int> elements;
  elements.reserve(static_cast<std::size_t>(batch) * n);
  for (int b = 0; b < batch; ++b) {
    for (int e = 0; e < n; ++e) elements.push_back(b * (m + n) + m + e);
  }
  return nn::gather_rows(out, std::span<const int>(elements));
}

template <typename S>
typename NoiseModel<S>::Var NoiseModel<S>::cross_attention(Tape& tape, Store& store, const Var& h_blm,
                                                            const Var& h_ilm, int batch) const {
  if (h_blm.rows() != h_ilm.rows() || h_blm.cols() != h_ilm.cols()) {
    throw InvalidInput("cross_attention: BLM and ILM features differ in shape");
  }
  const bool blm_q = cfg_.attn_direction == AttnDirection::BlmQueries;
  const Var& query = blm_q ? h_blm : h_ilm;
  const Var& context = blm_q ? h_ilm : h_blm;
  const int n = static_cast<int>(query.rows() / batch);
  const Var attn = nn::grouped_attention(linear(tape, store, "xattn.q", query), linear(tape, store, "xattn.k", context),
                                         linear(tape, store, "xattn.v", context), cfg_.attn_heads, n, n);
  Var h = layer_norm(tape, store, "xattn.ln1", nn::add(query, linear(tape, store, "xattn.o", attn)));
  return layer_norm(tape, store, "xattn.ln2", nn::add(h, mlp(tape, store, "xattn", h)));
}

template <typename S>
typename NoiseModel<S>::Var NoiseModel<S>::predict_from_features(Tape& tape, Store& store, const Var& f_image,
                                                                 const Var& f_bbox, const Var& x_t,
                                                                 std::span<const int> t) const {
  const int batch = static_cast<int>(t.size());
  const Var f_layout = encode_layout(tape, store, x_t, t);
  const Var h_blm = blm_forward(tape, store, f_bbox, f_layout, batch);
  const Var h_ilm = ilm_forward(tape, store, f_image, f_layout, batch);
  return linear(tape, store, "head", cross_attention(tape, store, h_blm, h_ilm, batch));
}

template <typename S>
typename NoiseModel<S>::Var NoiseModel<S>::predict_noise(Tape& tape, Store& store, const ModelBatch<S>& batch) const {
  const int b = batch.batch();
  if (b < 1 || batch.x_t.rows() != static_cast<Eigen::Index>(b) * cfg_.max_elements || batch.x_t.cols() != 5 ||
      batch.salbox.rows() != b) {
    throw InvalidInput("predict_noise: batch shapes are inconsistent");
  }
  for (int t : batch.t) {
    if (t < 1 || t > cfg_.timesteps) throw InvalidInput("predict_noise: timestep out of range");
  }
  const Var f_image = encode_image(tape, store, batch.patches, b);
  const Var f_bbox = encode_bbox(tape, store, batch.salbox);
  return predict_from_features(tape, store, f_image, f_bbox, tape.input(batch.x_t), batch.t);
}

template <typename S>
typename NoiseModel<S>::Encoded NoiseModel<S>::encode_condition(const Store& store, const Mat& patches,
                                                                const Mat& salbox) const {
  // a non-recording tape never writes to parameters
  auto& params = const_cast<Store&>(store);
  Tape tape(false);
  Encoded e;
  e.image = encode_image(tape, params, patches, 1).value();
  e.bbox = encode_bbox(tape, params, salbox).value();
  return e;
}

template <typename S>
typename NoiseModel<S>::Mat NoiseModel<S>::predict_noise(const Store& store, const Encoded& cond, const Mat& x_t,
                                                         int t) const {
  if (x_t.rows() != cfg_.max_elements || x_t.cols() != 5) throw InvalidInput("predict_noise: x_t must be N x 5");
  if (t < 1 || t > cfg_.timesteps) throw InvalidInput("predict_noise: timestep out of range");
  auto& params = const_cast<Store&>(store);
  Tape tape(false);
  const int ts[1] = {t};
  return predict_from_features(tape, params, tape.constant(cond.image), tape.constant(cond.bbox), tape.constant(x_t),
                               std::span<const int>(ts))
      .value();
}

template class NoiseModel<float>;
template class NoiseModel<double>;

}  // namespace iposter
