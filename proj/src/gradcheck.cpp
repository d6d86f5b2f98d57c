// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#include "iposter/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>

#include "iposter/diffusion.hpp"
#include "iposter/model.hpp"

namespace iposter {

nlohmann::json GradcheckReport::to_json() const {
  nlohmann::json blocks_json = nlohmann::json::array();
  for (const auto& b : blocks) {
    blocks_json.push_back({{"name", b.name},
                           {"coordinates", b.coordinates},
                           {"max_rel_error", b.max_rel_error},
                           {"max_abs_error", b.max_abs_error},
                           {"passed", b.passed}});
  }
  return {{"passed", passed}, {"tolerance", tolerance}, {"seconds", seconds}, {"blocks", blocks_json}};
}

namespace {

using Model = NoiseModel<double>;
using Store = nn::ParameterStore<double>;
using Tape = nn::Tape<double>;
using Var = nn::Var<double>;
using Mat = nn::Matrixd;

/// Scalar objective: the block output projected onto a fixed random matrix.
using Objective = std::function<Var(Tape&, Store&)>;

Mat random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Var project(const Var& out, const Mat& proj) { return nn::sum(nn::mul(out, out.tape().constant(proj))); }

BlockResult check_block(const std::string& name, const std::string& prefix, Store& store, const Objective& f,
                        const GradcheckOptions& opts, std::mt19937_64& rng) {
  struct Coord {
    nn::Parameter<double>* p;
    Eigen::Index index;
  };
  std::vector<Coord> all;
  for (auto& p : store.params()) {
    if (p.name.rfind(prefix, 0) != 0) continue;
    for (Eigen::Index i = 0; i < p.value.size(); ++i) all.push_back({&p, i});
  }
  if (all.empty()) throw std::logic_error("gradcheck: block " + name + " has no parameters");
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min(all.size(), static_cast<std::size_t>(opts.coordinates)));

  store.zero_grad();
  {
    Tape tape(true, true);
    tape.backward(f(tape, store));
  }
  auto eval = [&] {
    Tape tape(false, true);
    return f(tape, store).value()(0, 0);
  };

  BlockResult r;
  r.name = name;
  r.coordinates = static_cast<int>(all.size());
  for (const auto& c : all) {
    double analytic = c.p->grad.data()[c.index];
    if (opts.corrupt) analytic *= 1.05;
    double& x = c.p->value.data()[c.index];
    const double saved = x;
    x = saved + opts.step;
    const double up = eval();
    x = saved - opts.step;
    const double down = eval();
    x = saved;
    const double numeric = (up - down) / (2 * opts.step);
    const double abs_err = std::abs(analytic - numeric);
    const double rel_err = abs_err / std::max({std::abs(analytic), std::abs(numeric), opts.floor});
    r.max_abs_error = std::max(r.max_abs_error, abs_err);
    r.max_rel_error = std::max(r.max_rel_error, rel_err);
  }
  store.zero_grad();
  r.passed = r.max_rel_error <= opts.tolerance;
  return r;
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& opts) {
  if (opts.coordinates < 1 || !(opts.step > 0) || !(opts.tolerance > 0) || !(opts.floor > 0)) {
    throw InvalidInput("gradcheck: coordinates, step, tolerance and floor must be positive");
  }
  const auto start = std::chrono::steady_clock::now();
  const ModelConfig cfg;
  const Model model(cfg);
  Store store;
  model.init_parameters(store, opts.seed);
  std::mt19937_64 rng(derive_seed(opts.seed, 0x6C));
  // biases and norms start at exact constants; jitter them so every parameter is generic
  for (auto& p : store.params()) p.value += random_matrix(p.value.rows(), p.value.cols(), rng, 0.05);

  const int batch = 2;
  const int n = cfg.max_elements;
  const int m = cfg.num_patches();
  const int d = cfg.d_model;
  const Mat patches = random_matrix(static_cast<Eigen::Index>(batch) * m, cfg.patch_dim(), rng, 0.5);
  const Mat salbox = random_matrix(batch, 4, rng, 0.5);
  const Mat x_t = random_matrix(static_cast<Eigen::Index>(batch) * n, 5, rng);
  const std::vector<int> ts = {7, 63};
  const Mat blm_feats = random_matrix(static_cast<Eigen::Index>(batch) * (n + 1), d, rng);
  const Mat ilm_feats = random_matrix(static_cast<Eigen::Index>(batch) * (m + n), d, rng);
  const Mat h_blm = random_matrix(static_cast<Eigen::Index>(batch) * n, d, rng);
  const Mat h_ilm = random_matrix(static_cast<Eigen::Index>(batch) * n, d, rng);
  const MessageGraph blm_graph = MessageGraph::replicate(build_blm_graph(n), batch);
  const MessageGraph ilm_graph = MessageGraph::replicate(build_ilm_graph(cfg.grid(), cfg.grid(), n), batch);
  const Mat proj_nodes_blm = random_matrix(blm_feats.rows(), d, rng);
  const Mat proj_nodes_ilm = random_matrix(ilm_feats.rows(), d, rng);
  const Mat proj_elements = random_matrix(static_cast<Eigen::Index>(batch) * n, d, rng);
  const Mat proj_image = random_matrix(patches.rows(), d, rng);
  const Mat proj_bbox = random_matrix(batch, d, rng);
  const Mat eps = random_matrix(x_t.rows(), 5, rng);
  const Mat weight = Mat::Ones(x_t.rows(), 5);
  ModelBatch<double> mb;
  mb.x_t = x_t;
  mb.t = ts;
  mb.patches = patches;
  mb.salbox = salbox;

  struct Block {
    std::string name;
    std::string prefix;
    Objective f;
  };
  const std::vector<Block> blocks = {
      {"gnn_layer_blm", "blm.",
       [&](Tape& t, Store& s) { return project(model.gnn_message_pass(t, s, "blm", blm_graph, t.constant(blm_feats)), proj_nodes_blm); }},
      {"gnn_layer_ilm", "ilm.",
       [&](Tape& t, Store& s) { return project(model.gnn_message_pass(t, s, "ilm", ilm_graph, t.constant(ilm_feats)), proj_nodes_ilm); }},
      {"cross_attention", "xattn.",
       [&](Tape& t, Store& s) {
         return project(model.cross_attention(t, s, t.constant(h_blm), t.constant(h_ilm), batch), proj_elements);
       }},
      {"image_encoder", "img.",
       [&](Tape& t, Store& s) { return project(model.encode_image(t, s, patches, batch), proj_image); }},
      {"layout_encoder", "layout.",
       [&](Tape& t, Store& s) { return project(model.encode_layout(t, s, t.constant(x_t), ts), proj_elements); }},
      {"bbox_encoder", "bbox.", [&](Tape& t, Store& s) { return project(model.encode_bbox(t, s, salbox), proj_bbox); }},
      {"full_model", "",
       [&](Tape& t, Store& s) { return nn::weighted_mse(model.predict_noise(t, s, mb), eps, weight); }},
  };

  GradcheckReport report;
  report.tolerance = opts.tolerance;
  report.passed = true;
  for (const auto& b : blocks) {
    report.blocks.push_back(check_block(b.name, b.prefix, store, b.f, opts, rng));
    report.passed = report.passed && report.blocks.back().passed;
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace iposter
