// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#include "iposter/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include <openssl/evp.h>

namespace iposter {

namespace {

ModelConfig config_of(const nn::Checkpoint& ckpt) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ckpt.config_json);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("checkpoint config is not JSON: ") + e.what());
  }
  if (!j.contains("model")) throw InvalidInput("checkpoint config has no model section");
  return ModelConfig::from_json(j.at("model").dump());
}

}  // namespace

LoadedModel::LoadedModel(const nn::Checkpoint& ckpt, std::string hash)
    : config(config_of(ckpt)),
      schedule(DiffusionSchedule::linear(config.timesteps)),
      codec(config.num_categories),
      model(config),
      sha256(std::move(hash)) {
  model.init_parameters(weights, 0);
  const bool has_ema = ckpt.find("ema/" + weights.params().front().name) != nullptr;
  const std::string prefix = has_ema ? "ema/" : "param/";
  for (auto& p : weights.params()) {
    const auto* t = ckpt.find(prefix + p.name);
    if (!t) throw InvalidInput("checkpoint is missing tensor " + prefix + p.name);
    nn::Matrixf v = nn::to_matrix(*t);
    if (v.rows() != p.value.rows() || v.cols() != p.value.cols()) {
      throw InvalidInput("checkpoint tensor " + prefix + p.name + " has the wrong shape");
    }
    p.value = std::move(v);
  }
  for (const auto& t : ckpt.tensors) {
    if (t.name.rfind("param/", 0) == 0) parameter_count += t.data.size();
  }
}

nlohmann::json LoadedModel::describe() const {
  return {{"config", nlohmann::json::parse(config.to_json())},
          {"parameter_count", parameter_count},
          {"checkpoint_sha256", sha256}};
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

std::shared_ptr<const LoadedModel> load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open checkpoint: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return std::make_shared<const LoadedModel>(nn::deserialize_checkpoint(bytes), sha256_hex(bytes));
}

NoisePredictor make_predictor(const LoadedModel& m, const Condition& cond) {
  auto encoded = std::make_shared<NoiseModel<float>::Encoded>(
      m.model.encode_condition(m.weights, cond.patches, salbox_row(cond.salbox)));
  return [&m, encoded](const LayoutState& x_t, int t) { return m.model.predict_noise(m.weights, *encoded, x_t, t); };
}

Layout finalize_layout(const LayoutState& x, const ConstraintSpec& spec, const Layout& user,
                       const CategoryCodec& codec) {
  const auto n = static_cast<int>(x.rows());
  const ConstraintMask mask = build_mask(spec, n);
  const int count = static_cast<int>(user.size());
  Layout out;
  for (int i = 0; i < n; ++i) {
    const bool real = i < count;
    auto fixed = [&](int k) { return mask(i, k) > 0.5f; };
    Category cat = codec.decode(x(i, 0));
    if (fixed(0)) cat = real ? user.elements[static_cast<std::size_t>(i)].category : Category::Empty;
    if (cat == Category::Empty) continue;
    Box b{from_model(x(i, 1)), from_model(x(i, 2)), std::max(0.0, from_model(x(i, 3))),
          std::max(0.0, from_model(x(i, 4)))};
    if (real) {
      const Box& u = user.elements[static_cast<std::size_t>(i)].box;
      if (fixed(1)) b.cx = u.cx;
      if (fixed(2)) b.cy = u.cy;
      if (fixed(3)) b.w = u.w;
      if (fixed(4)) b.h = u.h;
    }
    if (real && fixed(3) && fixed(4) && !(fixed(1) && fixed(2))) {
      b.w = std::min(b.w, 1.0);
      b.h = std::min(b.h, 1.0);
      if (!fixed(1)) b.cx = std::clamp(b.cx, b.w / 2, 1.0 - b.w / 2);
      if (!fixed(2)) b.cy = std::clamp(b.cy, b.h / 2, 1.0 - b.h / 2);
    } else if (!(real && fixed(1) && fixed(2) && fixed(3) && fixed(4))) {
      b = clamp_to_canvas(b);
    }
    out.elements.push_back({cat, b});
  }
  return out;
}

namespace {

double unit_field(const nlohmann::json& e, const char* key, std::size_t index) {
  const auto& v = e.at(key);
  if (!v.is_number()) throw InvalidInput("element " + std::to_string(index) + ": '" + key + "' must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x) || x < 0.0 || x > 1.0) {
    throw InvalidInput("element " + std::to_string(index) + ": '" + key + "' must lie in [0, 1]");
  }
  return x;
}

}  // namespace

UserConstraints parse_user_elements(const nlohmann::json& elements, Task task, int max_elements) {
  if (!elements.is_array()) throw InvalidInput("'elements' must be an array");
  if (static_cast<int>(elements.size()) > max_elements) {
    throw InvalidInput("too many elements: " + std::to_string(elements.size()) + " > " + std::to_string(max_elements));
  }
  const bool refine = task == Task::Refinement;
  if (task == Task::Unconstrained && !elements.empty()) throw InvalidInput("unconstrained takes no elements");
  if (refine && elements.empty()) throw InvalidInput("refinement needs a non-empty layout");
  UserConstraints out;
  for (std::size_t i = 0; i < elements.size(); ++i) {
    const auto& e = elements[i];
    const std::string where = "element " + std::to_string(i);
    if (!e.is_object() || !e.contains("category") || !e.at("category").is_string()) {
      throw InvalidInput(where + ": missing 'category'");
    }
    const auto cat = parse_category(e.at("category").get<std::string>());
    if (!cat || *cat == Category::Empty) throw InvalidInput(where + ": unknown category");
    bool anchored = false;
    if (e.contains("anchored")) {
      if (!e.at("anchored").is_boolean()) throw InvalidInput(where + ": 'anchored' must be boolean");
      anchored = e.at("anchored").get<bool>();
    }
    if (anchored && task != Task::Completion) throw InvalidInput(where + ": 'anchored' is only valid for completion");
    const bool need_size = task == Task::CStoP || refine || anchored;
    const bool need_pos = refine || anchored;
    Box b{0.5, 0.5, 0.0, 0.0};
    auto read = [&](const char* key, bool required, double& dst) {
      if (e.contains(key)) {
        dst = unit_field(e, key, i);
      } else if (required) {
        throw InvalidInput(where + ": task " + std::string(task_name(task)) + " requires '" + key + "'");
      }
    };
    read("cx", need_pos, b.cx);
    read("cy", need_pos, b.cy);
    read("w", need_size, b.w);
    read("h", need_size, b.h);
    if (need_pos && !inside_canvas(b)) throw InvalidInput(where + ": box leaves the canvas");
    out.layout.elements.push_back({*cat, b});
    out.anchors.push_back(anchored);
  }
  return out;
}

SampleResult generate_layout(const LoadedModel& m, const Condition& cond, const ConstraintSpec& spec,
                             std::uint64_t seed, bool keep_trajectory, const StepCallback& on_step) {
  SamplerOptions opts;
  opts.keep_trajectory = keep_trajectory;
  return sample(make_predictor(m, cond), spec, m.schedule, seed, m.codec, opts, on_step);
}

SampleResult refine_layout(const LoadedModel& m, const Condition& cond, const Layout& initial, double strength,
                           std::uint64_t seed, bool keep_trajectory, const StepCallback& on_step) {
  SamplerOptions opts;
  opts.keep_trajectory = keep_trajectory;
  return refine(initial, strength, m.config.max_elements, make_predictor(m, cond), m.schedule, seed, m.codec, opts,
                on_step);
}

}  // namespace iposter
