// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#include "iposter/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include <spdlog/spdlog.h>

#include "iposter/diffusion.hpp"
#include "iposter/errors.hpp"
#include "iposter/layout_json.hpp"
#include "iposter/metrics.hpp"

namespace iposter {

void SynthConfig::validate() const {
  if (num_samples < 0) throw InvalidInput("synth: num_samples must be >= 0");
  if (resolution < 16) throw InvalidInput("synth: resolution must be >= 16");
  if (min_elements < 1 || min_elements > max_elements) throw InvalidInput("synth: invalid element count range");
  for (double w : category_weights) {
    if (!(w > 0) || !std::isfinite(w)) throw InvalidInput("synth: category weights must be positive");
  }
  if (min_blobs < 1 || min_blobs > max_blobs) throw InvalidInput("synth: invalid blob count range");
  if (!(min_blob_size > 0) || min_blob_size > max_blob_size || max_blob_size > 1) {
    throw InvalidInput("synth: invalid blob size range");
  }
  if (grid_columns < 1) throw InvalidInput("synth: grid_columns must be >= 1");
  if (underlay_margin < 0 || underlay_margin > 0.1) throw InvalidInput("synth: underlay_margin must be in [0, 0.1]");
  if (max_retries < 1) throw InvalidInput("synth: max_retries must be >= 1");
}

namespace {

constexpr double kInset = 0.04;      // distance of the column grid content from column edges
constexpr double kClearance = 0.01;  // free space kept between elements and any salient pixel

float quantize(double v) {
  return static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0f;
}

struct Blob {
  bool ellipse;
  double cx, cy, hw, hh;
};

class SampleBuilder {
 public:
  SampleBuilder(const SynthConfig& cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {}

  std::optional<PosterSample> build() {
    const int res = cfg_.resolution;
    draw_blobs();
    Raster sal(res, res, 1);
    for (int y = 0; y < res; ++y) {
      for (int x = 0; x < res; ++x) sal.at(x, y) = quantize(saliency((x + 0.5) / res, (y + 0.5) / res));
    }
    for (int attempt = 0; attempt < 8; ++attempt) {
      auto layout = place_elements(sal);
      if (!layout) continue;
      const MetricsReport r = evaluate(*layout, Raster(res, res, 3, 0.5f), sal);
      if (r.occ > 0.05 || r.ove > 0.01 || r.und_s < 1.0) continue;
      PosterSample s;
      s.canvas = paint_canvas(sal);
      s.saliency = std::move(sal);
      s.layout = std::move(*layout);
      return s;
    }
    return std::nullopt;
  }

 private:
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  void draw_blobs() {
    blobs_.clear();
    const int count = uniform_int(cfg_.min_blobs, cfg_.max_blobs);
    for (int i = 0; i < count; ++i) {
      Blob b;
      b.ellipse = uniform(0, 1) < 0.5;
      b.hw = uniform(cfg_.min_blob_size, cfg_.max_blob_size) / 2;
      b.hh = uniform(cfg_.min_blob_size, cfg_.max_blob_size) / 2;
      b.cx = uniform(b.hw, 1 - b.hw);
      b.cy = uniform(b.hh, 1 - b.hh);
      blobs_.push_back(b);
    }
  }

  /// 1 in the blob core, ramping to 0 over a few pixels across the boundary.
  double saliency(double x, double y) const {
    const double soft = 3.0 / cfg_.resolution;
    double s = 0.0;
    for (const auto& b : blobs_) {
      double d;
      if (b.ellipse) {
        const double r = std::hypot((x - b.cx) / b.hw, (y - b.cy) / b.hh);
        d = (r - 1.0) * std::min(b.hw, b.hh);
      } else {
        d = std::max(std::abs(x - b.cx) - b.hw, std::abs(y - b.cy) - b.hh);
      }
      s = std::max(s, std::clamp(0.5 - d / soft, 0.0, 1.0));
    }
    return s;
  }

  static bool touches_salient(const Box& box, const Raster& sal) {
    const int res = sal.width();
    const double pad = kClearance;
    const int x0 = std::max(0, static_cast<int>(std::floor((box.left() - pad) * res)));
    const int x1 = std::min(res - 1, static_cast<int>(std::floor((box.right() + pad) * res)));
    const int y0 = std::max(0, static_cast<int>(std::floor((box.top() - pad) * res)));
    const int y1 = std::min(res - 1, static_cast<int>(std::floor((box.bottom() + pad) * res)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (sal.at(x, y) > 0.0f) return true;
      }
    }
    return false;
  }

  static Box inflate(const Box& b, double m) { return {b.cx, b.cy, b.w + 2 * m, b.h + 2 * m}; }

  std::vector<Category> draw_categories() {
    const int k = uniform_int(cfg_.min_elements, cfg_.max_elements);
    std::discrete_distribution<int> pick(cfg_.category_weights.begin(), cfg_.category_weights.end());
    int logos = 0, texts = 0, underlays = 0;
    for (int i = 0; i < k; ++i) {
      switch (pick(rng_)) {
        case 0: ++logos; break;
        case 1: ++texts; break;
        default: ++underlays; break;
      }
    }
    if (logos > 1) {
      texts += logos - 1;
      logos = 1;
    }
    if (texts == 0) {
      if (underlays > 0) --underlays; else --logos;
      ++texts;
    }
    if (underlays > texts) {
      const int extra = underlays - texts;
      underlays -= extra;
      texts += extra;
    }
    std::vector<Category> cats(static_cast<std::size_t>(texts), Category::Text);
    cats.insert(cats.end(), static_cast<std::size_t>(underlays), Category::Underlay);
    if (logos == 1) cats.push_back(Category::Logo);
    return cats;
  }

  std::optional<Layout> place_elements(const Raster& sal) {
    const auto cats = draw_categories();
    const int texts = static_cast<int>(std::count(cats.begin(), cats.end(), Category::Text));
    const int underlays = static_cast<int>(std::count(cats.begin(), cats.end(), Category::Underlay));
    const bool logo = std::count(cats.begin(), cats.end(), Category::Logo) > 0;
    const int G = cfg_.grid_columns;
    const double col = 1.0 / G;
    const double margin = cfg_.underlay_margin;
    const double gap = std::max(0.04, margin + 0.01);

    for (int attempt = 0; attempt < cfg_.max_retries; ++attempt) {
      const double h0 = uniform(0.045, 0.085);
      const int span = uniform_int(std::max(1, G / 2), G);
      const int start = uniform_int(0, G - span);
      std::vector<double> heights(static_cast<std::size_t>(texts), h0);
      std::vector<int> spans(static_cast<std::size_t>(texts), span);
      if (texts > 1) heights[0] = std::min(0.14, h0 * 1.5);
      for (int i = 1; i < texts; ++i) spans[static_cast<std::size_t>(i)] = std::max(1, span - uniform_int(0, 1));
      double stack_h = std::accumulate(heights.begin(), heights.end(), 0.0) + gap * (texts - 1);
      const double lo = kInset;
      const double hi = 1.0 - kInset - stack_h;
      if (hi < lo) continue;
      double y = uniform(lo, hi);
      const double x0 = start * col + kInset;

      Layout layout;
      bool ok = true;
      for (int i = 0; i < texts && ok; ++i) {
        const double w = spans[static_cast<std::size_t>(i)] * col - 2 * kInset;
        const double h = heights[static_cast<std::size_t>(i)];
        if (w <= 0) {
          ok = false;
          break;
        }
        const Box b = Box::from_corners(x0, y, x0 + w, y + h);
        ok = !touches_salient(inflate(b, margin), sal);
        layout.elements.push_back({Category::Text, b});
        y += h + gap;
      }
      if (!ok) continue;

      // underlays wrap randomly chosen texts
      std::vector<int> order(static_cast<std::size_t>(texts));
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng_);
      for (int u = 0; u < underlays; ++u) {
        const Box& t = layout.elements[static_cast<std::size_t>(order[static_cast<std::size_t>(u)])].box;
        layout.elements.push_back({Category::Underlay, inflate(t, margin)});
      }

      if (logo) {
        std::array<int, 4> corners = {0, 1, 2, 3};
        std::shuffle(corners.begin(), corners.end(), rng_);
        const double lw = uniform(0.1, 0.16);
        const double lh = uniform(0.06, 0.1);
        bool placed = false;
        for (int c : corners) {
          const double lx = (c & 1) ? 1.0 - kInset - lw : kInset;
          const double ly = (c & 2) ? 1.0 - kInset - lh : kInset;
          const Box b = Box::from_corners(lx, ly, lx + lw, ly + lh);
          if (touches_salient(b, sal)) continue;
          const bool clear = std::none_of(layout.elements.begin(), layout.elements.end(), [&](const Element& e) {
            return intersection_area(inflate(b, 0.02), e.box) > 0;
          });
          if (!clear) continue;
          layout.elements.push_back({Category::Logo, b});
          placed = true;
          break;
        }
        if (!placed) continue;
      }
      return layout;
    }
    return std::nullopt;
  }

  Raster paint_canvas(const Raster& sal) {
    const int res = cfg_.resolution;
    std::array<double, 3> top{}, bottom{}, product{};
    for (int c = 0; c < 3; ++c) {
      top[static_cast<std::size_t>(c)] = uniform(0.6, 0.95);
      bottom[static_cast<std::size_t>(c)] = uniform(0.6, 0.95);
      product[static_cast<std::size_t>(c)] = uniform(0.05, 0.6);
    }
    const double freq = uniform(4.0, 10.0);
    const double angle = uniform(0.0, 3.14159265358979);
    Raster canvas(res, res, 3);
    for (int y = 0; y < res; ++y) {
      for (int x = 0; x < res; ++x) {
        const double u = (x + 0.5) / res;
        const double v = (y + 0.5) / res;
        const double s = sal.at(x, y);
        const double stripe = 0.7 + 0.3 * std::sin(2 * 3.14159265358979 * freq * (u * std::cos(angle) + v * std::sin(angle)));
        for (int c = 0; c < 3; ++c) {
          const auto cc = static_cast<std::size_t>(c);
          const double bg = top[cc] + (bottom[cc] - top[cc]) * v;
          canvas.at(x, y, c) = quantize((1 - s) * bg + s * product[cc] * stripe);
        }
      }
    }
    return canvas;
  }

  const SynthConfig& cfg_;
  std::mt19937_64 rng_;
  std::vector<Blob> blobs_;
};

std::string sample_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06zu", index);
  return buf;
}

}  // namespace

SynthResult generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  SynthResult out;
  for (int i = 0; i < cfg.num_samples; ++i) {
    const auto stream = static_cast<std::uint64_t>(i);
    std::optional<PosterSample> sample;
    for (int attempt = 0; attempt < cfg.max_retries && !sample; ++attempt) {
      SampleBuilder builder(cfg, derive_seed(derive_seed(cfg.seed, stream), static_cast<std::uint64_t>(attempt)));
      sample = builder.build();
    }
    if (!sample) {
      ++out.skipped;
      continue;
    }
    sample->id = sample_id(static_cast<std::size_t>(i));
    out.samples.push_back(std::move(*sample));
  }
  if (out.skipped > 0) spdlog::warn("synth: skipped {} infeasible samples", out.skipped);
  return out;
}

void save_dataset(const std::filesystem::path& dir, const std::vector<PosterSample>& samples) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "canvas");
  fs::create_directories(dir / "saliency");
  fs::create_directories(dir / "layouts");
  std::ofstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw InvalidInput("cannot write manifest in " + dir.string());
  for (const auto& s : samples) {
    const std::string canvas = "canvas/" + s.id + ".png";
    const std::string saliency = "saliency/" + s.id + ".png";
    write_png(dir / canvas, s.canvas);
    write_png(dir / saliency, s.saliency);
    write_layout_file(dir / "layouts" / (s.id + ".json"), s.layout);
    nlohmann::json line = {
        {"id", s.id}, {"canvas", canvas}, {"saliency", saliency}, {"layout", layout_to_json(s.layout)}};
    manifest << line.dump() << '\n';
  }
}

std::filesystem::path manifest_path(const std::filesystem::path& dir_or_file) {
  if (std::filesystem::is_directory(dir_or_file)) return dir_or_file / "manifest.jsonl";
  return dir_or_file;
}

ManifestLoad load_manifest(const std::filesystem::path& path) {
  const auto file = manifest_path(path);
  std::ifstream in(file);
  if (!in) throw InvalidInput("manifest not found: " + file.string());
  const auto base = file.parent_path();
  ManifestLoad out;
  std::string line;
  for (std::size_t index = 0; std::getline(in, line); ++index) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& msg) { out.errors.push_back({index, msg}); };
    try {
      const auto j = nlohmann::json::parse(line);
      if (!j.is_object()) {
        fail("entry is not a JSON object");
        continue;
      }
      for (const char* key : {"canvas", "saliency"}) {
        if (!j.contains(key) || !j.at(key).is_string()) throw InvalidInput(std::string("missing string field '") + key + "'");
      }
      if (!j.contains("layout")) throw InvalidInput("missing field 'layout'");
      PosterSample s;
      const std::filesystem::path canvas_path = base / j.at("canvas").get<std::string>();
      const std::filesystem::path sal_path = base / j.at("saliency").get<std::string>();
      s.id = j.contains("id") && j.at("id").is_string() ? j.at("id").get<std::string>() : canvas_path.stem().string();
      if (!std::filesystem::exists(canvas_path)) throw InvalidInput("missing canvas PNG " + canvas_path.string());
      if (!std::filesystem::exists(sal_path)) throw InvalidInput("missing saliency PNG " + sal_path.string());
      s.canvas = read_png(canvas_path);
      s.saliency = read_png(sal_path);
      if (s.canvas.channels() != 3) throw InvalidInput("canvas must be RGB: " + canvas_path.string());
      if (s.saliency.channels() == 3) s.saliency = to_grayscale(s.saliency);
      if (s.canvas.width() != s.saliency.width() || s.canvas.height() != s.saliency.height()) {
        throw InvalidInput("canvas and saliency dimensions differ");
      }
      s.layout = layout_from_json(j.at("layout"));
      for (auto& e : s.layout.elements) e.box = clamp_to_canvas(e.box);
      out.samples.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("malformed JSON: ") + e.what());
    } catch (const std::exception& e) {
      fail(e.what());
    }
  }
  for (const auto& e : out.errors) spdlog::warn("manifest {} entry {}: {}", file.string(), e.line, e.message);
  return out;
}

Split split(std::size_t n, std::array<double, 3> fractions, std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0) || !std::isfinite(f)) throw InvalidInput("split: fractions must be finite and non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidInput("split: fractions must sum to 1");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = std::min(n, static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n))));
  const auto n_val =
      std::min(n - n_train, static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n))));
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train),
               idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
  return s;
}

}  // namespace iposter
