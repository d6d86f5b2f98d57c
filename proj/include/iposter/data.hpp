// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "iposter/canvas.hpp"
#include "iposter/layout.hpp"

namespace iposter {

struct PosterSample {
  std::string id;
  Raster canvas;    // 3 channels, content-free background
  Raster saliency;  // 1 channel
  Layout layout;    // ground truth
};

struct SynthConfig {
  int num_samples = 2000;
  int resolution = 64;
  int min_elements = 2;
  int max_elements = 6;
  std::array<double, 3> category_weights = {1.0, 2.0, 1.0};  // logo, text, underlay
  int min_blobs = 1;
  int max_blobs = 2;
  double min_blob_size = 0.25;  // fraction of canvas side
  double max_blob_size = 0.5;
  int grid_columns = 4;
  double underlay_margin = 0.03;
  int max_retries = 50;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthResult {
  std::vector<PosterSample> samples;
  int skipped = 0;
};

/// Deterministic per seed; sample i draws from its own derived stream.
SynthResult generate_synthetic(const SynthConfig& cfg);

/// Writes canvas/<id>.png, saliency/<id>.png, layouts/<id>.json and manifest.jsonl under `dir`.
void save_dataset(const std::filesystem::path& dir, const std::vector<PosterSample>& samples);

struct ManifestError {
  std::size_t line = 0;  // 0-based entry index
  std::string message;
};

struct ManifestLoad {
  std::vector<PosterSample> samples;
  std::vector<ManifestError> errors;
};

/// JSON lines of {"id"?, "canvas": path, "saliency": path, "layout": {...}}, paths relative to the
/// manifest directory. Malformed entries are reported and skipped; a missing manifest throws.
ManifestLoad load_manifest(const std::filesystem::path& path);

/// Accepts a dataset directory (containing manifest.jsonl) or a manifest path.
std::filesystem::path manifest_path(const std::filesystem::path& dir_or_file);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Seeded shuffle of 0..n-1 cut by `fractions` (train, val, test), which must sum to 1.
Split split(std::size_t n, std::array<double, 3> fractions, std::uint64_t seed);

}  // namespace iposter
