// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "iposter/errors.hpp"
#include "iposter/geometry.hpp"

namespace iposter {

/// Row-major, channel-interleaved image with values in [0,1].
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, int channels, float fill = 0.0f);
  Raster(int width, int height, int channels, std::vector<float> data);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }

  float& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  float at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  bool operator==(const Raster&) const = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

/// Flattened non-overlapping patches, one row per patch in row-major grid order.
/// Each row holds (py, px, channel) in row-major order.
struct PatchGrid {
  int rows = 0;
  int cols = 0;
  int patch_size = 0;
  int channels = 0;
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> patches;

  int count() const { return rows * cols; }
};

/// Default saliency threshold on [0,1] maps.
inline constexpr float kSaliencyThreshold = 0.5f;

/// Channels 0-2 from the canvas, channel 3 from the saliency map.
Raster compose_four_channel(const Raster& canvas, const Raster& saliency);

/// Tight normalized box around every pixel at or above `threshold`; nullopt if none pass.
std::optional<Box> extract_salbox(const Raster& saliency, float threshold = kSaliencyThreshold);

/// Conditioning box used when the saliency map has no region above threshold.
inline Box empty_salbox() { return {0.5, 0.5, 0.0, 0.0}; }

PatchGrid patchify(const Raster& image, int patch_size);
Raster unpatchify(const PatchGrid& grid);

/// Area-averaging resize (exact for integer downscale factors), bilinear otherwise.
Raster resize(const Raster& image, int width, int height);

/// Luminance (Rec. 601) of a 3-channel raster.
Raster to_grayscale(const Raster& rgb);

/// 8-bit PNG I/O. Gray PNGs load as 1 channel, RGB as 3 (alpha dropped).
Raster read_png(const std::filesystem::path& path);
Raster decode_png(std::span<const std::uint8_t> bytes);
void write_png(const std::filesystem::path& path, const Raster& image);
std::vector<std::uint8_t> encode_png(const Raster& image);

}  // namespace iposter
