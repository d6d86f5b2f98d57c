// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#include "iposter/canvas.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

namespace iposter {

Raster::Raster(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 0 || height < 0 || channels < 1) throw InvalidInput("raster: invalid dimensions");
  data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Raster::Raster(int width, int height, int channels, std::vector<float> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  if (width < 0 || height < 0 || channels < 1) throw InvalidInput("raster: invalid dimensions");
  if (data_.size() != static_cast<std::size_t>(width) * height * channels) {
    throw InvalidInput("raster: data length does not match width*height*channels");
  }
  for (float v : data_) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) throw InvalidInput("raster: values must lie in [0,1]");
  }
}

Raster compose_four_channel(const Raster& canvas, const Raster& saliency) {
  if (canvas.channels() != 3 || saliency.channels() != 1) {
    throw InvalidInput("compose_four_channel: expected 3-channel canvas and 1-channel saliency");
  }
  if (canvas.width() != saliency.width() || canvas.height() != saliency.height()) {
    throw InvalidInput("compose_four_channel: canvas and saliency sizes differ");
  }
  Raster out(canvas.width(), canvas.height(), 4);
  for (int y = 0; y < canvas.height(); ++y) {
    for (int x = 0; x < canvas.width(); ++x) {
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = canvas.at(x, y, c);
      out.at(x, y, 3) = saliency.at(x, y);
    }
  }
  return out;
}

std::optional<Box> extract_salbox(const Raster& saliency, float threshold) {
  if (saliency.channels() != 1) throw InvalidInput("extract_salbox: expected a 1-channel map");
  int x0 = saliency.width(), y0 = saliency.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < saliency.height(); ++y) {
    for (int x = 0; x < saliency.width(); ++x) {
      if (saliency.at(x, y) >= threshold) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
    }
  }
  if (x1 < 0) return std::nullopt;
  const double w = saliency.width();
  const double h = saliency.height();
  return Box::from_corners(x0 / w, y0 / h, (x1 + 1) / w, (y1 + 1) / h);
}

PatchGrid patchify(const Raster& image, int patch_size) {
  if (patch_size < 1 || image.width() % patch_size != 0 || image.height() % patch_size != 0) {
    throw InvalidInput("patchify: image dimensions must be divisible by the patch size");
  }
  PatchGrid grid;
  grid.rows = image.height() / patch_size;
  grid.cols = image.width() / patch_size;
  grid.patch_size = patch_size;
  grid.channels = image.channels();
  const int len = patch_size * patch_size * image.channels();
  grid.patches.resize(grid.count(), len);
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const int row = r * grid.cols + c;
      int k = 0;
      for (int py = 0; py < patch_size; ++py) {
        for (int px = 0; px < patch_size; ++px) {
          for (int ch = 0; ch < image.channels(); ++ch) {
            grid.patches(row, k++) = image.at(c * patch_size + px, r * patch_size + py, ch);
          }
        }
      }
    }
  }
  return grid;
}

Raster unpatchify(const PatchGrid& grid) {
  const int p = grid.patch_size;
  if (grid.patches.rows() != grid.count() || grid.patches.cols() != p * p * grid.channels) {
    throw InvalidInput("unpatchify: patch matrix does not match grid geometry");
  }
  Raster image(grid.cols * p, grid.rows * p, grid.channels);
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const int row = r * grid.cols + c;
      int k = 0;
      for (int py = 0; py < p; ++py) {
        for (int px = 0; px < p; ++px) {
          for (int ch = 0; ch < grid.channels; ++ch) image.at(c * p + px, r * p + py, ch) = grid.patches(row, k++);
        }
      }
    }
  }
  return image;
}

Raster resize(const Raster& image, int width, int height) {
  if (width < 1 || height < 1) throw InvalidInput("resize: target size must be positive");
  if (width == image.width() && height == image.height()) return image;
  Raster out(width, height, image.channels());
  const bool integer_down = image.width() % width == 0 && image.height() % height == 0;
  if (integer_down) {
    const int fx = image.width() / width;
    const int fy = image.height() / height;
    const float norm = 1.0f / static_cast<float>(fx * fy);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        for (int c = 0; c < image.channels(); ++c) {
          float acc = 0.0f;
          for (int dy = 0; dy < fy; ++dy) {
            for (int dx = 0; dx < fx; ++dx) acc += image.at(x * fx + dx, y * fy + dy, c);
          }
          out.at(x, y, c) = std::clamp(acc * norm, 0.0f, 1.0f);
        }
      }
    }
    return out;
  }
  const float sx = static_cast<float>(image.width()) / width;
  const float sy = static_cast<float>(image.height()) / height;
  for (int y = 0; y < height; ++y) {
    const float fy = std::clamp((y + 0.5f) * sy - 0.5f, 0.0f, static_cast<float>(image.height() - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height() - 1);
    const float ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      const float fx = std::clamp((x + 0.5f) * sx - 0.5f, 0.0f, static_cast<float>(image.width() - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width() - 1);
      const float tx = fx - x0;
      for (int c = 0; c < image.channels(); ++c) {
        const float top = image.at(x0, y0, c) * (1 - tx) + image.at(x1, y0, c) * tx;
        const float bot = image.at(x0, y1, c) * (1 - tx) + image.at(x1, y1, c) * tx;
        out.at(x, y, c) = std::clamp(top * (1 - ty) + bot * ty, 0.0f, 1.0f);
      }
    }
  }
  return out;
}

Raster to_grayscale(const Raster& rgb) {
  if (rgb.channels() != 3) throw InvalidInput("to_grayscale: expected a 3-channel raster");
  Raster gray(rgb.width(), rgb.height(), 1);
  for (int y = 0; y < rgb.height(); ++y) {
    for (int x = 0; x < rgb.width(); ++x) {
      const float v = 0.299f * rgb.at(x, y, 0) + 0.587f * rgb.at(x, y, 1) + 0.114f * rgb.at(x, y, 2);
      gray.at(x, y) = std::clamp(v, 0.0f, 1.0f);
    }
  }
  return gray;
}

namespace {

Raster from_png_image(png_image& image, const std::vector<std::uint8_t>& buffer) {
  const int channels = PNG_IMAGE_SAMPLE_CHANNELS(image.format);
  std::vector<float> data(buffer.size());
  std::transform(buffer.begin(), buffer.end(), data.begin(),
                 [](std::uint8_t v) { return static_cast<float>(v) / 255.0f; });
  return Raster(static_cast<int>(image.width), static_cast<int>(image.height), channels, std::move(data));
}

void prepare_read(png_image& image) {
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
}

}  // namespace

Raster decode_png(std::span<const std::uint8_t> bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw InvalidInput(std::string("png decode: ") + image.message);
  }
  prepare_read(image);
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw InvalidInput(std::string("png decode: ") + image.message);
  }
  return from_png_image(image, buffer);
}

Raster read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open PNG: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_png(bytes);
  } catch (const InvalidInput& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_png(const Raster& raster) {
  if (raster.channels() != 1 && raster.channels() != 3 && raster.channels() != 4) {
    throw InvalidInput("png encode: supports 1, 3 or 4 channels");
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(raster.width());
  image.height = static_cast<png_uint_32>(raster.height());
  image.format = raster.channels() == 1 ? PNG_FORMAT_GRAY : raster.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> pixels(raster.data().size());
  std::transform(raster.data().begin(), raster.data().end(), pixels.begin(), [](float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  });
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
    throw InvalidInput(std::string("png encode: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels.data(), 0, nullptr)) {
    throw InvalidInput(std::string("png encode: ") + image.message);
  }
  out.resize(size);
  return out;
}

void write_png(const std::filesystem::path& path, const Raster& image) {
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write PNG: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace iposter
