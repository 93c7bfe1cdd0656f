#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hires {

// H x W x C raster, values in [0, 1], row-major. C is 1 or 3.
struct ImageBuffer {
  int64_t height = 0;
  int64_t width = 0;
  int64_t channels = 0;
  std::vector<float> data;

  ImageBuffer() = default;
  ImageBuffer(int64_t h, int64_t w, int64_t c, float fill_value = 0.0f);

  float& at(int64_t y, int64_t x, int64_t c) {
    return data[static_cast<size_t>((y * width + x) * channels + c)];
  }
  float at(int64_t y, int64_t x, int64_t c) const {
    return data[static_cast<size_t>((y * width + x) * channels + c)];
  }

  bool same_pixels(const ImageBuffer& other) const;
};

// Bilinear resize with half-pixel-center sampling (same convention as the
// tensor kernel).
ImageBuffer resize_image(const ImageBuffer& img, int64_t h2, int64_t w2);

// Binary PPM (P6) for 3 channels, PGM (P5) for 1 channel, maxval 255.
// Values are quantized with round(v * 255).
std::string encode_pnm(const ImageBuffer& img);
ImageBuffer decode_pnm(const std::string& bytes);
void write_pnm(const std::string& path, const ImageBuffer& img);
ImageBuffer read_pnm(const std::string& path);

}  // namespace hires
