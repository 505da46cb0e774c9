#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace t4d {

// Row-major RGB image, values nominally in [0,1], row 0 at the top.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> px;  // 3 * width * height

  Image() = default;
  Image(int w, int h) : width(w), height(h), px(static_cast<std::size_t>(3) * w * h, 0.0) {}

  double* at(int x, int y) { return px.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
  const double* at(int x, int y) const {
    return px.data() + 3 * (static_cast<std::size_t>(y) * width + x);
  }
};

// PNG: 8-bit RGB, values clamped to [0,1] and quantized by round(v*255).
void save_png(const Image& img, const std::string& path);
Image load_png(const std::string& path);

// PFM: float32 color, little-endian (negative scale), bottom row first.
void save_pfm(const Image& img, const std::string& path);
Image load_pfm(const std::string& path);

// Convenience: dispatch on extension (.png or .pfm).
Image load_image(const std::string& path);

// 10*log10(1/mse) over all channels with a [0,1] signal range; +inf when the
// images are identical. Throws Error("image.mismatch") on size mismatch.
double psnr(const Image& a, const Image& b);

std::vector<std::uint8_t> encode_png(const Image& img);

}  // namespace t4d
