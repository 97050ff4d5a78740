#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace reg23 {

/// 2D detector-plane scalar grid (line-integral units), row-major, x fastest.
struct Image {
  int w = 0, h = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w_, int h_, double fill = 0.0) : w(w_), h(h_), data((size_t)w_ * h_, fill) {}

  double& at(int x, int y) { return data[(size_t)y * w + x]; }
  double at(int x, int y) const { return data[(size_t)y * w + x]; }
  size_t size() const { return data.size(); }
  bool same_dims(const Image& o) const { return w == o.w && h == o.h; }
};

/// Binary detector-plane mask.
struct MaskImage {
  int w = 0, h = 0;
  std::vector<uint8_t> data;

  MaskImage() = default;
  MaskImage(int w_, int h_, uint8_t fill = 0) : w(w_), h(h_), data((size_t)w_ * h_, fill) {}

  uint8_t& at(int x, int y) { return data[(size_t)y * w + x]; }
  uint8_t at(int x, int y) const { return data[(size_t)y * w + x]; }
  size_t count() const;
};

struct RgbImage {
  int w = 0, h = 0;
  std::vector<uint8_t> data;  // interleaved rgb

  RgbImage() = default;
  RgbImage(int w_, int h_) : w(w_), h(h_), data((size_t)w_ * h_ * 3, 0) {}
};

/// Two-channel fusion: fixed in red, moving in green, both min-max normalized.
RgbImage overlay(const Image& fixed, const Image& moving);

// 16-bit binary PGM, min-max normalized (constant image maps to all zeros).
void save_pgm16(const Image& img, const std::string& path);

// Raw f32 little-endian payload with a text header: "dims=w h" (.ih / .iraw).
void save_image_raw(const Image& img, const std::string& header_path);
Image load_image_raw(const std::string& header_path);

// 8-bit binary PPM.
void save_ppm8(const RgbImage& img, const std::string& path);

}  // namespace reg23
