#include "reg23/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "reg23/errors.hpp"

namespace reg23 {

namespace {

std::pair<double, double> min_max(const Image& img) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : img.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return {lo, hi};
}

// normalized to [0,1]; constant input maps to 0
double norm_value(double v, double lo, double hi) {
  return hi > lo ? (v - lo) / (hi - lo) : 0.0;
}

std::string payload_path(const std::string& header_path, const char* ext) {
  const auto dot = header_path.find_last_of('.');
  const std::string stem =
      dot == std::string::npos ? header_path : header_path.substr(0, dot);
  return stem + ext;
}

void write_f32le(std::ofstream& os, const std::vector<double>& values) {
  std::vector<float> buf(values.size());
  for (size_t i = 0; i < values.size(); ++i) buf[i] = (float)values[i];
  os.write(reinterpret_cast<const char*>(buf.data()),
           (std::streamsize)(buf.size() * sizeof(float)));
}

}  // namespace

size_t MaskImage::count() const {
  size_t n = 0;
  for (uint8_t v : data) n += v ? 1 : 0;
  return n;
}

RgbImage overlay(const Image& fixed, const Image& moving) {
  if (!fixed.same_dims(moving))
    throw DimMismatch("overlay: fixed and moving image dims differ");
  const auto [flo, fhi] = min_max(fixed);
  const auto [mlo, mhi] = min_max(moving);
  RgbImage out(fixed.w, fixed.h);
  for (size_t i = 0; i < fixed.size(); ++i) {
    out.data[3 * i + 0] = (uint8_t)std::lround(255.0 * norm_value(fixed.data[i], flo, fhi));
    out.data[3 * i + 1] = (uint8_t)std::lround(255.0 * norm_value(moving.data[i], mlo, mhi));
  }
  return out;
}

void save_pgm16(const Image& img, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "P5\n" << img.w << " " << img.h << "\n65535\n";
  const auto [lo, hi] = min_max(img);
  std::vector<uint8_t> buf(img.size() * 2);
  for (size_t i = 0; i < img.size(); ++i) {
    const auto v = (uint16_t)std::lround(65535.0 * norm_value(img.data[i], lo, hi));
    buf[2 * i] = (uint8_t)(v >> 8);  // PGM 16-bit is big-endian
    buf[2 * i + 1] = (uint8_t)(v & 0xff);
  }
  os.write(reinterpret_cast<const char*>(buf.data()), (std::streamsize)buf.size());
  if (!os) throw IoError("write failed: " + path);
}

void save_image_raw(const Image& img, const std::string& header_path) {
  std::ofstream hs(header_path);
  if (!hs) throw IoError("cannot open for writing: " + header_path);
  hs << "dims=" << img.w << " " << img.h << "\n";
  if (!hs) throw IoError("write failed: " + header_path);
  const std::string raw = payload_path(header_path, ".iraw");
  std::ofstream os(raw, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + raw);
  write_f32le(os, img.data);
  if (!os) throw IoError("write failed: " + raw);
}

Image load_image_raw(const std::string& header_path) {
  std::ifstream hs(header_path);
  if (!hs) throw IoError("cannot open: " + header_path);
  std::string line;
  if (!std::getline(hs, line)) throw MalformedHeader("empty header: " + header_path);
  int w = 0, h = 0;
  if (std::sscanf(line.c_str(), "dims=%d %d", &w, &h) != 2 || w < 1 || h < 1)
    throw MalformedHeader("bad dims line: " + line);
  const std::string raw = payload_path(header_path, ".iraw");
  std::ifstream os(raw, std::ios::binary | std::ios::ate);
  if (!os) throw IoError("cannot open: " + raw);
  const auto bytes = (size_t)os.tellg();
  if (bytes != (size_t)w * h * sizeof(float))
    throw SizeMismatch("payload size does not match header dims: " + raw);
  os.seekg(0);
  std::vector<float> buf((size_t)w * h);
  os.read(reinterpret_cast<char*>(buf.data()), (std::streamsize)bytes);
  if (!os) throw IoError("read failed: " + raw);
  Image img(w, h);
  for (size_t i = 0; i < buf.size(); ++i) img.data[i] = buf[i];
  return img;
}

void save_ppm8(const RgbImage& img, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "P6\n" << img.w << " " << img.h << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.data.data()), (std::streamsize)img.data.size());
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace reg23
