#include "reg23/volume.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "reg23/errors.hpp"

namespace reg23 {

namespace {

std::string payload_path(const std::string& header_path) {
  const auto dot = header_path.find_last_of('.');
  const std::string stem =
      dot == std::string::npos ? header_path : header_path.substr(0, dot);
  return stem + ".vraw";
}

void format_triple(char* buf, size_t n, const char* key, double a, double b, double c) {
  std::snprintf(buf, n, "%s=%.17g %.17g %.17g", key, a, b, c);
}

}  // namespace

size_t VoxelMask::count() const {
  size_t n = 0;
  for (uint8_t v : data) n += v ? 1 : 0;
  return n;
}

void require_same_grid(const Volume& v, const VoxelMask& m) {
  if (!m.same_grid(v))
    throw ShapeMismatch("volume and mask grids differ");
}

void save_volume(const Volume& v, const std::string& header_path) {
  std::ofstream hs(header_path);
  if (!hs) throw IoError("cannot open for writing: " + header_path);
  char line[128];
  hs << "dims=" << v.nx << " " << v.ny << " " << v.nz << "\n";
  format_triple(line, sizeof line, "spacing", v.sx, v.sy, v.sz);
  hs << line << "\n";
  format_triple(line, sizeof line, "origin", v.ox, v.oy, v.oz);
  hs << line << "\n";
  hs << "dtype=f32le\n";
  if (!hs) throw IoError("write failed: " + header_path);

  const std::string raw = payload_path(header_path);
  std::ofstream os(raw, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + raw);
  std::vector<float> buf(v.size());
  for (size_t i = 0; i < v.size(); ++i) buf[i] = (float)v.data[i];
  os.write(reinterpret_cast<const char*>(buf.data()),
           (std::streamsize)(buf.size() * sizeof(float)));
  if (!os) throw IoError("write failed: " + raw);
}

Volume load_volume(const std::string& header_path) {
  std::ifstream hs(header_path);
  if (!hs) throw IoError("cannot open: " + header_path);

  Volume v;
  bool got_dims = false, got_spacing = false, got_origin = false, got_dtype = false;
  std::string line;
  while (std::getline(hs, line)) {
    if (line.empty()) continue;
    if (std::sscanf(line.c_str(), "dims=%d %d %d", &v.nx, &v.ny, &v.nz) == 3) {
      got_dims = true;
    } else if (std::sscanf(line.c_str(), "spacing=%lf %lf %lf", &v.sx, &v.sy, &v.sz) == 3) {
      got_spacing = true;
    } else if (std::sscanf(line.c_str(), "origin=%lf %lf %lf", &v.ox, &v.oy, &v.oz) == 3) {
      got_origin = true;
    } else if (line == "dtype=f32le") {
      got_dtype = true;
    } else {
      throw MalformedHeader("unrecognized header line: " + line);
    }
  }
  if (!got_dims || !got_spacing || !got_origin || !got_dtype)
    throw MalformedHeader("missing header fields in " + header_path);
  if (v.nx < 1 || v.ny < 1 || v.nz < 1)
    throw MalformedHeader("dims must be >= 1");
  if (!(v.sx > 0) || !(v.sy > 0) || !(v.sz > 0) ||
      !std::isfinite(v.sx) || !std::isfinite(v.sy) || !std::isfinite(v.sz))
    throw MalformedHeader("spacing must be positive and finite");
  if (!std::isfinite(v.ox) || !std::isfinite(v.oy) || !std::isfinite(v.oz))
    throw MalformedHeader("origin must be finite");

  const std::string raw = payload_path(header_path);
  std::ifstream os(raw, std::ios::binary | std::ios::ate);
  if (!os) throw IoError("cannot open: " + raw);
  const auto bytes = (size_t)os.tellg();
  const size_t expected = (size_t)v.nx * v.ny * v.nz * sizeof(float);
  if (bytes != expected)
    throw SizeMismatch("payload has " + std::to_string(bytes) + " bytes, header implies " +
                       std::to_string(expected));
  os.seekg(0);
  std::vector<float> buf((size_t)v.nx * v.ny * v.nz);
  os.read(reinterpret_cast<char*>(buf.data()), (std::streamsize)bytes);
  if (!os) throw IoError("read failed: " + raw);
  v.data.resize(buf.size());
  for (size_t i = 0; i < buf.size(); ++i) v.data[i] = buf[i];
  return v;
}

VoxelMask threshold_mask(const Volume& v, double tau) {
  VoxelMask m(v);
  for (size_t i = 0; i < v.size(); ++i) m.data[i] = v.data[i] >= tau ? 1 : 0;
  return m;
}

Volume downsample_volume(const Volume& v, int factor) {
  if (factor < 1) throw IndivisibleDims("factor must be >= 1");
  if (v.nx % factor || v.ny % factor || v.nz % factor)
    throw IndivisibleDims("factor " + std::to_string(factor) +
                          " does not divide volume dims");
  if (factor == 1) return v;

  Volume out(v.nx / factor, v.ny / factor, v.nz / factor,
             v.sx * factor, v.sy * factor, v.sz * factor);
  // New voxel (0,0,0) center sits at the centroid of its source block.
  out.ox = v.ox + 0.5 * (factor - 1) * v.sx;
  out.oy = v.oy + 0.5 * (factor - 1) * v.sy;
  out.oz = v.oz + 0.5 * (factor - 1) * v.sz;

  const double inv = 1.0 / ((double)factor * factor * factor);
  for (int z = 0; z < out.nz; ++z)
    for (int y = 0; y < out.ny; ++y)
      for (int x = 0; x < out.nx; ++x) {
        double s = 0;
        for (int dz = 0; dz < factor; ++dz)
          for (int dy = 0; dy < factor; ++dy)
            for (int dx = 0; dx < factor; ++dx)
              s += v.at(x * factor + dx, y * factor + dy, z * factor + dz);
        out.at(x, y, z) = s * inv;
      }
  return out;
}

}  // namespace reg23
