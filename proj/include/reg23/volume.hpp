#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reg23/pose.hpp"

namespace reg23 {

/// 3D scalar grid with physical spacing. `origin` is the world position of
/// the center of voxel (0,0,0); data is x-fastest. Serialized as f32.
struct Volume {
  int nx = 0, ny = 0, nz = 0;
  double sx = 1, sy = 1, sz = 1;   // mm/voxel
  double ox = 0, oy = 0, oz = 0;   // mm
  std::vector<double> data;

  Volume() = default;
  Volume(int nx_, int ny_, int nz_, double sx_, double sy_, double sz_)
      : nx(nx_), ny(ny_), nz(nz_), sx(sx_), sy(sy_), sz(sz_),
        data((size_t)nx_ * ny_ * nz_, 0.0) {}

  size_t index(int ix, int iy, int iz) const {
    return ((size_t)iz * ny + iy) * nx + ix;
  }
  double& at(int ix, int iy, int iz) { return data[index(ix, iy, iz)]; }
  double at(int ix, int iy, int iz) const { return data[index(ix, iy, iz)]; }
  size_t size() const { return data.size(); }

  /// Center of the voxel grid in world coordinates.
  Vec3 center() const {
    return {ox + 0.5 * (nx - 1) * sx, oy + 0.5 * (ny - 1) * sy,
            oz + 0.5 * (nz - 1) * sz};
  }
  /// Physical extent (outer voxel edges) along each axis, mm.
  Vec3 extent() const { return {nx * sx, ny * sy, nz * sz}; }

  bool same_grid(const Volume& o) const {
    return nx == o.nx && ny == o.ny && nz == o.nz && sx == o.sx && sy == o.sy &&
           sz == o.sz && ox == o.ox && oy == o.oy && oz == o.oz;
  }
};

/// Binary companion mask on the same grid as its Volume.
struct VoxelMask {
  int nx = 0, ny = 0, nz = 0;
  double sx = 1, sy = 1, sz = 1;
  double ox = 0, oy = 0, oz = 0;
  std::vector<uint8_t> data;

  VoxelMask() = default;
  explicit VoxelMask(const Volume& grid)
      : nx(grid.nx), ny(grid.ny), nz(grid.nz), sx(grid.sx), sy(grid.sy),
        sz(grid.sz), ox(grid.ox), oy(grid.oy), oz(grid.oz),
        data(grid.size(), 0) {}

  size_t index(int ix, int iy, int iz) const {
    return ((size_t)iz * ny + iy) * nx + ix;
  }
  uint8_t& at(int ix, int iy, int iz) { return data[index(ix, iy, iz)]; }
  uint8_t at(int ix, int iy, int iz) const { return data[index(ix, iy, iz)]; }
  size_t count() const;

  bool same_grid(const Volume& v) const {
    return nx == v.nx && ny == v.ny && nz == v.nz && sx == v.sx && sy == v.sy &&
           sz == v.sz && ox == v.ox && oy == v.oy && oz == v.oz;
  }
};

/// Throws ShapeMismatch unless mask and volume share the exact grid.
void require_same_grid(const Volume& v, const VoxelMask& m);

// File pair: text header (.vh) with dims/spacing/origin/dtype lines plus a
// .vraw payload of little-endian f32, x-fastest. Load->save is bit-exact.
void save_volume(const Volume& v, const std::string& header_path);
Volume load_volume(const std::string& header_path);

/// mask = 1 where intensity >= tau.
VoxelMask threshold_mask(const Volume& v, double tau);

/// Block-mean pooling by an integer factor; spacing scales, integral preserved.
Volume downsample_volume(const Volume& v, int factor);

}  // namespace reg23
