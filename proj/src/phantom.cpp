#include "reg23/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "reg23/errors.hpp"

namespace reg23 {

std::pair<Volume, VoxelMask> make_phantom(const PhantomSpec& spec) {
  if (spec.n_vertebrae < 1) throw GeometryOverflow("n_vertebrae must be >= 1");
  if (spec.nx < 1 || spec.ny < 1 || spec.nz < 1 || !(spec.spacing_mm > 0))
    throw GeometryOverflow("invalid grid");
  if (!(spec.body_radius_mm > 0) || !(spec.body_height_mm > 0) ||
      !(spec.gap_mm > 0) || !(spec.process_size_mm > 0))
    throw GeometryOverflow("geometric fields must be positive");

  const double s = spec.spacing_mm;
  const double hx = 0.5 * spec.nx * s;  // half extents, mm
  const double hy = 0.5 * spec.ny * s;
  const double hz = 0.5 * spec.nz * s;

  const double stack = spec.n_vertebrae * spec.body_height_mm +
                       (spec.n_vertebrae - 1) * spec.gap_mm;
  const double y_body = -0.1 * hy;  // body sits slightly off-center; the
                                    // process box extends toward +y
  const double y_proc_far = y_body + spec.body_radius_mm + spec.process_size_mm;
  if (stack > 2 * hz) throw GeometryOverflow("vertebra stack exceeds grid z extent");
  if (spec.body_radius_mm > hx || y_body - spec.body_radius_mm < -hy ||
      y_proc_far > hy || 0.5 * spec.process_size_mm > hx)
    throw GeometryOverflow("vertebra cross-section exceeds grid extent");

  Volume vol(spec.nx, spec.ny, spec.nz, s, s, s);
  // Center the grid on the world origin of its own frame.
  vol.ox = -0.5 * (spec.nx - 1) * s;
  vol.oy = -0.5 * (spec.ny - 1) * s;
  vol.oz = -0.5 * (spec.nz - 1) * s;
  VoxelMask mask(vol);

  const double ax = 0.85 * hx;  // soft-tissue ellipse semi-axes
  const double ay = 0.85 * hy;
  const double r2 = spec.body_radius_mm * spec.body_radius_mm;
  const double hh = 0.5 * spec.body_height_mm;
  const double hp = 0.5 * spec.process_size_mm;
  const double y_proc = y_body + spec.body_radius_mm + hp;

  for (int iz = 0; iz < spec.nz; ++iz) {
    const double z = vol.oz + iz * s;
    for (int iy = 0; iy < spec.ny; ++iy) {
      const double y = vol.oy + iy * s;
      for (int ix = 0; ix < spec.nx; ++ix) {
        const double x = vol.ox + ix * s;
        bool bone = false;
        for (int k = 0; k < spec.n_vertebrae && !bone; ++k) {
          const double zc = -0.5 * stack + hh + k * (spec.body_height_mm + spec.gap_mm);
          const double dy = y - y_body;
          const bool in_body = std::abs(z - zc) <= hh && x * x + dy * dy <= r2;
          const bool in_proc = std::abs(z - zc) <= hp && std::abs(x) <= hp &&
                               std::abs(y - y_proc) <= hp;
          bone = in_body || in_proc;
        }
        if (bone) {
          mask.at(ix, iy, iz) = 1;
          vol.at(ix, iy, iz) = spec.bone_intensity;
        } else if ((x / ax) * (x / ax) + (y / ay) * (y / ay) <= 1.0) {
          vol.at(ix, iy, iz) = spec.tissue_intensity;
        }
      }
    }
  }

  if (spec.noise_sigma > 0) {
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (double& v : vol.data) v = std::max(0.0, v + noise(rng));
  }
  return {std::move(vol), std::move(mask)};
}

}  // namespace reg23
