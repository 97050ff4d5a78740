#pragma once

#include <cstdint>
#include <utility>

#include "reg23/volume.hpp"

namespace reg23 {

/// Procedural lumbar-like phantom: a stack of cylinder+box "vertebrae" of
/// high intensity inside a soft-tissue ellipse, on a dark background.
struct PhantomSpec {
  int nx = 64, ny = 64, nz = 64;
  double spacing_mm = 2.0;

  int n_vertebrae = 4;
  double body_radius_mm = 16.0;
  double body_height_mm = 18.0;
  double gap_mm = 6.0;
  double process_size_mm = 10.0;

  double bone_intensity = 1.0;
  double tissue_intensity = 0.1;
  double noise_sigma = 0.0;
  uint64_t seed = 1;
};

/// Deterministic for a fixed seed; the mask marks vertebra voxels before
/// noise. Throws GeometryOverflow when the anatomy does not fit the grid.
std::pair<Volume, VoxelMask> make_phantom(const PhantomSpec& spec);

}  // namespace reg23
