#pragma once

#include <functional>
#include <utility>

#include "reg23/image.hpp"
#include "reg23/pose.hpp"
#include "reg23/volume.hpp"

namespace reg23 {

/// C-arm pinhole geometry.
///
/// World frame: the isocenter is the origin; the source sits at
/// (+siso_mm, 0, 0) and the beam runs toward -x. The detector plane is
/// x = siso_mm - sdd_mm with pixel (i, j) centered at
/// y = (i - (w-1)/2) * px_spacing_mm, z = (j - (h-1)/2) * px_spacing_mm.
/// A volume is placed with its grid center at the isocenter under the
/// identity pose; a pose maps volume-centered points q to R*q + t.
struct Intrinsics {
  double sdd_mm = 1011.7;      // source-to-detector distance
  double siso_mm = 600.0;      // source-to-isocenter distance
  int det_w = 256, det_h = 256;
  double px_spacing_mm = 0.79836;
  double step_mm = 1.0;        // ray-integration step

  void validate() const;  // throws Error on invariant violation

  /// Conventional step for a volume: half its smallest voxel spacing.
  static double default_step(const Volume& v);
};

int projector_threads();
void set_projector_threads(int n);

/// Ray-cast line integrals of the posed volume (trilinear interpolation,
/// fixed-step midpoint sampling scaled by step length).
Image project(const Volume& volume, const Pose& pose, const Intrinsics& k);

/// Binary projection of a voxel mask: pixel = 1 iff the integrated mask
/// value exceeds tau (default: any strictly positive integral).
MaskImage project_mask(const VoxelMask& mask, const Pose& pose, const Intrinsics& k,
                       double tau = 0.0);

/// Central finite differences of a scalar pose functional; 12 evaluations.
/// Rotation components use h_rot_deg, translation components h_trans_mm.
GradVec fd_pose_grad(const std::function<double(const Pose&)>& f, const Pose& theta,
                     double h_rot_deg, double h_trans_mm);

/// Pinhole projection of a world point onto the detector plane, in detector
/// coordinates (u, v) in mm. Throws OffDetector for points at or behind the
/// source plane.
std::pair<double, double> project_world_point(const Vec3& p, const Intrinsics& k);

}  // namespace reg23
