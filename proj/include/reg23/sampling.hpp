#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "reg23/phantom.hpp"
#include "reg23/pose.hpp"
#include "reg23/volume.hpp"

namespace reg23 {

/// Zero-mean normal pose distribution; sigmas per axis in degrees / mm.
struct PoseDistribution {
  Vec3 rot_sigma_deg{20, 20, 20};
  Vec3 trans_sigma_mm{100, 30, 15};

  static PoseDistribution isotropic(double rot_deg, double trans_mm) {
    return {{rot_deg, rot_deg, rot_deg}, {trans_mm, trans_mm, trans_mm}};
  }
};

Pose sample_pose(const PoseDistribution& dist, std::mt19937_64& rng);

/// Draws the pose pair (theta, theta_target) independently.
std::pair<Pose, Pose> sample_pose_pair(const PoseDistribution& dist,
                                       std::mt19937_64& rng);

/// Mixes a base seed with a stream index into an independent RNG seed.
uint64_t mix_seed(uint64_t seed, uint64_t stream);

/// Volumes (with masks) used as the training population.
struct TrainingSet {
  std::vector<Volume> volumes;
  std::vector<VoxelMask> masks;

  static TrainingSet from_phantoms(const std::vector<PhantomSpec>& specs);
  size_t size() const { return volumes.size(); }
};

}  // namespace reg23
