#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>

namespace reg23 {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  double& operator[](int i) { return (&x)[i]; }
  double operator[](int i) const { return (&x)[i]; }

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
};

/// Six rigid-body parameters: Euler angles in degrees, translations in mm.
struct Pose {
  double rx_deg = 0, ry_deg = 0, rz_deg = 0;
  double tx_mm = 0, ty_mm = 0, tz_mm = 0;

  Pose() = default;
  Pose(double rx, double ry, double rz, double tx, double ty, double tz)
      : rx_deg(rx), ry_deg(ry), rz_deg(rz), tx_mm(tx), ty_mm(ty), tz_mm(tz) {}

  double& operator[](int i) { return (&rx_deg)[i]; }
  double operator[](int i) const { return (&rx_deg)[i]; }

  Vec3 rotation() const { return {rx_deg, ry_deg, rz_deg}; }
  Vec3 translation() const { return {tx_mm, ty_mm, tz_mm}; }

  bool finite() const;
};

/// 4x4 homogeneous transform, row-major, bottom row (0,0,0,1).
struct Mat4 {
  std::array<double, 16> m{};

  static Mat4 identity();

  double& at(int r, int c) { return m[r * 4 + c]; }
  double at(int r, int c) const { return m[r * 4 + c]; }

  Mat4 operator*(const Mat4& o) const;
  Vec3 transform_point(const Vec3& p) const;
  Vec3 transform_vector(const Vec3& v) const;
};

/// Split pose gradient: rotation part in 1/degree, translation part in 1/mm.
struct GradVec {
  Vec3 rot;
  Vec3 trans;
};

/// Wraps an angle into (-180, 180].
double normalize_angle_deg(double deg);

/// Translate-after-rotate rigid matrix; rotations composed as Rx*Ry*Rz
/// applied to column vectors, angles in degrees.
Mat4 euler_to_matrix(const Pose& pose);

/// Inverse of euler_to_matrix away from |ry| = 90 degrees.
/// Throws NonRigidMatrix / GimbalLock.
Pose matrix_to_pose(const Mat4& m);

/// (rotation geodesic angle in degrees, Euclidean translation distance in mm).
std::pair<double, double> geodesic_distance(const Pose& a, const Pose& b);

/// Gradient of 0.5*rot_deg^2 + 0.5*trans_mm^2 with respect to theta's six
/// parameters, under the product metric on rotations x translations.
GradVec geodesic_gradient(const Pose& theta, const Pose& target);

// JSON round trip with keys rx_deg..tz_mm; Mat4 as a 16-element array.
std::string pose_to_json(const Pose& p);
Pose pose_from_json(const std::string& text);
std::string mat4_to_json(const Mat4& m);

}  // namespace reg23
