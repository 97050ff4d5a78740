#include "reg23/pose.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "reg23/errors.hpp"

namespace reg23 {

namespace {

constexpr double kDegToRad = M_PI / 180.0;
constexpr double kRadToDeg = 180.0 / M_PI;

using Mat3 = std::array<double, 9>;

Mat3 rot_block(const Mat4& m) {
  return {m.at(0, 0), m.at(0, 1), m.at(0, 2),
          m.at(1, 0), m.at(1, 1), m.at(1, 2),
          m.at(2, 0), m.at(2, 1), m.at(2, 2)};
}

Mat3 mul3(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += a[i * 3 + k] * b[k * 3 + j];
      c[i * 3 + j] = s;
    }
  return c;
}

Mat3 mul3_bt(const Mat3& a, const Mat3& b) {  // a * b^T
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += a[i * 3 + k] * b[j * 3 + k];
      c[i * 3 + j] = s;
    }
  return c;
}

double trace3(const Mat3& a) { return a[0] + a[4] + a[8]; }

Mat3 rx_mat(double c, double s) { return {1, 0, 0, 0, c, -s, 0, s, c}; }
Mat3 ry_mat(double c, double s) { return {c, 0, s, 0, 1, 0, -s, 0, c}; }
Mat3 rz_mat(double c, double s) { return {c, -s, 0, s, c, 0, 0, 0, 1}; }

// Derivatives with respect to the angle in radians.
Mat3 drx_mat(double c, double s) { return {0, 0, 0, 0, -s, -c, 0, c, -s}; }
Mat3 dry_mat(double c, double s) { return {-s, 0, c, 0, 0, 0, -c, 0, -s}; }
Mat3 drz_mat(double c, double s) { return {-s, -c, 0, c, -s, 0, 0, 0, 0}; }

Mat3 rotation_of(const Pose& p) {
  const double ax = p.rx_deg * kDegToRad;
  const double ay = p.ry_deg * kDegToRad;
  const double az = p.rz_deg * kDegToRad;
  return mul3(rx_mat(std::cos(ax), std::sin(ax)),
              mul3(ry_mat(std::cos(ay), std::sin(ay)),
                   rz_mat(std::cos(az), std::sin(az))));
}

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

// Geodesic angle (radians) of the relative rotation a * b^T.
double relative_angle_rad(const Mat3& a, const Mat3& b) {
  const Mat3 rel = mul3_bt(a, b);
  return std::acos(clamp_unit((trace3(rel) - 1.0) * 0.5));
}

}  // namespace

bool Pose::finite() const {
  for (int i = 0; i < 6; ++i)
    if (!std::isfinite((*this)[i])) return false;
  return true;
}

Mat4 Mat4::identity() {
  Mat4 r;
  r.at(0, 0) = r.at(1, 1) = r.at(2, 2) = r.at(3, 3) = 1.0;
  return r;
}

Mat4 Mat4::operator*(const Mat4& o) const {
  Mat4 r;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = 0;
      for (int k = 0; k < 4; ++k) s += at(i, k) * o.at(k, j);
      r.at(i, j) = s;
    }
  return r;
}

Vec3 Mat4::transform_point(const Vec3& p) const {
  return {at(0, 0) * p.x + at(0, 1) * p.y + at(0, 2) * p.z + at(0, 3),
          at(1, 0) * p.x + at(1, 1) * p.y + at(1, 2) * p.z + at(1, 3),
          at(2, 0) * p.x + at(2, 1) * p.y + at(2, 2) * p.z + at(2, 3)};
}

Vec3 Mat4::transform_vector(const Vec3& v) const {
  return {at(0, 0) * v.x + at(0, 1) * v.y + at(0, 2) * v.z,
          at(1, 0) * v.x + at(1, 1) * v.y + at(1, 2) * v.z,
          at(2, 0) * v.x + at(2, 1) * v.y + at(2, 2) * v.z};
}

double normalize_angle_deg(double deg) {
  double a = std::fmod(deg, 360.0);
  if (a <= -180.0) a += 360.0;
  if (a > 180.0) a -= 360.0;
  return a;
}

Mat4 euler_to_matrix(const Pose& pose) {
  const Mat3 r = rotation_of(pose);
  Mat4 out = Mat4::identity();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out.at(i, j) = r[i * 3 + j];
  out.at(0, 3) = pose.tx_mm;
  out.at(1, 3) = pose.ty_mm;
  out.at(2, 3) = pose.tz_mm;
  return out;
}

Pose matrix_to_pose(const Mat4& m) {
  const Mat3 r = rot_block(m);
  // Orthonormality: max |R^T R - I| entry.
  double worst = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += r[k * 3 + i] * r[k * 3 + j];
      worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
    }
  const double det = r[0] * (r[4] * r[8] - r[5] * r[7]) -
                     r[1] * (r[3] * r[8] - r[5] * r[6]) +
                     r[2] * (r[3] * r[7] - r[4] * r[6]);
  if (worst > 1e-6 || std::abs(det - 1.0) > 1e-6)
    throw NonRigidMatrix("rotation block not orthonormal (deviation " +
                         std::to_string(worst) + ", det " + std::to_string(det) + ")");

  // R = Rx(a)*Ry(b)*Rz(c):
  //   R02 = sin b,  R12 = -sin a cos b,  R22 = cos a cos b,
  //   R01 = -cos b sin c,  R00 = cos b cos c.
  const double sb = clamp_unit(r[2]);
  const double cb = std::sqrt(std::max(0.0, 1.0 - sb * sb));
  if (cb < 1e-8) throw GimbalLock("|ry| at 90 degrees");
  Pose p;
  p.ry_deg = std::asin(sb) * kRadToDeg;
  p.rx_deg = std::atan2(-r[5], r[8]) * kRadToDeg;
  p.rz_deg = std::atan2(-r[1], r[0]) * kRadToDeg;
  p.tx_mm = m.at(0, 3);
  p.ty_mm = m.at(1, 3);
  p.tz_mm = m.at(2, 3);
  return p;
}

std::pair<double, double> geodesic_distance(const Pose& a, const Pose& b) {
  const double rot = relative_angle_rad(rotation_of(a), rotation_of(b)) * kRadToDeg;
  const double trans = (a.translation() - b.translation()).norm();
  return {rot, trans};
}

GradVec geodesic_gradient(const Pose& theta, const Pose& target) {
  const double ax = theta.rx_deg * kDegToRad;
  const double ay = theta.ry_deg * kDegToRad;
  const double az = theta.rz_deg * kDegToRad;
  const Mat3 rx = rx_mat(std::cos(ax), std::sin(ax));
  const Mat3 ry = ry_mat(std::cos(ay), std::sin(ay));
  const Mat3 rz = rz_mat(std::cos(az), std::sin(az));
  const Mat3 rhat = rotation_of(target);

  // d(0.5*phi_deg^2)/dtheta_deg_i = -(180/pi) * (phi/sin phi) * tr(dR_i R̂^T)/2,
  // with dR_i the derivative of R = Rx*Ry*Rz in radians. The phi/sin(phi)
  // factor is smooth through phi = 0 and tr(dR R^T) vanishes there, so the
  // gradient is exactly zero at theta = target.
  const Mat3 rel = mul3_bt(mul3(rx, mul3(ry, rz)), rhat);
  const double cos_phi = clamp_unit((trace3(rel) - 1.0) * 0.5);
  const double phi = std::acos(cos_phi);
  const double sin_phi = std::sin(phi);
  double factor;
  if (phi < 1e-9) {
    factor = 1.0;
  } else if (sin_phi < 1e-12) {
    factor = phi / 1e-12;  // cut locus; bounded surrogate
  } else {
    factor = phi / sin_phi;
  }

  const Mat3 d_list[3] = {
      mul3(drx_mat(std::cos(ax), std::sin(ax)), mul3(ry, rz)),
      mul3(rx, mul3(dry_mat(std::cos(ay), std::sin(ay)), rz)),
      mul3(rx, mul3(ry, drz_mat(std::cos(az), std::sin(az))))};

  GradVec g;
  for (int i = 0; i < 3; ++i) {
    const double tr = trace3(mul3_bt(d_list[i], rhat));
    g.rot[i] = -kRadToDeg * factor * tr * 0.5;
  }
  g.trans = theta.translation() - target.translation();
  return g;
}

std::string pose_to_json(const Pose& p) {
  nlohmann::json j{{"rx_deg", p.rx_deg}, {"ry_deg", p.ry_deg}, {"rz_deg", p.rz_deg},
                   {"tx_mm", p.tx_mm},   {"ty_mm", p.ty_mm},   {"tz_mm", p.tz_mm}};
  return j.dump();
}

Pose pose_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  return Pose(j.at("rx_deg").get<double>(), j.at("ry_deg").get<double>(),
              j.at("rz_deg").get<double>(), j.at("tx_mm").get<double>(),
              j.at("ty_mm").get<double>(), j.at("tz_mm").get<double>());
}

std::string mat4_to_json(const Mat4& m) {
  nlohmann::json j = nlohmann::json::array();
  for (double v : m.m) j.push_back(v);
  return j.dump();
}

}  // namespace reg23
