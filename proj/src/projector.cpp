#include "reg23/projector.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>

#include "reg23/errors.hpp"
#include "reg23/thread_pool.hpp"

namespace reg23 {

namespace {

std::mutex g_pool_mu;
std::unique_ptr<ThreadPool> g_pool;
int g_pool_threads = 0;

ThreadPool& pool() {
  std::lock_guard lk(g_pool_mu);
  if (!g_pool) {
    const int hw = (int)std::thread::hardware_concurrency();
    g_pool_threads = std::clamp(hw, 1, 8);
    g_pool = std::make_unique<ThreadPool>(g_pool_threads);
  }
  return *g_pool;
}

struct RayFrame {
  // Source position and detector basis in volume index coordinates.
  Vec3 src_vol;      // source in volume-centered mm coords
  Vec3 r_rows[3];    // rows of R^T (world -> volume rotation)
  Vec3 inv_spacing;
  Vec3 idx_offset;   // (n-1)/2 per axis
  double det_x;      // detector plane x
  int nx, ny, nz;
};

RayFrame make_frame(int nx, int ny, int nz, double sx, double sy, double sz,
                    const Pose& pose, const Intrinsics& k) {
  const Mat4 a = euler_to_matrix(pose);
  RayFrame f;
  // Rows of R^T are the columns of R.
  f.r_rows[0] = {a.at(0, 0), a.at(1, 0), a.at(2, 0)};
  f.r_rows[1] = {a.at(0, 1), a.at(1, 1), a.at(2, 1)};
  f.r_rows[2] = {a.at(0, 2), a.at(1, 2), a.at(2, 2)};
  const Vec3 src_world{k.siso_mm, 0, 0};
  const Vec3 rel = src_world - Vec3{pose.tx_mm, pose.ty_mm, pose.tz_mm};
  f.src_vol = {f.r_rows[0].dot(rel), f.r_rows[1].dot(rel), f.r_rows[2].dot(rel)};
  f.inv_spacing = {1.0 / sx, 1.0 / sy, 1.0 / sz};
  f.idx_offset = {0.5 * (nx - 1), 0.5 * (ny - 1), 0.5 * (nz - 1)};
  f.det_x = k.siso_mm - k.sdd_mm;
  f.nx = nx;
  f.ny = ny;
  f.nz = nz;
  return f;
}

// Clips [t_lo, t_hi] against lo <= o + t*d <= hi; returns false when empty.
inline bool clip_axis(double o, double d, double lo, double hi, double& t_lo,
                      double& t_hi) {
  if (std::abs(d) < 1e-300) return o >= lo && o <= hi;
  const double inv = 1.0 / d;
  double a = (lo - o) * inv, b = (hi - o) * inv;
  if (a > b) std::swap(a, b);
  t_lo = std::max(t_lo, a);
  t_hi = std::min(t_hi, b);
  return t_lo < t_hi;
}

template <class Fetch>
double integrate_ray(const RayFrame& f, const Intrinsics& k, int i, int j,
                     double step, const Fetch& fetch) {
  const Vec3 pix_world{f.det_x, (i - 0.5 * (k.det_w - 1)) * k.px_spacing_mm,
                       (j - 0.5 * (k.det_h - 1)) * k.px_spacing_mm};
  // Direction in the volume frame; source-to-pixel distance bounds the ray.
  const Vec3 src_world{k.siso_mm, 0, 0};
  const Vec3 dw = pix_world - src_world;
  const double ray_len = dw.norm();
  const Vec3 d_unit{dw.x / ray_len, dw.y / ray_len, dw.z / ray_len};
  const Vec3 d_vol{f.r_rows[0].dot(d_unit), f.r_rows[1].dot(d_unit),
                   f.r_rows[2].dot(d_unit)};

  // Index-space ray: position = o_idx + t * d_idx with t in mm.
  const Vec3 o_idx{f.src_vol.x * f.inv_spacing.x + f.idx_offset.x,
                   f.src_vol.y * f.inv_spacing.y + f.idx_offset.y,
                   f.src_vol.z * f.inv_spacing.z + f.idx_offset.z};
  const Vec3 d_idx{d_vol.x * f.inv_spacing.x, d_vol.y * f.inv_spacing.y,
                   d_vol.z * f.inv_spacing.z};

  double t0 = 0.0, t1 = ray_len;  // from the source to the detector
  if (!clip_axis(o_idx.x, d_idx.x, -0.5, f.nx - 0.5, t0, t1)) return 0.0;
  if (!clip_axis(o_idx.y, d_idx.y, -0.5, f.ny - 0.5, t0, t1)) return 0.0;
  if (!clip_axis(o_idx.z, d_idx.z, -0.5, f.nz - 0.5, t0, t1)) return 0.0;
  if (t1 <= t0) return 0.0;

  const double span = t1 - t0;
  const int n_steps = std::max(1, (int)std::ceil(span / step));
  double acc = 0.0;
  for (int s = 0; s < n_steps; ++s) {
    const double a = s * step;
    const double w = (s + 1 == n_steps) ? span - a : step;
    const double t = t0 + a + 0.5 * w;
    const double x = o_idx.x + t * d_idx.x;
    const double y = o_idx.y + t * d_idx.y;
    const double z = o_idx.z + t * d_idx.z;
    acc += fetch(x, y, z) * w;
  }
  return acc;
}

// Trilinear interpolation with nearest-edge clamping in the half-voxel shell.
template <class T>
struct GridSampler {
  const T* data;
  int nx, ny, nz;

  double operator()(double x, double y, double z) const {
    x = std::clamp(x, 0.0, (double)(nx - 1));
    y = std::clamp(y, 0.0, (double)(ny - 1));
    z = std::clamp(z, 0.0, (double)(nz - 1));
    const int i0 = nx > 1 ? std::min((int)x, nx - 2) : 0;
    const int j0 = ny > 1 ? std::min((int)y, ny - 2) : 0;
    const int k0 = nz > 1 ? std::min((int)z, nz - 2) : 0;
    const double fx = x - i0, fy = y - j0, fz = z - k0;
    const int i1 = nx > 1 ? i0 + 1 : i0;
    const int j1 = ny > 1 ? j0 + 1 : j0;
    const int k1 = nz > 1 ? k0 + 1 : k0;

    auto at = [&](int i, int j, int kk) {
      return (double)data[((size_t)kk * ny + j) * nx + i];
    };
    const double c00 = at(i0, j0, k0) * (1 - fx) + at(i1, j0, k0) * fx;
    const double c10 = at(i0, j1, k0) * (1 - fx) + at(i1, j1, k0) * fx;
    const double c01 = at(i0, j0, k1) * (1 - fx) + at(i1, j0, k1) * fx;
    const double c11 = at(i0, j1, k1) * (1 - fx) + at(i1, j1, k1) * fx;
    const double c0 = c00 * (1 - fy) + c10 * fy;
    const double c1 = c01 * (1 - fy) + c11 * fy;
    return c0 * (1 - fz) + c1 * fz;
  }
};

}  // namespace

void Intrinsics::validate() const {
  if (!(siso_mm > 0) || !(sdd_mm > siso_mm))
    throw Error("intrinsics: require 0 < siso_mm < sdd_mm");
  if (det_w < 1 || det_h < 1) throw Error("intrinsics: detector dims must be >= 1");
  if (!(px_spacing_mm > 0)) throw Error("intrinsics: pixel spacing must be > 0");
  if (!(step_mm > 0)) throw Error("intrinsics: step_mm must be > 0");
}

double Intrinsics::default_step(const Volume& v) {
  return 0.5 * std::min({v.sx, v.sy, v.sz});
}

int projector_threads() {
  pool();
  std::lock_guard lk(g_pool_mu);
  return g_pool_threads;
}

void set_projector_threads(int n) {
  std::lock_guard lk(g_pool_mu);
  g_pool_threads = std::max(1, n);
  g_pool = std::make_unique<ThreadPool>(g_pool_threads);
}

Image project(const Volume& volume, const Pose& pose, const Intrinsics& k) {
  k.validate();
  if (!pose.finite()) throw Error("project: pose must be finite");
  const RayFrame frame =
      make_frame(volume.nx, volume.ny, volume.nz, volume.sx, volume.sy, volume.sz, pose, k);
  const GridSampler<double> sampler{volume.data.data(), volume.nx, volume.ny, volume.nz};
  Image img(k.det_w, k.det_h);
  const double step = k.step_mm;
  pool().parallel_for(k.det_h, [&](int64_t j0, int64_t j1) {
    for (int64_t j = j0; j < j1; ++j)
      for (int i = 0; i < k.det_w; ++i)
        img.at(i, (int)j) = integrate_ray(frame, k, i, (int)j, step, sampler);
  });
  return img;
}

MaskImage project_mask(const VoxelMask& mask, const Pose& pose, const Intrinsics& k,
                       double tau) {
  k.validate();
  const RayFrame frame =
      make_frame(mask.nx, mask.ny, mask.nz, mask.sx, mask.sy, mask.sz, pose, k);
  const GridSampler<uint8_t> sampler{mask.data.data(), mask.nx, mask.ny, mask.nz};
  MaskImage img(k.det_w, k.det_h);
  const double step = k.step_mm;
  pool().parallel_for(k.det_h, [&](int64_t j0, int64_t j1) {
    for (int64_t j = j0; j < j1; ++j)
      for (int i = 0; i < k.det_w; ++i)
        img.at(i, (int)j) =
            integrate_ray(frame, k, i, (int)j, step, sampler) > tau ? 1 : 0;
  });
  return img;
}

GradVec fd_pose_grad(const std::function<double(const Pose&)>& f, const Pose& theta,
                     double h_rot_deg, double h_trans_mm) {
  if (!(h_rot_deg > 0) || !(h_trans_mm > 0))
    throw Error("fd_pose_grad: steps must be positive");
  GradVec g;
  for (int p = 0; p < 6; ++p) {
    const double h = p < 3 ? h_rot_deg : h_trans_mm;
    Pose hi = theta, lo = theta;
    hi[p] += h;
    lo[p] -= h;
    const double d = (f(hi) - f(lo)) / (2.0 * h);
    if (p < 3)
      g.rot[p] = d;
    else
      g.trans[p - 3] = d;
  }
  return g;
}

std::pair<double, double> project_world_point(const Vec3& p, const Intrinsics& k) {
  k.validate();
  const Vec3 src{k.siso_mm, 0, 0};
  const double denom = src.x - p.x;  // distance from source plane along -x
  if (denom <= 1e-9)
    throw OffDetector("point at or behind the source plane");
  const double s = k.sdd_mm / denom;
  return {src.y + (p.y - src.y) * s, src.z + (p.z - src.z) * s};
}

}  // namespace reg23
