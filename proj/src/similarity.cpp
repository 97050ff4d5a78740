#include "reg23/similarity.hpp"

#include <cmath>

#include "reg23/errors.hpp"

namespace reg23 {

namespace {

void require_same_dims(const Image& a, const Image& b) {
  if (!a.same_dims(b)) throw DimMismatch("image dims differ");
}

void require_min_dims(const Image& a, int n) {
  if (a.w < n || a.h < n)
    throw DimMismatch("image must be at least " + std::to_string(n) + "x" +
                      std::to_string(n));
}

// Pearson correlation of a rectangular window; identical and negated
// windows return exactly +/-1 (the accumulations are then bitwise equal).
// Returns NaN for zero variance; callers decide how to handle it.
double window_pearson(const Image& a, const Image& b, int x0, int y0, int pw, int ph) {
  const double n = (double)pw * ph;
  double sum_a = 0, sum_b = 0;
  for (int y = y0; y < y0 + ph; ++y)
    for (int x = x0; x < x0 + pw; ++x) {
      sum_a += a.at(x, y);
      sum_b += b.at(x, y);
    }
  const double mu_a = sum_a / n, mu_b = sum_b / n;
  double cov = 0, var_a = 0, var_b = 0;
  for (int y = y0; y < y0 + ph; ++y)
    for (int x = x0; x < x0 + pw; ++x) {
      const double da = a.at(x, y) - mu_a;
      const double db = b.at(x, y) - mu_b;
      cov += da * db;
      var_a += da * da;
      var_b += db * db;
    }
  if (var_a == 0.0 || var_b == 0.0) return std::nan("");
  if (var_a == var_b && cov == var_a) return 1.0;
  if (var_a == var_b && cov == -var_a) return -1.0;
  return cov / std::sqrt(var_a * var_b);
}

struct GradientPair {
  Image gx, gy;  // interior (w-2) x (h-2) grids
};

GradientPair central_gradients(const Image& img) {
  GradientPair g{Image(img.w - 2, img.h - 2), Image(img.w - 2, img.h - 2)};
  for (int y = 1; y < img.h - 1; ++y)
    for (int x = 1; x < img.w - 1; ++x) {
      g.gx.at(x - 1, y - 1) = 0.5 * (img.at(x + 1, y) - img.at(x - 1, y));
      g.gy.at(x - 1, y - 1) = 0.5 * (img.at(x, y + 1) - img.at(x, y - 1));
    }
  return g;
}

double variance(const Image& img) {
  double sum = 0;
  for (double v : img.data) sum += v;
  const double mu = sum / (double)img.size();
  double acc = 0;
  for (double v : img.data) acc += (v - mu) * (v - mu);
  return acc / (double)img.size();
}

}  // namespace

bool metric_maximizes(MetricKind kind) {
  switch (kind) {
    case MetricKind::NCC:
    case MetricKind::LocalNCC:
    case MetricKind::GradCorr:
    case MetricKind::NGI:
      return true;
    case MetricKind::GradDiff:
    case MetricKind::MSE:
      return false;
  }
  return false;
}

MetricKind parse_metric(const std::string& name) {
  if (name == "ncc") return MetricKind::NCC;
  if (name == "nccl") return MetricKind::LocalNCC;
  if (name == "gc") return MetricKind::GradCorr;
  if (name == "ngi") return MetricKind::NGI;
  if (name == "gd") return MetricKind::GradDiff;
  if (name == "mse") return MetricKind::MSE;
  throw Error("unknown metric name: " + name);
}

std::string metric_name(MetricKind kind) {
  switch (kind) {
    case MetricKind::NCC: return "ncc";
    case MetricKind::LocalNCC: return "nccl";
    case MetricKind::GradCorr: return "gc";
    case MetricKind::NGI: return "ngi";
    case MetricKind::GradDiff: return "gd";
    case MetricKind::MSE: return "mse";
  }
  return "?";
}

double ncc(const Image& a, const Image& b) {
  require_same_dims(a, b);
  if (a.size() == 0) throw DegenerateInput("empty image");
  const double r = window_pearson(a, b, 0, 0, a.w, a.h);
  if (std::isnan(r)) throw DegenerateInput("zero-variance image in ncc");
  return r;
}

double local_ncc(const Image& a, const Image& b, int patch) {
  require_same_dims(a, b);
  if (patch < 2) throw Error("local_ncc: patch must be >= 2");
  if (a.w % patch || a.h % patch)
    throw DimMismatch("local_ncc: patch must divide both dims");
  double sum = 0;
  int used = 0;
  for (int py = 0; py < a.h; py += patch)
    for (int px = 0; px < a.w; px += patch) {
      const double r = window_pearson(a, b, px, py, patch, patch);
      if (std::isnan(r)) continue;  // zero-variance patch
      sum += r;
      ++used;
    }
  if (used == 0) throw DegenerateInput("all patches skipped in local_ncc");
  return sum / used;
}

double grad_corr(const Image& a, const Image& b) {
  require_same_dims(a, b);
  require_min_dims(a, 3);
  const GradientPair ga = central_gradients(a);
  const GradientPair gb = central_gradients(b);
  const double rx = window_pearson(ga.gx, gb.gx, 0, 0, ga.gx.w, ga.gx.h);
  const double ry = window_pearson(ga.gy, gb.gy, 0, 0, ga.gy.w, ga.gy.h);
  if (std::isnan(rx) || std::isnan(ry))
    throw DegenerateInput("zero-variance gradient image in grad_corr");
  return 0.5 * (rx + ry);
}

namespace {

// Sum over pixels of min(|ga|, |gb|) * (cos(angle) + 1) / 2.
double gradient_information(const GradientPair& ga, const GradientPair& gb) {
  double acc = 0;
  for (size_t i = 0; i < ga.gx.size(); ++i) {
    const double ax = ga.gx.data[i], ay = ga.gy.data[i];
    const double bx = gb.gx.data[i], by = gb.gy.data[i];
    const double na = std::sqrt(ax * ax + ay * ay);
    const double nb = std::sqrt(bx * bx + by * by);
    const double m = std::min(na, nb);
    if (m == 0.0) continue;
    const double cos_phi = (ax * bx + ay * by) / (na * nb);
    acc += m * 0.5 * (cos_phi + 1.0);
  }
  return acc;
}

}  // namespace

double ngi(const Image& a, const Image& b) {
  require_same_dims(a, b);
  require_min_dims(a, 3);
  const GradientPair ga = central_gradients(a);
  const GradientPair gb = central_gradients(b);
  const double self = gradient_information(gb, gb);
  if (self == 0.0) throw DegenerateInput("ngi: reference image has no gradients");
  return gradient_information(ga, gb) / self;
}

double grad_diff(const Image& fixed, const Image& moving) {
  require_same_dims(fixed, moving);
  require_min_dims(fixed, 3);
  const GradientPair gf = central_gradients(fixed);
  const GradientPair gm = central_gradients(moving);
  const double var_x = variance(gf.gx);
  const double var_y = variance(gf.gy);
  if (var_x == 0.0 || var_y == 0.0)
    throw DegenerateInput("grad_diff: fixed image gradients have zero variance");
  double score = 0;
  for (size_t i = 0; i < gf.gx.size(); ++i) {
    const double dx = gf.gx.data[i] - gm.gx.data[i];
    const double dy = gf.gy.data[i] - gm.gy.data[i];
    score += var_x / (var_x + dx * dx);
    score += var_y / (var_y + dy * dy);
  }
  const double best = 2.0 * (double)gf.gx.size();
  return (best - score) / best;
}

double mse_params(const Pose& target, const std::vector<Pose>& preds, bool squared) {
  if (preds.empty()) throw Error("mse_params: empty batch");
  double acc = 0;
  for (const Pose& p : preds) {
    double q = 0;
    for (int i = 0; i < 6; ++i) {
      const double d = target[i] - p[i];
      q += d * d;
    }
    acc += squared ? q : std::sqrt(q);
  }
  return acc / (double)preds.size();
}

double evaluate_metric(const MetricSpec& spec, const Image& a, const Image& b) {
  switch (spec.kind) {
    case MetricKind::NCC: return ncc(a, b);
    case MetricKind::LocalNCC: return local_ncc(a, b, spec.patch);
    case MetricKind::GradCorr: return grad_corr(a, b);
    case MetricKind::NGI: return ngi(a, b);
    case MetricKind::GradDiff: return grad_diff(a, b);
    case MetricKind::MSE: break;
  }
  throw Error("evaluate_metric: not an image metric");
}

}  // namespace reg23
