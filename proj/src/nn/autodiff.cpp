#include "reg23/nn/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "reg23/errors.hpp"

namespace reg23::nn {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeMismatch(msg);
}

bool any_needs_grad(const std::vector<Var>& parents) {
  for (const auto& p : parents)
    if (p->needs_grad) return true;
  return false;
}

}  // namespace

void Tape::check_finite(const char* op_name, const Tensor& t) const {
  if (!finite_checks_) return;
  for (double v : t.data)
    if (!std::isfinite(v))
      throw NonFiniteFault(std::string("non-finite value after op ") + op_name);
}

Var Tape::constant(Tensor v) {
  auto n = std::make_shared<Node>();
  n->val = std::move(v);
  n->needs_grad = false;
  order_.push_back(n);
  return n;
}

Var Tape::input(Tensor v, bool needs_grad) {
  auto n = std::make_shared<Node>();
  n->val = std::move(v);
  n->needs_grad = needs_grad && grad_enabled_;
  order_.push_back(n);
  return n;
}

Var Tape::use_param(Param& p) {
  auto n = std::make_shared<Node>();
  n->val = p.value;
  n->needs_grad = grad_enabled_;
  order_.push_back(n);
  if (grad_enabled_) param_uses_.emplace_back(&p, n);
  return n;
}

Var Tape::make(const char* op_name, Tensor out, std::vector<Var> parents,
               std::function<void(Node&)> bp) {
  check_finite(op_name, out);
  auto n = std::make_shared<Node>();
  n->val = std::move(out);
  n->needs_grad = grad_enabled_ && any_needs_grad(parents);
  if (n->needs_grad) {
    n->parents = std::move(parents);
    n->backward = std::move(bp);
  }
  order_.push_back(n);
  return n;
}

void Tape::backward(const Var& root, const Tensor& seed) {
  if (!grad_enabled_) throw Error("backward on a no-grad tape");
  require(seed.same_shape(root->val), "backward: seed shape mismatch");
  root->ensure_grad();
  for (size_t i = 0; i < seed.numel(); ++i) root->grad[i] += seed[i];
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    Node& n = **it;
    if (!n.needs_grad || !n.backward) continue;
    if (n.grad.numel() != n.val.numel()) continue;  // nothing flowed here
    n.backward(n);
  }
}

void Tape::backward_scalar(const Var& root, double seed) {
  Tensor s(root->val.shape);
  require(s.numel() == 1, "backward_scalar: root is not a scalar");
  s[0] = seed;
  backward(root, s);
}

void Tape::accumulate_param_grads() {
  for (auto& [p, var] : param_uses_) {
    if (var->grad.numel() != var->val.numel()) continue;
    for (size_t i = 0; i < p->grad.numel(); ++i) p->grad[i] += var->grad[i];
  }
}

// ---- elementwise ops -------------------------------------------------------

namespace {

template <class Fwd, class Bwd>
Var binary_op(Tape& t, const char* name, const Var& a, const Var& b, Fwd fwd, Bwd bwd) {
  require(a->val.same_shape(b->val), std::string(name) + ": shape mismatch " +
                                         a->val.shape_str() + " vs " + b->val.shape_str());
  Tensor out(a->val.shape);
  for (size_t i = 0; i < out.numel(); ++i) out[i] = fwd(a->val[i], b->val[i]);
  return t.make(name, std::move(out), {a, b}, [a, b, bwd](Node& n) {
    for (size_t i = 0; i < n.grad.numel(); ++i) {
      const auto [da, db] = bwd(a->val[i], b->val[i], n.val[i]);
      if (a->needs_grad) a->ensure_grad()[i] += n.grad[i] * da;
      if (b->needs_grad) b->ensure_grad()[i] += n.grad[i] * db;
    }
  });
}

template <class Fwd, class Bwd>
Var unary_op(Tape& t, const char* name, const Var& a, Fwd fwd, Bwd bwd) {
  Tensor out(a->val.shape);
  for (size_t i = 0; i < out.numel(); ++i) out[i] = fwd(a->val[i]);
  return t.make(name, std::move(out), {a}, [a, bwd](Node& n) {
    if (!a->needs_grad) return;
    Tensor& ga = a->ensure_grad();
    for (size_t i = 0; i < n.grad.numel(); ++i)
      ga[i] += n.grad[i] * bwd(a->val[i], n.val[i]);
  });
}

}  // namespace

Var add(Tape& t, const Var& a, const Var& b) {
  return binary_op(t, "add", a, b, [](double x, double y) { return x + y; },
                   [](double, double, double) { return std::pair{1.0, 1.0}; });
}

Var sub(Tape& t, const Var& a, const Var& b) {
  return binary_op(t, "sub", a, b, [](double x, double y) { return x - y; },
                   [](double, double, double) { return std::pair{1.0, -1.0}; });
}

Var mul(Tape& t, const Var& a, const Var& b) {
  return binary_op(t, "mul", a, b, [](double x, double y) { return x * y; },
                   [](double x, double y, double) { return std::pair{y, x}; });
}

Var div(Tape& t, const Var& a, const Var& b) {
  return binary_op(t, "div", a, b, [](double x, double y) { return x / y; },
                   [](double x, double y, double) {
                     return std::pair{1.0 / y, -x / (y * y)};
                   });
}

Var scale(Tape& t, const Var& a, double c) {
  return unary_op(t, "scale", a, [c](double x) { return c * x; },
                  [c](double, double) { return c; });
}

Var add_const(Tape& t, const Var& a, double c) {
  return unary_op(t, "add_const", a, [c](double x) { return x + c; },
                  [](double, double) { return 1.0; });
}

Var relu(Tape& t, const Var& a) {
  return unary_op(t, "relu", a, [](double x) { return x > 0 ? x : 0.0; },
                  [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var abs_op(Tape& t, const Var& a) {
  return unary_op(t, "abs", a, [](double x) { return std::abs(x); },
                  [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var square(Tape& t, const Var& a) {
  return unary_op(t, "square", a, [](double x) { return x * x; },
                  [](double x, double) { return 2.0 * x; });
}

Var sqrt_op(Tape& t, const Var& a) {
  return unary_op(t, "sqrt", a, [](double x) { return std::sqrt(x); },
                  [](double, double y) { return 0.5 / y; });
}

Var sum_all(Tape& t, const Var& a) {
  Tensor out({1});
  double s = 0;
  for (double v : a->val.data) s += v;
  out[0] = s;
  return t.make("sum_all", std::move(out), {a}, [a](Node& n) {
    if (!a->needs_grad) return;
    Tensor& ga = a->ensure_grad();
    for (size_t i = 0; i < ga.numel(); ++i) ga[i] += n.grad[0];
  });
}

Var stack_scalars(Tape& t, const std::vector<Var>& xs) {
  Tensor out({(int)xs.size()});
  for (size_t i = 0; i < xs.size(); ++i) {
    require(xs[i]->val.numel() == 1, "stack_scalars: inputs must be scalars");
    out[i] = xs[i]->val[0];
  }
  std::vector<Var> parents(xs.begin(), xs.end());
  return t.make("stack_scalars", std::move(out), parents, [xs](Node& n) {
    for (size_t i = 0; i < xs.size(); ++i)
      if (xs[i]->needs_grad) xs[i]->ensure_grad()[0] += n.grad[i];
  });
}

Var index_scalar(Tape& t, const Var& v, int i) {
  require(v->val.rank() == 1 && i >= 0 && i < v->val.dim(0), "index_scalar: bad index");
  Tensor out({1});
  out[0] = v->val[(size_t)i];
  return t.make("index_scalar", std::move(out), {v}, [v, i](Node& n) {
    if (v->needs_grad) v->ensure_grad()[(size_t)i] += n.grad[0];
  });
}

Var reshape(Tape& t, const Var& a, std::vector<int> shape) {
  require(Tensor::count(shape) == a->val.numel(), "reshape: element count mismatch");
  Tensor out(std::move(shape));
  out.data = a->val.data;
  return t.make("reshape", std::move(out), {a}, [a](Node& n) {
    if (!a->needs_grad) return;
    Tensor& ga = a->ensure_grad();
    for (size_t i = 0; i < ga.numel(); ++i) ga[i] += n.grad[i];
  });
}

Var flatten_3d_to_2d(Tape& t, const Var& a) {
  require(a->val.rank() == 5, "flatten_3d_to_2d: expected rank-5 input");
  const auto& s = a->val.shape;
  return reshape(t, a, {s[0], s[1] * s[2], s[3], s[4]});
}

Var concat_channels(Tape& t, const std::vector<Var>& xs) {
  require(!xs.empty(), "concat_channels: no inputs");
  const auto& s0 = xs[0]->val.shape;
  require(s0.size() == 4, "concat_channels: expected rank-4 inputs");
  int ch = 0;
  for (const auto& x : xs) {
    const auto& s = x->val.shape;
    require(s.size() == 4 && s[0] == s0[0] && s[2] == s0[2] && s[3] == s0[3],
            "concat_channels: incompatible shapes");
    ch += s[1];
  }
  const int b = s0[0], hh = s0[2], ww = s0[3];
  const size_t plane = (size_t)hh * ww;
  Tensor out({b, ch, hh, ww});
  for (int bi = 0; bi < b; ++bi) {
    size_t off = (size_t)bi * ch * plane;
    for (const auto& x : xs) {
      const int c = x->val.dim(1);
      const double* src = x->val.data.data() + (size_t)bi * c * plane;
      std::copy(src, src + (size_t)c * plane, out.data.begin() + off);
      off += (size_t)c * plane;
    }
  }
  std::vector<Var> parents(xs.begin(), xs.end());
  return t.make("concat_channels", std::move(out), parents, [xs, b, plane, ch](Node& n) {
    for (int bi = 0; bi < b; ++bi) {
      size_t off = (size_t)bi * ch * plane;
      for (const auto& x : xs) {
        const int c = x->val.dim(1);
        if (x->needs_grad) {
          Tensor& gx = x->ensure_grad();
          double* dst = gx.data.data() + (size_t)bi * c * plane;
          const double* src = n.grad.data.data() + off;
          for (size_t i = 0; i < (size_t)c * plane; ++i) dst[i] += src[i];
        }
        off += (size_t)c * plane;
      }
    }
  });
}

Var upsample2_nearest(Tape& t, const Var& a) {
  require(a->val.rank() == 4, "upsample2_nearest: expected rank-4 input");
  const int b = a->val.dim(0), c = a->val.dim(1), h = a->val.dim(2), w = a->val.dim(3);
  Tensor out({b, c, 2 * h, 2 * w});
  for (int bc = 0; bc < b * c; ++bc) {
    const double* src = a->val.data.data() + (size_t)bc * h * w;
    double* dst = out.data.data() + (size_t)bc * 4 * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double v = src[(size_t)y * w + x];
        const size_t o = (size_t)(2 * y) * 2 * w + 2 * x;
        dst[o] = v;
        dst[o + 1] = v;
        dst[o + 2 * w] = v;
        dst[o + 2 * w + 1] = v;
      }
  }
  return t.make("upsample2_nearest", std::move(out), {a}, [a, b, c, h, w](Node& n) {
    if (!a->needs_grad) return;
    Tensor& ga = a->ensure_grad();
    for (int bc = 0; bc < b * c; ++bc) {
      double* dst = ga.data.data() + (size_t)bc * h * w;
      const double* src = n.grad.data.data() + (size_t)bc * 4 * h * w;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const size_t o = (size_t)(2 * y) * 2 * w + 2 * x;
          dst[(size_t)y * w + x] += src[o] + src[o + 1] + src[o + 2 * w] + src[o + 2 * w + 1];
        }
    }
  });
}

// ---- conv / linear ---------------------------------------------------------

namespace {

struct ConvDims {
  int b, ci, h, w, co, k, stride, pad, oh, ow;
};

ConvDims conv2d_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
  require(x.rank() == 4, "conv2d: input must be rank 4, got " + x.shape_str());
  require(w.rank() == 4, "conv2d: weight must be rank 4");
  ConvDims d;
  d.b = x.dim(0);
  d.ci = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.co = w.dim(0);
  d.k = w.dim(2);
  require(w.dim(1) == d.ci && w.dim(3) == d.k, "conv2d: weight shape mismatch");
  d.stride = stride;
  d.pad = pad;
  d.oh = (d.h + 2 * pad - d.k) / stride + 1;
  d.ow = (d.w + 2 * pad - d.k) / stride + 1;
  require(d.oh > 0 && d.ow > 0, "conv2d: output collapsed to zero size");
  return d;
}

// Valid output range for one kernel offset: 0 <= o*stride + kk - pad < limit.
inline std::pair<int, int> valid_out_range(int kk, int pad, int stride, int limit,
                                           int out_limit) {
  int lo = 0;
  const int num = pad - kk;
  if (num > 0) lo = (num + stride - 1) / stride;
  int hi = (limit - 1 + pad - kk) / stride;  // inclusive
  hi = std::min(hi, out_limit - 1);
  return {lo, hi};
}

}  // namespace

Var conv2d(Tape& t, const Var& xv, const Var& wv, const Var& bv, int stride, int pad) {
  const ConvDims d = conv2d_dims(xv->val, wv->val, stride, pad);
  require(bv->val.rank() == 1 && bv->val.dim(0) == d.co, "conv2d: bias shape mismatch");
  const Tensor& x = xv->val;
  const Tensor& w = wv->val;
  Tensor out({d.b, d.co, d.oh, d.ow});

  const size_t x_plane = (size_t)d.h * d.w;
  const size_t o_plane = (size_t)d.oh * d.ow;
  for (int b = 0; b < d.b; ++b)
    for (int co = 0; co < d.co; ++co) {
      double* yp = out.data.data() + ((size_t)b * d.co + co) * o_plane;
      const double bias = bv->val[(size_t)co];
      for (size_t i = 0; i < o_plane; ++i) yp[i] = bias;
      for (int ci = 0; ci < d.ci; ++ci) {
        const double* xp = x.data.data() + ((size_t)b * d.ci + ci) * x_plane;
        const double* wp = w.data.data() + ((size_t)co * d.ci + ci) * d.k * d.k;
        for (int ky = 0; ky < d.k; ++ky) {
          const auto [oy_lo, oy_hi] = valid_out_range(ky, pad, stride, d.h, d.oh);
          for (int kx = 0; kx < d.k; ++kx) {
            const double wgt = wp[(size_t)ky * d.k + kx];
            if (wgt == 0.0) continue;
            const auto [ox_lo, ox_hi] = valid_out_range(kx, pad, stride, d.w, d.ow);
            for (int oy = oy_lo; oy <= oy_hi; ++oy) {
              const int iy = oy * stride + ky - pad;
              const double* xrow = xp + (size_t)iy * d.w;
              double* yrow = yp + (size_t)oy * d.ow;
              for (int ox = ox_lo; ox <= ox_hi; ++ox)
                yrow[ox] += wgt * xrow[ox * stride + kx - pad];
            }
          }
        }
      }
    }

  return t.make("conv2d", std::move(out), {xv, wv, bv}, [xv, wv, bv, d](Node& n) {
    const size_t x_plane = (size_t)d.h * d.w;
    const size_t o_plane = (size_t)d.oh * d.ow;
    const Tensor& gy = n.grad;
    if (bv->needs_grad) {
      Tensor& gb = bv->ensure_grad();
      for (int b = 0; b < d.b; ++b)
        for (int co = 0; co < d.co; ++co) {
          const double* gp = gy.data.data() + ((size_t)b * d.co + co) * o_plane;
          double s = 0;
          for (size_t i = 0; i < o_plane; ++i) s += gp[i];
          gb[(size_t)co] += s;
        }
    }
    if (wv->needs_grad) {
      Tensor& gw = wv->ensure_grad();
      for (int b = 0; b < d.b; ++b)
        for (int co = 0; co < d.co; ++co) {
          const double* gp = gy.data.data() + ((size_t)b * d.co + co) * o_plane;
          for (int ci = 0; ci < d.ci; ++ci) {
            const double* xp = xv->val.data.data() + ((size_t)b * d.ci + ci) * x_plane;
            double* gwp = gw.data.data() + ((size_t)co * d.ci + ci) * d.k * d.k;
            for (int ky = 0; ky < d.k; ++ky) {
              const auto [oy_lo, oy_hi] = valid_out_range(ky, d.pad, d.stride, d.h, d.oh);
              for (int kx = 0; kx < d.k; ++kx) {
                const auto [ox_lo, ox_hi] = valid_out_range(kx, d.pad, d.stride, d.w, d.ow);
                double acc = 0;
                for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                  const int iy = oy * d.stride + ky - d.pad;
                  const double* xrow = xp + (size_t)iy * d.w;
                  const double* grow = gp + (size_t)oy * d.ow;
                  for (int ox = ox_lo; ox <= ox_hi; ++ox)
                    acc += grow[ox] * xrow[ox * d.stride + kx - d.pad];
                }
                gwp[(size_t)ky * d.k + kx] += acc;
              }
            }
          }
        }
    }
    if (xv->needs_grad) {
      Tensor& gx = xv->ensure_grad();
      for (int b = 0; b < d.b; ++b)
        for (int co = 0; co < d.co; ++co) {
          const double* gp = gy.data.data() + ((size_t)b * d.co + co) * o_plane;
          for (int ci = 0; ci < d.ci; ++ci) {
            double* gxp = gx.data.data() + ((size_t)b * d.ci + ci) * x_plane;
            const double* wp = wv->val.data.data() + ((size_t)co * d.ci + ci) * d.k * d.k;
            for (int ky = 0; ky < d.k; ++ky) {
              const auto [oy_lo, oy_hi] = valid_out_range(ky, d.pad, d.stride, d.h, d.oh);
              for (int kx = 0; kx < d.k; ++kx) {
                const double wgt = wp[(size_t)ky * d.k + kx];
                if (wgt == 0.0) continue;
                const auto [ox_lo, ox_hi] = valid_out_range(kx, d.pad, d.stride, d.w, d.ow);
                for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                  const int iy = oy * d.stride + ky - d.pad;
                  double* gxrow = gxp + (size_t)iy * d.w;
                  const double* grow = gp + (size_t)oy * d.ow;
                  for (int ox = ox_lo; ox <= ox_hi; ++ox)
                    gxrow[ox * d.stride + kx - d.pad] += wgt * grow[ox];
                }
              }
            }
          }
        }
    }
  });
}

namespace {

struct Conv3Dims {
  int b, ci, dd, h, w, co, k, stride, pad, od, oh, ow;
};

Conv3Dims conv3d_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
  require(x.rank() == 5, "conv3d: input must be rank 5, got " + x.shape_str());
  require(w.rank() == 5, "conv3d: weight must be rank 5");
  Conv3Dims d;
  d.b = x.dim(0);
  d.ci = x.dim(1);
  d.dd = x.dim(2);
  d.h = x.dim(3);
  d.w = x.dim(4);
  d.co = w.dim(0);
  d.k = w.dim(2);
  require(w.dim(1) == d.ci && w.dim(3) == d.k && w.dim(4) == d.k,
          "conv3d: weight shape mismatch");
  d.stride = stride;
  d.pad = pad;
  d.od = (d.dd + 2 * pad - d.k) / stride + 1;
  d.oh = (d.h + 2 * pad - d.k) / stride + 1;
  d.ow = (d.w + 2 * pad - d.k) / stride + 1;
  require(d.od > 0 && d.oh > 0 && d.ow > 0, "conv3d: output collapsed to zero size");
  return d;
}

}  // namespace

Var conv3d(Tape& t, const Var& xv, const Var& wv, const Var& bv, int stride, int pad) {
  const Conv3Dims d = conv3d_dims(xv->val, wv->val, stride, pad);
  require(bv->val.rank() == 1 && bv->val.dim(0) == d.co, "conv3d: bias shape mismatch");
  Tensor out({d.b, d.co, d.od, d.oh, d.ow});

  const size_t x_vol = (size_t)d.dd * d.h * d.w;
  const size_t o_vol = (size_t)d.od * d.oh * d.ow;
  for (int b = 0; b < d.b; ++b)
    for (int co = 0; co < d.co; ++co) {
      double* yp = out.data.data() + ((size_t)b * d.co + co) * o_vol;
      const double bias = bv->val[(size_t)co];
      for (size_t i = 0; i < o_vol; ++i) yp[i] = bias;
      for (int ci = 0; ci < d.ci; ++ci) {
        const double* xp = xv->val.data.data() + ((size_t)b * d.ci + ci) * x_vol;
        const double* wp =
            wv->val.data.data() + ((size_t)co * d.ci + ci) * d.k * d.k * d.k;
        for (int kz = 0; kz < d.k; ++kz) {
          const auto [oz_lo, oz_hi] = valid_out_range(kz, d.pad, d.stride, d.dd, d.od);
          for (int ky = 0; ky < d.k; ++ky) {
            const auto [oy_lo, oy_hi] = valid_out_range(ky, d.pad, d.stride, d.h, d.oh);
            for (int kx = 0; kx < d.k; ++kx) {
              const double wgt = wp[((size_t)kz * d.k + ky) * d.k + kx];
              if (wgt == 0.0) continue;
              const auto [ox_lo, ox_hi] =
                  valid_out_range(kx, d.pad, d.stride, d.w, d.ow);
              for (int oz = oz_lo; oz <= oz_hi; ++oz) {
                const int iz = oz * d.stride + kz - d.pad;
                for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                  const int iy = oy * d.stride + ky - d.pad;
                  const double* xrow = xp + ((size_t)iz * d.h + iy) * d.w;
                  double* yrow = yp + ((size_t)oz * d.oh + oy) * d.ow;
                  for (int ox = ox_lo; ox <= ox_hi; ++ox)
                    yrow[ox] += wgt * xrow[ox * d.stride + kx - d.pad];
                }
              }
            }
          }
        }
      }
    }

  return t.make("conv3d", std::move(out), {xv, wv, bv}, [xv, wv, bv, d](Node& n) {
    const size_t x_vol = (size_t)d.dd * d.h * d.w;
    const size_t o_vol = (size_t)d.od * d.oh * d.ow;
    const Tensor& gy = n.grad;
    if (bv->needs_grad) {
      Tensor& gb = bv->ensure_grad();
      for (int b = 0; b < d.b; ++b)
        for (int co = 0; co < d.co; ++co) {
          const double* gp = gy.data.data() + ((size_t)b * d.co + co) * o_vol;
          double s = 0;
          for (size_t i = 0; i < o_vol; ++i) s += gp[i];
          gb[(size_t)co] += s;
        }
    }
    for (int b = 0; b < d.b; ++b)
      for (int co = 0; co < d.co; ++co) {
        const double* gp = gy.data.data() + ((size_t)b * d.co + co) * o_vol;
        for (int ci = 0; ci < d.ci; ++ci) {
          const double* xp = xv->val.data.data() + ((size_t)b * d.ci + ci) * x_vol;
          const size_t w_off = ((size_t)co * d.ci + ci) * d.k * d.k * d.k;
          for (int kz = 0; kz < d.k; ++kz) {
            const auto [oz_lo, oz_hi] = valid_out_range(kz, d.pad, d.stride, d.dd, d.od);
            for (int ky = 0; ky < d.k; ++ky) {
              const auto [oy_lo, oy_hi] = valid_out_range(ky, d.pad, d.stride, d.h, d.oh);
              for (int kx = 0; kx < d.k; ++kx) {
                const auto [ox_lo, ox_hi] =
                    valid_out_range(kx, d.pad, d.stride, d.w, d.ow);
                const size_t wi = w_off + ((size_t)kz * d.k + ky) * d.k + kx;
                double acc = 0;
                const double wgt = wv->val[wi];
                for (int oz = oz_lo; oz <= oz_hi; ++oz) {
                  const int iz = oz * d.stride + kz - d.pad;
                  for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                    const int iy = oy * d.stride + ky - d.pad;
                    const double* xrow = xp + ((size_t)iz * d.h + iy) * d.w;
                    const double* grow = gp + ((size_t)oz * d.oh + oy) * d.ow;
                    if (xv->needs_grad && wgt != 0.0) {
                      double* gxrow = xv->ensure_grad().data.data() +
                                      ((size_t)b * d.ci + ci) * x_vol +
                                      ((size_t)iz * d.h + iy) * d.w;
                      for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                        const int ix = ox * d.stride + kx - d.pad;
                        acc += grow[ox] * xrow[ix];
                        gxrow[ix] += wgt * grow[ox];
                      }
                    } else {
                      for (int ox = ox_lo; ox <= ox_hi; ++ox)
                        acc += grow[ox] * xrow[ox * d.stride + kx - d.pad];
                    }
                  }
                }
                if (wv->needs_grad) wv->ensure_grad()[wi] += acc;
              }
            }
          }
        }
      }
  });
}

Var linear(Tape& t, const Var& xv, const Var& wv, const Var& bv) {
  require(xv->val.rank() >= 2, "linear: input must have a batch axis");
  const int b = xv->val.dim(0);
  const int in_f = (int)(xv->val.numel() / (size_t)b);
  require(wv->val.rank() == 2 && wv->val.dim(1) == in_f,
          "linear: weight shape mismatch, input features " + std::to_string(in_f));
  const int out_f = wv->val.dim(0);
  require(bv->val.rank() == 1 && bv->val.dim(0) == out_f, "linear: bias shape mismatch");

  Tensor out({b, out_f});
  for (int i = 0; i < b; ++i) {
    const double* xp = xv->val.data.data() + (size_t)i * in_f;
    for (int o = 0; o < out_f; ++o) {
      const double* wp = wv->val.data.data() + (size_t)o * in_f;
      double acc = bv->val[(size_t)o];
      for (int j = 0; j < in_f; ++j) acc += wp[j] * xp[j];
      out[(size_t)i * out_f + o] = acc;
    }
  }
  return t.make("linear", std::move(out), {xv, wv, bv}, [xv, wv, bv, b, in_f, out_f](Node& n) {
    const Tensor& gy = n.grad;
    if (bv->needs_grad) {
      Tensor& gb = bv->ensure_grad();
      for (int i = 0; i < b; ++i)
        for (int o = 0; o < out_f; ++o) gb[(size_t)o] += gy[(size_t)i * out_f + o];
    }
    if (wv->needs_grad) {
      Tensor& gw = wv->ensure_grad();
      for (int i = 0; i < b; ++i) {
        const double* xp = xv->val.data.data() + (size_t)i * in_f;
        for (int o = 0; o < out_f; ++o) {
          const double g = gy[(size_t)i * out_f + o];
          if (g == 0.0) continue;
          double* gwp = gw.data.data() + (size_t)o * in_f;
          for (int j = 0; j < in_f; ++j) gwp[j] += g * xp[j];
        }
      }
    }
    if (xv->needs_grad) {
      Tensor& gx = xv->ensure_grad();
      for (int i = 0; i < b; ++i) {
        double* gxp = gx.data.data() + (size_t)i * in_f;
        for (int o = 0; o < out_f; ++o) {
          const double g = gy[(size_t)i * out_f + o];
          if (g == 0.0) continue;
          const double* wp = wv->val.data.data() + (size_t)o * in_f;
          for (int j = 0; j < in_f; ++j) gxp[j] += g * wp[j];
        }
      }
    }
  });
}

Var masked_l1_batch(Tape& t, const Var& em, const Var& ef, const Tensor& mask) {
  require(em->val.rank() == 4 && ef->val.rank() == 4, "masked_l1_batch: rank-4 inputs");
  const int b = em->val.dim(0), c = em->val.dim(1);
  const int h = em->val.dim(2), w = em->val.dim(3);
  require(ef->val.dim(0) == 1 && ef->val.dim(1) == c && ef->val.dim(2) == h &&
              ef->val.dim(3) == w,
          "masked_l1_batch: fixed features shape mismatch");
  require(mask.rank() == 3 && mask.dim(0) == b && mask.dim(1) == h && mask.dim(2) == w,
          "masked_l1_batch: mask shape mismatch");

  const size_t plane = (size_t)h * w;
  std::vector<double> denom(b);
  Tensor out({b});
  for (int i = 0; i < b; ++i) {
    const double* mp = mask.data.data() + (size_t)i * plane;
    double msum = 0;
    for (size_t p = 0; p < plane; ++p) msum += mp[p];
    if (msum <= 0.0) throw EmptyMask("masked_l1_batch: empty mask plane");
    denom[i] = (double)c * msum;  // sum of the mask stacked across channels
    double acc = 0;
    for (int ch = 0; ch < c; ++ch) {
      const double* ep = em->val.data.data() + ((size_t)i * c + ch) * plane;
      const double* fp = ef->val.data.data() + (size_t)ch * plane;
      for (size_t p = 0; p < plane; ++p) acc += mp[p] * std::abs(ep[p] - fp[p]);
    }
    out[(size_t)i] = acc / denom[i];
  }

  const Tensor mask_copy = mask;
  return t.make("masked_l1_batch", std::move(out), {em, ef},
                [em, ef, mask_copy, denom, b, c, plane](Node& n) {
    for (int i = 0; i < b; ++i) {
      const double g = n.grad[(size_t)i];
      if (g == 0.0) continue;
      const double* mp = mask_copy.data.data() + (size_t)i * plane;
      for (int ch = 0; ch < c; ++ch) {
        const double* ep = em->val.data.data() + ((size_t)i * c + ch) * plane;
        const double* fp = ef->val.data.data() + (size_t)ch * plane;
        for (size_t p = 0; p < plane; ++p) {
          const double diff = ep[p] - fp[p];
          const double s = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
          const double gv = g * mp[p] * s / denom[i];
          if (em->needs_grad) em->ensure_grad()[((size_t)i * c + ch) * plane + p] += gv;
          if (ef->needs_grad) ef->ensure_grad()[(size_t)ch * plane + p] -= gv;
        }
      }
    }
  });
}

}  // namespace reg23::nn
