#include "reg23/nn/layers.hpp"

#include <cmath>

#include "reg23/errors.hpp"

namespace reg23::nn {

void kaiming_init(Param& w, Param& b, int fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / (double)fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : w.value.data) v = dist(rng);
  b.value.fill(0.0);
}

void Conv2D::init(std::mt19937_64& rng) {
  const auto& s = w.value.shape;  // (co, ci, k, k)
  kaiming_init(w, b, s[1] * s[2] * s[3], rng);
}

void Conv3D::init(std::mt19937_64& rng) {
  const auto& s = w.value.shape;  // (co, ci, k, k, k)
  kaiming_init(w, b, s[1] * s[2] * s[3] * s[4], rng);
}

void LinearLayer::init(std::mt19937_64& rng) {
  kaiming_init(w, b, w.value.dim(1), rng);
}

Norm::Norm(const std::string& name, NormKind kind_, int channels_, int groups_)
    : kind(kind_), channels(channels_),
      gamma(name + ".gamma", {channels_}), beta(name + ".beta", {channels_}),
      run_mean({channels_}), run_var({channels_}, 1.0) {
  gamma.value.fill(1.0);
  if (kind == NormKind::Group) {
    groups = groups_ > 0 ? groups_ : std::min(channels_, 4);
    while (channels % groups) --groups;  // must divide
  }
}

namespace {

struct NormAxes {
  int b, c;
  size_t spatial;
};

NormAxes norm_axes(const Tensor& x, int channels) {
  if (x.rank() < 3 || x.dim(1) != channels)
    throw ShapeMismatch("norm: expected (batch, " + std::to_string(channels) +
                        ", spatial...) got " + x.shape_str());
  size_t spatial = 1;
  for (int i = 2; i < x.rank(); ++i) spatial *= (size_t)x.dim(i);
  return {x.dim(0), x.dim(1), spatial};
}

}  // namespace

Var Norm::apply(Tape& t, const Var& xv) {
  const NormAxes ax = norm_axes(xv->val, channels);
  const Var gv = t.use_param(gamma);
  const Var bv = t.use_param(beta);
  const Tensor& x = xv->val;
  const size_t sp = ax.spatial;
  const int b = ax.b, c = ax.c;

  if (kind == NormKind::Batch && training) {
    const double m = (double)b * (double)sp;
    Tensor mean({c}), var({c});
    for (int ch = 0; ch < c; ++ch) {
      double s = 0;
      for (int i = 0; i < b; ++i) {
        const double* xp = x.data.data() + ((size_t)i * c + ch) * sp;
        for (size_t p = 0; p < sp; ++p) s += xp[p];
      }
      mean[(size_t)ch] = s / m;
      double v = 0;
      for (int i = 0; i < b; ++i) {
        const double* xp = x.data.data() + ((size_t)i * c + ch) * sp;
        for (size_t p = 0; p < sp; ++p) {
          const double d = xp[p] - mean[(size_t)ch];
          v += d * d;
        }
      }
      var[(size_t)ch] = v / m;  // biased, also used for the running estimate
      run_mean[(size_t)ch] =
          (1.0 - momentum) * run_mean[(size_t)ch] + momentum * mean[(size_t)ch];
      run_var[(size_t)ch] =
          (1.0 - momentum) * run_var[(size_t)ch] + momentum * var[(size_t)ch];
    }

    auto xhat = std::make_shared<Tensor>(x.shape);
    Tensor inv_s({c});
    Tensor out(x.shape);
    for (int ch = 0; ch < c; ++ch)
      inv_s[(size_t)ch] = 1.0 / std::sqrt(var[(size_t)ch] + eps);
    for (int i = 0; i < b; ++i)
      for (int ch = 0; ch < c; ++ch) {
        const size_t off = ((size_t)i * c + ch) * sp;
        const double mu = mean[(size_t)ch], is = inv_s[(size_t)ch];
        const double g = gv->val[(size_t)ch], be = bv->val[(size_t)ch];
        for (size_t p = 0; p < sp; ++p) {
          const double xh = (x.data[off + p] - mu) * is;
          (*xhat)[off + p] = xh;
          out[off + p] = g * xh + be;
        }
      }

    return t.make("batchnorm", std::move(out), {xv, gv, bv},
                  [xv, gv, bv, xhat, inv_s, b, c, sp, m](Node& n) {
      for (int ch = 0; ch < c; ++ch) {
        double sum_g = 0, sum_gx = 0;
        for (int i = 0; i < b; ++i) {
          const size_t off = ((size_t)i * c + ch) * sp;
          for (size_t p = 0; p < sp; ++p) {
            sum_g += n.grad[off + p];
            sum_gx += n.grad[off + p] * (*xhat)[off + p];
          }
        }
        if (gv->needs_grad) gv->ensure_grad()[(size_t)ch] += sum_gx;
        if (bv->needs_grad) bv->ensure_grad()[(size_t)ch] += sum_g;
        if (xv->needs_grad) {
          Tensor& gx = xv->ensure_grad();
          const double g = gv->val[(size_t)ch];
          const double is = inv_s[(size_t)ch];
          const double mg = sum_g / m, mgx = sum_gx / m;
          for (int i = 0; i < b; ++i) {
            const size_t off = ((size_t)i * c + ch) * sp;
            for (size_t p = 0; p < sp; ++p)
              gx[off + p] +=
                  g * is * (n.grad[off + p] - mg - (*xhat)[off + p] * mgx);
          }
        }
      }
    });
  }

  if (kind == NormKind::Batch) {  // inference with frozen statistics
    Tensor out(x.shape);
    for (int i = 0; i < b; ++i)
      for (int ch = 0; ch < c; ++ch) {
        const size_t off = ((size_t)i * c + ch) * sp;
        const double is = 1.0 / std::sqrt(run_var[(size_t)ch] + eps);
        const double mu = run_mean[(size_t)ch];
        const double g = gv->val[(size_t)ch], be = bv->val[(size_t)ch];
        for (size_t p = 0; p < sp; ++p)
          out[off + p] = g * (x.data[off + p] - mu) * is + be;
      }
    Tensor rm = run_mean, rv = run_var;
    const double e = eps;
    return t.make("batchnorm_eval", std::move(out), {xv, gv, bv},
                  [xv, gv, bv, rm, rv, e, b, c, sp](Node& n) {
      for (int ch = 0; ch < c; ++ch) {
        const double is = 1.0 / std::sqrt(rv[(size_t)ch] + e);
        const double mu = rm[(size_t)ch];
        double sum_g = 0, sum_gx = 0;
        for (int i = 0; i < b; ++i) {
          const size_t off = ((size_t)i * c + ch) * sp;
          for (size_t p = 0; p < sp; ++p) {
            sum_g += n.grad[off + p];
            sum_gx += n.grad[off + p] * (xv->val[off + p] - mu) * is;
          }
        }
        if (gv->needs_grad) gv->ensure_grad()[(size_t)ch] += sum_gx;
        if (bv->needs_grad) bv->ensure_grad()[(size_t)ch] += sum_g;
        if (xv->needs_grad) {
          Tensor& gx = xv->ensure_grad();
          const double g = gv->val[(size_t)ch];
          for (int i = 0; i < b; ++i) {
            const size_t off = ((size_t)i * c + ch) * sp;
            for (size_t p = 0; p < sp; ++p) gx[off + p] += n.grad[off + p] * g * is;
          }
        }
      }
    });
  }

  // Group norm: per (sample, group) statistics; no running state.
  const int cg = c / groups;
  const double m = (double)cg * (double)sp;
  auto xhat = std::make_shared<Tensor>(x.shape);
  Tensor inv_s({b, groups});
  Tensor out(x.shape);
  for (int i = 0; i < b; ++i)
    for (int g = 0; g < groups; ++g) {
      double s = 0;
      for (int ch = g * cg; ch < (g + 1) * cg; ++ch) {
        const size_t off = ((size_t)i * c + ch) * sp;
        for (size_t p = 0; p < sp; ++p) s += x.data[off + p];
      }
      const double mu = s / m;
      double v = 0;
      for (int ch = g * cg; ch < (g + 1) * cg; ++ch) {
        const size_t off = ((size_t)i * c + ch) * sp;
        for (size_t p = 0; p < sp; ++p) {
          const double d = x.data[off + p] - mu;
          v += d * d;
        }
      }
      const double is = 1.0 / std::sqrt(v / m + eps);
      inv_s[(size_t)i * groups + g] = is;
      for (int ch = g * cg; ch < (g + 1) * cg; ++ch) {
        const size_t off = ((size_t)i * c + ch) * sp;
        const double ga = gv->val[(size_t)ch], be = bv->val[(size_t)ch];
        for (size_t p = 0; p < sp; ++p) {
          const double xh = (x.data[off + p] - mu) * is;
          (*xhat)[off + p] = xh;
          out[off + p] = ga * xh + be;
        }
      }
    }

  const int groups_ = groups;
  return t.make("groupnorm", std::move(out), {xv, gv, bv},
                [xv, gv, bv, xhat, inv_s, b, c, cg, sp, m, groups_](Node& n) {
    // Param grads per channel.
    if (gv->needs_grad || bv->needs_grad) {
      for (int ch = 0; ch < c; ++ch) {
        double sum_g = 0, sum_gx = 0;
        for (int i = 0; i < b; ++i) {
          const size_t off = ((size_t)i * c + ch) * sp;
          for (size_t p = 0; p < sp; ++p) {
            sum_g += n.grad[off + p];
            sum_gx += n.grad[off + p] * (*xhat)[off + p];
          }
        }
        if (gv->needs_grad) gv->ensure_grad()[(size_t)ch] += sum_gx;
        if (bv->needs_grad) bv->ensure_grad()[(size_t)ch] += sum_g;
      }
    }
    if (!xv->needs_grad) return;
    Tensor& gx = xv->ensure_grad();
    for (int i = 0; i < b; ++i)
      for (int g = 0; g < groups_; ++g) {
        double sum_t = 0, sum_tx = 0;  // t = gamma_c * gy within the group
        for (int ch = g * cg; ch < (g + 1) * cg; ++ch) {
          const size_t off = ((size_t)i * c + ch) * sp;
          const double ga = gv->val[(size_t)ch];
          for (size_t p = 0; p < sp; ++p) {
            const double tv = ga * n.grad[off + p];
            sum_t += tv;
            sum_tx += tv * (*xhat)[off + p];
          }
        }
        const double is = inv_s[(size_t)i * groups_ + g];
        const double mt = sum_t / m, mtx = sum_tx / m;
        for (int ch = g * cg; ch < (g + 1) * cg; ++ch) {
          const size_t off = ((size_t)i * c + ch) * sp;
          const double ga = gv->val[(size_t)ch];
          for (size_t p = 0; p < sp; ++p) {
            const double tv = ga * n.grad[off + p];
            gx[off + p] += is * (tv - mt - (*xhat)[off + p] * mtx);
          }
        }
      }
  });
}

ResidualBlock2D::ResidualBlock2D(const std::string& name, int in_ch, int out_ch,
                                 NormKind norm, int groups)
    : c1(name + ".c1", in_ch, out_ch, 3, 1, 1),
      c2(name + ".c2", out_ch, out_ch, 3, 1, 1),
      n1(name + ".n1", norm, out_ch, groups),
      n2(name + ".n2", norm, out_ch, groups) {
  if (in_ch != out_ch) {
    has_proj = true;
    proj = Conv2D(name + ".proj", in_ch, out_ch, 1, 1, 0);
    proj_norm = Norm(name + ".projn", norm, out_ch, groups);
  }
}

void ResidualBlock2D::init(std::mt19937_64& rng) {
  c1.init(rng);
  c2.init(rng);
  if (has_proj) proj.init(rng);
}

Var ResidualBlock2D::apply(Tape& t, const Var& x) {
  Var y = relu(t, n1.apply(t, c1.apply(t, x)));
  y = n2.apply(t, c2.apply(t, y));
  Var skip = has_proj ? proj_norm.apply(t, proj.apply(t, x)) : x;
  return relu(t, add(t, y, skip));
}

void ResidualBlock2D::collect(std::vector<Param*>& ps) {
  c1.collect(ps);
  c2.collect(ps);
  n1.collect(ps);
  n2.collect(ps);
  if (has_proj) {
    proj.collect(ps);
    proj_norm.collect(ps);
  }
}

void ResidualBlock2D::collect_norms(std::vector<Norm*>& ns) {
  ns.push_back(&n1);
  ns.push_back(&n2);
  if (has_proj) ns.push_back(&proj_norm);
}

Bottleneck2D::Bottleneck2D(const std::string& name, int in_ch, int out_ch,
                           NormKind norm, int groups) {
  const int mid = std::max(1, out_ch / 2);
  c_in = Conv2D(name + ".cin", in_ch, mid, 1, 1, 0);
  c_mid = Conv2D(name + ".cmid", mid, mid, 3, 1, 1);
  c_out = Conv2D(name + ".cout", mid, out_ch, 1, 1, 0);
  n_in = Norm(name + ".nin", norm, mid, groups);
  n_mid = Norm(name + ".nmid", norm, mid, groups);
  n_out = Norm(name + ".nout", norm, out_ch, groups);
  if (in_ch != out_ch) {
    has_proj = true;
    proj = Conv2D(name + ".proj", in_ch, out_ch, 1, 1, 0);
    proj_norm = Norm(name + ".projn", norm, out_ch, groups);
  }
}

void Bottleneck2D::init(std::mt19937_64& rng) {
  c_in.init(rng);
  c_mid.init(rng);
  c_out.init(rng);
  if (has_proj) proj.init(rng);
}

Var Bottleneck2D::apply(Tape& t, const Var& x) {
  Var y = relu(t, n_in.apply(t, c_in.apply(t, x)));
  y = relu(t, n_mid.apply(t, c_mid.apply(t, y)));
  y = n_out.apply(t, c_out.apply(t, y));
  Var skip = has_proj ? proj_norm.apply(t, proj.apply(t, x)) : x;
  return relu(t, add(t, y, skip));
}

void Bottleneck2D::collect(std::vector<Param*>& ps) {
  c_in.collect(ps);
  c_mid.collect(ps);
  c_out.collect(ps);
  n_in.collect(ps);
  n_mid.collect(ps);
  n_out.collect(ps);
  if (has_proj) {
    proj.collect(ps);
    proj_norm.collect(ps);
  }
}

void Bottleneck2D::collect_norms(std::vector<Norm*>& ns) {
  ns.push_back(&n_in);
  ns.push_back(&n_mid);
  ns.push_back(&n_out);
  if (has_proj) ns.push_back(&proj_norm);
}

}  // namespace reg23::nn
