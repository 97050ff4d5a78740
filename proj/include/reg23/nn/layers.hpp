#pragma once

#include <random>
#include <string>
#include <vector>

#include "reg23/nn/autodiff.hpp"

namespace reg23::nn {

enum class NormKind { Batch, Group };

struct Conv2D {
  Param w, b;
  int stride = 1, pad = 1;

  Conv2D() = default;
  Conv2D(const std::string& name, int in_ch, int out_ch, int k, int stride_, int pad_)
      : w(name + ".w", {out_ch, in_ch, k, k}), b(name + ".b", {out_ch}),
        stride(stride_), pad(pad_) {}

  void init(std::mt19937_64& rng);
  Var apply(Tape& t, const Var& x) {
    return conv2d(t, x, t.use_param(w), t.use_param(b), stride, pad);
  }
  void collect(std::vector<Param*>& ps) {
    ps.push_back(&w);
    ps.push_back(&b);
  }
};

struct Conv3D {
  Param w, b;
  int stride = 1, pad = 1;

  Conv3D() = default;
  Conv3D(const std::string& name, int in_ch, int out_ch, int k, int stride_, int pad_)
      : w(name + ".w", {out_ch, in_ch, k, k, k}), b(name + ".b", {out_ch}),
        stride(stride_), pad(pad_) {}

  void init(std::mt19937_64& rng);
  Var apply(Tape& t, const Var& x) {
    return conv3d(t, x, t.use_param(w), t.use_param(b), stride, pad);
  }
  void collect(std::vector<Param*>& ps) {
    ps.push_back(&w);
    ps.push_back(&b);
  }
};

struct LinearLayer {
  Param w, b;

  LinearLayer() = default;
  LinearLayer(const std::string& name, int in_f, int out_f)
      : w(name + ".w", {out_f, in_f}), b(name + ".b", {out_f}) {}

  void init(std::mt19937_64& rng);
  Var apply(Tape& t, const Var& x) {
    return linear(t, x, t.use_param(w), t.use_param(b));
  }
  void collect(std::vector<Param*>& ps) {
    ps.push_back(&w);
    ps.push_back(&b);
  }
};

/// Channel normalization over rank-4 or rank-5 activations. Batch mode
/// normalizes over (batch, spatial) with running statistics for inference;
/// group mode normalizes per sample over (group channels, spatial) and
/// behaves identically in training and inference.
struct Norm {
  NormKind kind = NormKind::Group;
  int channels = 0;
  int groups = 1;
  double eps = 1e-5;
  double momentum = 0.1;
  bool training = true;

  Param gamma, beta;
  Tensor run_mean, run_var;

  Norm() = default;
  Norm(const std::string& name, NormKind kind_, int channels_, int groups_ = 0);

  Var apply(Tape& t, const Var& x);
  void collect(std::vector<Param*>& ps) {
    ps.push_back(&gamma);
    ps.push_back(&beta);
  }
  void collect_buffers(std::vector<std::pair<std::string, Tensor*>>& bs) {
    if (kind == NormKind::Batch) {
      bs.emplace_back(gamma.name + ".run_mean", &run_mean);
      bs.emplace_back(gamma.name + ".run_var", &run_var);
    }
  }
};

/// conv3x3 -> norm -> relu -> conv3x3 -> norm (+ projected skip) -> relu.
struct ResidualBlock2D {
  Conv2D c1, c2;
  Norm n1, n2;
  bool has_proj = false;
  Conv2D proj;
  Norm proj_norm;

  ResidualBlock2D() = default;
  ResidualBlock2D(const std::string& name, int in_ch, int out_ch, NormKind norm,
                  int groups = 0);

  void init(std::mt19937_64& rng);
  Var apply(Tape& t, const Var& x);
  void collect(std::vector<Param*>& ps);
  void collect_norms(std::vector<Norm*>& ns);
};

/// Residual bottleneck: 1x1 reduce -> 3x3 -> 1x1 expand, each with norm,
/// relu between, projected skip when channel counts differ.
struct Bottleneck2D {
  Conv2D c_in, c_mid, c_out;
  Norm n_in, n_mid, n_out;
  bool has_proj = false;
  Conv2D proj;
  Norm proj_norm;

  Bottleneck2D() = default;
  Bottleneck2D(const std::string& name, int in_ch, int out_ch, NormKind norm,
               int groups = 0);

  void init(std::mt19937_64& rng);
  Var apply(Tape& t, const Var& x);
  void collect(std::vector<Param*>& ps);
  void collect_norms(std::vector<Norm*>& ns);
};

/// Kaiming-uniform fan-in initialization.
void kaiming_init(Param& w, Param& b, int fan_in, std::mt19937_64& rng);

}  // namespace reg23::nn
