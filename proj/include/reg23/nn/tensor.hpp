#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

namespace reg23::nn {

/// Dense row-major tensor of doubles, up to 5 axes (batch, channel, spatial).
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(count(shape), 0.0) {}
  Tensor(std::vector<int> s, double fill)
      : shape(std::move(s)), data(count(shape), fill) {}

  static size_t count(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) n *= (size_t)d;
    return n;
  }

  size_t numel() const { return data.size(); }
  int rank() const { return (int)shape.size(); }
  int dim(int i) const { return shape[(size_t)i]; }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  double& operator[](size_t i) { return data[i]; }
  double operator[](size_t i) const { return data[i]; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  std::string shape_str() const {
    std::string s = "(";
    for (size_t i = 0; i < shape.size(); ++i)
      s += (i ? "," : "") + std::to_string(shape[i]);
    return s + ")";
  }
};

}  // namespace reg23::nn
