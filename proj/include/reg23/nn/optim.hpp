#pragma once

#include <cstdint>
#include <vector>

#include "reg23/nn/autodiff.hpp"

namespace reg23::nn {

/// SGD with momentum and a triangular cyclic learning rate:
/// lr(0) = lr_min, lr(cycle_half_steps) = lr_max, linear both ways,
/// period 2 * cycle_half_steps.
struct SgdConfig {
  double lr_min = 1e-3;
  double lr_max = 1e-2;
  int cycle_half_steps = 100;
  double momentum = 0.9;
};

/// Shared training-loop settings.
struct TrainConfig {
  int batch_size = 16;
  int iterations = 200000;
  SgdConfig sgd;
  uint64_t seed = 1;
};

double cyclic_lr(const SgdConfig& cfg, int64_t step);

/// v = momentum * v + g;  p -= lr(step) * v.
void sgd_step(const std::vector<Param*>& params, const SgdConfig& cfg, int64_t step);

void zero_grads(const std::vector<Param*>& params);

}  // namespace reg23::nn
