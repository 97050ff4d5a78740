#include "reg23/nn/optim.hpp"

#include "reg23/errors.hpp"

namespace reg23::nn {

double cyclic_lr(const SgdConfig& cfg, int64_t step) {
  if (cfg.cycle_half_steps < 1) throw Error("cyclic_lr: cycle_half_steps must be >= 1");
  if (!(cfg.lr_min > 0) || cfg.lr_min > cfg.lr_max)
    throw Error("cyclic_lr: require 0 < lr_min <= lr_max");
  const int64_t period = 2 * (int64_t)cfg.cycle_half_steps;
  const int64_t pos = step % period;
  const double frac = pos <= cfg.cycle_half_steps
                          ? (double)pos / cfg.cycle_half_steps
                          : (double)(period - pos) / cfg.cycle_half_steps;
  return cfg.lr_min + (cfg.lr_max - cfg.lr_min) * frac;
}

void sgd_step(const std::vector<Param*>& params, const SgdConfig& cfg, int64_t step) {
  const double lr = cyclic_lr(cfg, step);
  for (Param* p : params) {
    if (p->velocity.numel() != p->value.numel()) p->velocity = Tensor(p->value.shape);
    for (size_t i = 0; i < p->value.numel(); ++i) {
      p->velocity[i] = cfg.momentum * p->velocity[i] + p->grad[i];
      p->value[i] -= lr * p->velocity[i];
    }
  }
}

void zero_grads(const std::vector<Param*>& params) {
  for (Param* p : params) p->zero_grad();
}

}  // namespace reg23::nn
