#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "reg23/nn/tensor.hpp"

namespace reg23::nn {

/// Learnable tensor with its gradient and SGD momentum state.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor velocity;

  Param() = default;
  Param(std::string n, std::vector<int> shape)
      : name(std::move(n)), value(shape), grad(shape), velocity(shape) {}

  void zero_grad() { grad.fill(0.0); }
};

struct Node;
using Var = std::shared_ptr<Node>;

/// One value in the computation graph. `backward` reads this node's grad
/// and accumulates into its parents' grads.
struct Node {
  Tensor val;
  Tensor grad;  // allocated lazily
  bool needs_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward;

  Tensor& ensure_grad() {
    if (grad.numel() != val.numel()) grad = Tensor(val.shape);
    return grad;
  }
  double scalar() const { return val.data.at(0); }
};

/// Define-by-run tape. Nodes are recorded in creation order, which is a
/// valid topological order for the reverse pass. Every op output is checked
/// for NaN/Inf unless checks are disabled.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true, bool finite_checks = true)
      : grad_enabled_(grad_enabled), finite_checks_(finite_checks) {}

  bool grad_enabled() const { return grad_enabled_; }

  /// Leaf with no gradient.
  Var constant(Tensor v);

  /// Leaf that wants a gradient (used for input-gradient checks).
  Var input(Tensor v, bool needs_grad);

  /// Leaf bound to a Param; accumulate_param_grads() adds the collected
  /// gradient into the Param after backward().
  Var use_param(Param& p);

  /// Records an op node. `bp` may be empty when the node needs no gradient.
  Var make(const char* op_name, Tensor out, std::vector<Var> parents,
           std::function<void(Node&)> bp);

  void backward(const Var& root, const Tensor& seed);
  void backward_scalar(const Var& root, double seed = 1.0);

  /// Adds every recorded param-leaf gradient into its Param::grad.
  void accumulate_param_grads();

 private:
  void check_finite(const char* op_name, const Tensor& t) const;

  std::vector<Var> order_;
  std::vector<std::pair<Param*, Var>> param_uses_;
  bool grad_enabled_;
  bool finite_checks_;
};

// ---- generic ops ----------------------------------------------------------

Var add(Tape& t, const Var& a, const Var& b);        // same shape
Var sub(Tape& t, const Var& a, const Var& b);        // same shape
Var mul(Tape& t, const Var& a, const Var& b);        // elementwise, same shape
Var div(Tape& t, const Var& a, const Var& b);        // elementwise, same shape
Var scale(Tape& t, const Var& a, double c);
Var add_const(Tape& t, const Var& a, double c);
Var relu(Tape& t, const Var& a);
Var abs_op(Tape& t, const Var& a);
Var square(Tape& t, const Var& a);
Var sqrt_op(Tape& t, const Var& a);
Var sum_all(Tape& t, const Var& a);                  // -> shape {1}
Var stack_scalars(Tape& t, const std::vector<Var>& xs);  // n x {1} -> {n}
Var index_scalar(Tape& t, const Var& v, int i);      // {n} -> {1}
Var reshape(Tape& t, const Var& a, std::vector<int> shape);

/// (b, c, d, h, w) -> (b, c*d, h, w); pure reshape, data order unchanged.
Var flatten_3d_to_2d(Tape& t, const Var& a);

/// Concatenates rank-4 tensors along the channel axis.
Var concat_channels(Tape& t, const std::vector<Var>& xs);

/// Nearest-neighbour spatial upsampling by 2 for rank-4 tensors.
Var upsample2_nearest(Tape& t, const Var& a);

// ---- layer kernels --------------------------------------------------------

Var conv2d(Tape& t, const Var& x, const Var& w, const Var& b, int stride, int pad);
Var conv3d(Tape& t, const Var& x, const Var& w, const Var& b, int stride, int pad);
/// Flattens all non-batch axes, then y = x W^T + b.
Var linear(Tape& t, const Var& x, const Var& w, const Var& b);

/// Mask-weighted mean absolute feature difference per batch element:
/// out[i] = sum_chw mask[i,h,w] * |em[i,c,h,w] - ef[0,c,h,w]| /
///          (C * sum_hw mask[i,h,w]).
/// Throws EmptyMask when a mask plane is all zero.
Var masked_l1_batch(Tape& t, const Var& em, const Var& ef, const Tensor& mask);

}  // namespace reg23::nn
