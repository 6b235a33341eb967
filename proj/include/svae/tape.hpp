#pragma once

#include <functional>
#include <vector>

#include "svae/tensor.hpp"

namespace svae {

using VarId = int;

/// Reverse-mode tape over dense tensors (define-by-run). Nodes are appended
/// in evaluation order, which is already a topological order, so backprop
/// walks the node list once in reverse. A tape supports a single backward
/// pass; build a fresh tape per training step.
///
/// Memory note: during backprop, gradients and large interior activations
/// are released as soon as no later step can read them. After backprop,
/// value() stays valid for leaves and small nodes, and grad() for any node
/// that received a gradient.
class Tape {
 public:
  VarId constant(Tensor v);
  VarId param(Tensor v);

  // y = x W + b, differentiable w.r.t. all three inputs.
  VarId linear(VarId x, VarId W, VarId b);

  VarId tanh_act(VarId x);
  VarId sigmoid(VarId x);
  VarId exp(VarId x);
  VarId cos(VarId x);
  VarId sin(VarId x);
  VarId square(VarId x);
  VarId clamp(VarId x, double lo, double hi);
  VarId affine(VarId x, double scale, double shift);  // scale*x + shift

  VarId add(VarId a, VarId b);
  VarId sub(VarId a, VarId b);
  VarId mul(VarId a, VarId b);

  VarId sum(VarId x);  // -> scalar node
  VarId slice_cols(VarId x, std::size_t c0, std::size_t c1);
  VarId hcat(const std::vector<VarId>& xs);

  // out[i*P + p] = a[i] * v[p], for a of length B and constant v of length P.
  // Shape [B*P, 1].
  VarId outer_rows(VarId a, Tensor v);

  // Repeats each row of z [B,d] `times` times -> [B*times, d].
  VarId repeat_rows(VarId z, std::size_t times);

  // Fused pixel log-likelihood terms; both return scalar nodes and share the
  // forward kernels with the plain objective functions.
  VarId bernoulli_loglik(Tensor y, VarId p);
  VarId gaussian_loglik(Tensor y, VarId mean, VarId sigma);

  const Tensor& value(VarId id) const { return nodes_[id].value; }
  bool requires_grad(VarId id) const { return nodes_[id].requires_grad; }

  /// Backpropagates from a scalar loss node. Gradients for every reachable
  /// node with requires_grad are accumulated exactly once.
  void backprop(VarId loss);

  bool has_grad(VarId id) const { return nodes_[id].grad.size() > 0; }
  const Tensor& grad(VarId id) const;

  std::size_t node_count() const { return nodes_.size(); }
  void set_check_finite(bool on) { check_finite_ = on; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool is_leaf = false;
    std::function<void(Tape&, int)> backward;
  };

  VarId push(Tensor value, bool requires_grad, bool is_leaf,
             std::function<void(Tape&, int)> backward);
  Tensor& grad_buf(VarId id);
  const Tensor& val(VarId id) const { return nodes_[id].value; }

  std::vector<Node> nodes_;
  bool ran_backward_ = false;
  bool check_finite_ = false;
};

}  // namespace svae
