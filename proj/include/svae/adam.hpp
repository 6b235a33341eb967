#pragma once

#include <cstdint>
#include <vector>

#include "svae/tensor.hpp"

namespace svae {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Per-parameter first/second moment state, aligned with the parameter list.
struct AdamState {
  AdamConfig cfg;
  std::int64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  static AdamState init(const std::vector<const Tensor*>& params, AdamConfig cfg);
};

/// Standard ADAM update with bias correction. Increments state.step.
/// Throws on shape mismatch or non-finite gradients.
void adam_step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads, AdamState& state);

}  // namespace svae
