#pragma once

#include <functional>
#include <vector>

#include "svae/tape.hpp"
#include "svae/tensor.hpp"

namespace svae {

/// Builds a scalar loss on a fresh tape from the given parameter leaves.
/// Must be deterministic in the parameter values (freeze any noise).
using LossBuilder = std::function<VarId(Tape&, const std::vector<VarId>&)>;

/// Compares the tape's analytic gradients against central finite differences
/// with step eps, coordinate by coordinate. Returns the maximum over all
/// coordinates of |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|).
double finite_diff_check(const LossBuilder& f, const std::vector<Tensor>& params, double eps);

}  // namespace svae
