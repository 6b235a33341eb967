#include "svae/gradcheck.hpp"

#include <cmath>

#include "svae/errors.hpp"

namespace svae {

namespace {

double eval_loss(const LossBuilder& f, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<VarId> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(tape.param(p));
  double v = tape.value(f(tape, vars)).item();
  if (!std::isfinite(v)) throw NumericError("finite_diff_check: loss is not finite");
  return v;
}

}  // namespace

double finite_diff_check(const LossBuilder& f, const std::vector<Tensor>& params, double eps) {
  if (!(eps > 0.0)) throw NumericError("finite_diff_check: eps must be positive");

  Tape tape;
  std::vector<VarId> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(tape.param(p));
  VarId loss = f(tape, vars);
  if (!std::isfinite(tape.value(loss).item())) {
    throw NumericError("finite_diff_check: loss is not finite");
  }
  tape.backprop(loss);
  std::vector<Tensor> analytic;
  analytic.reserve(vars.size());
  for (VarId v : vars) analytic.push_back(tape.grad(v));

  double worst = 0.0;
  std::vector<Tensor> probe = params;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    for (std::size_t i = 0; i < probe[k].size(); ++i) {
      double orig = probe[k][i];
      probe[k][i] = orig + eps;
      double up = eval_loss(f, probe);
      probe[k][i] = orig - eps;
      double down = eval_loss(f, probe);
      probe[k][i] = orig;
      double fd = (up - down) / (2.0 * eps);
      double ga = analytic[k][i];
      double err = std::abs(ga - fd) / std::max(1e-8, std::abs(ga) + std::abs(fd));
      if (err > worst) worst = err;
    }
  }
  return worst;
}

}  // namespace svae
