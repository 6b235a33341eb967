#include "svae/adam.hpp"

#include <cmath>

#include "svae/errors.hpp"

namespace svae {

AdamState AdamState::init(const std::vector<const Tensor*>& params, AdamConfig cfg) {
  AdamState st;
  st.cfg = cfg;
  for (const Tensor* p : params) {
    st.m.push_back(Tensor::zeros(p->shape()));
    st.v.push_back(Tensor::zeros(p->shape()));
  }
  return st;
}

void adam_step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw ShapeError("adam_step: parameter/gradient/state count mismatch");
  }
  state.step += 1;
  double t = static_cast<double>(state.step);
  double bc1 = 1.0 - std::pow(state.cfg.beta1, t);
  double bc2 = 1.0 - std::pow(state.cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = grads[k];
    if (!p.same_shape(g) || !p.same_shape(state.m[k])) {
      throw ShapeError("adam_step: shape mismatch at parameter " + std::to_string(k));
    }
    if (!g.all_finite()) throw NumericError("adam_step: non-finite gradient at parameter " + std::to_string(k));
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.cfg.beta1 * m[i] + (1.0 - state.cfg.beta1) * g[i];
      v[i] = state.cfg.beta2 * v[i] + (1.0 - state.cfg.beta2) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p[i] -= state.cfg.lr * mhat / (std::sqrt(vhat) + state.cfg.eps);
    }
  }
}

}  // namespace svae
