#include "svae/tape.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <memory>

#include "svae/errors.hpp"
#include "svae/model.hpp"
#include "svae/objective.hpp"

namespace svae {

namespace {

// Elementwise map over fixed chunks; deterministic for any thread count.
template <typename F>
void ew(std::size_t n, F&& f) {
  parallel_for(n, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) f(i);
  });
}

using ArrMap = Eigen::Map<Eigen::ArrayXd>;
using ConstArrMap = Eigen::Map<const Eigen::ArrayXd>;

// acc += x, vectorized.
void accum(svae::Tensor& acc, const svae::Tensor& x) {
  svae::parallel_for(acc.size(), [&](std::size_t lo, std::size_t hi) {
    ArrMap a(acc.data() + lo, hi - lo);
    ConstArrMap b(x.data() + lo, hi - lo);
    a += b;
  });
}

constexpr std::size_t kReleaseThreshold = 4096;

}  // namespace

VarId Tape::push(Tensor value, bool requires_grad, bool is_leaf,
                 std::function<void(Tape&, int)> backward) {
  if (ran_backward_) throw NumericError("tape: cannot extend a tape after backprop");
  if (check_finite_) check_finite(value, "tape forward");
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.is_leaf = is_leaf;
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return static_cast<VarId>(nodes_.size() - 1);
}

Tensor& Tape::grad_buf(VarId id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Tensor::zeros(n.value.shape());
  return n.grad;
}

const Tensor& Tape::grad(VarId id) const {
  if (nodes_[id].grad.size() == 0) throw NumericError("tape: no gradient for node");
  return nodes_[id].grad;
}

VarId Tape::constant(Tensor v) { return push(std::move(v), false, true, nullptr); }
VarId Tape::param(Tensor v) { return push(std::move(v), true, true, nullptr); }

VarId Tape::linear(VarId x, VarId W, VarId b) {
  const Tensor& xv = val(x);
  const Tensor& wv = val(W);
  const Tensor& bv = val(b);
  if (xv.cols() != wv.rows() || wv.cols() != bv.size()) {
    throw ShapeError("linear: " + xv.shape_str() + " x " + wv.shape_str() + " + " + bv.shape_str());
  }
  Tensor y = matmul(xv, wv);
  std::size_t m = bv.size();
  ew(y.rows(), [&](std::size_t r) {
    for (std::size_t c = 0; c < m; ++c) y[r * m + c] += bv[c];
  });
  bool rg = requires_grad(x) || requires_grad(W) || requires_grad(b);
  return push(std::move(y), rg, false, [x, W, b](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    if (t.requires_grad(x)) accum(t.grad_buf(x), matmul_nt(g, t.val(W)));
    if (t.requires_grad(W)) accum(t.grad_buf(W), matmul_tn(t.val(x), g));
    if (t.requires_grad(b)) {
      Tensor db = colsum(g);
      Tensor& acc = t.grad_buf(b);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += db[i];
    }
  });
}

VarId Tape::tanh_act(VarId x) {
  Tensor y = val(x);
  tanh_inplace(y);
  return push(std::move(y), requires_grad(x), false, [x](Tape& t, int self) {
    if (!t.requires_grad(x)) return;
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& v = t.val(self);
    Tensor& acc = t.grad_buf(x);
    parallel_for(acc.size(), [&](std::size_t lo, std::size_t hi) {
      ArrMap a(acc.data() + lo, hi - lo);
      ConstArrMap vv(v.data() + lo, hi - lo);
      ConstArrMap gg(g.data() + lo, hi - lo);
      a += (1.0 - vv * vv) * gg;
    });
  });
}

VarId Tape::sigmoid(VarId x) {
  Tensor y = val(x);
  sigmoid_inplace(y);
  return push(std::move(y), requires_grad(x), false, [x](Tape& t, int self) {
    if (!t.requires_grad(x)) return;
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& v = t.val(self);
    Tensor& acc = t.grad_buf(x);
    parallel_for(acc.size(), [&](std::size_t lo, std::size_t hi) {
      ArrMap a(acc.data() + lo, hi - lo);
      ConstArrMap vv(v.data() + lo, hi - lo);
      ConstArrMap gg(g.data() + lo, hi - lo);
      a += vv * (1.0 - vv) * gg;
    });
  });
}

VarId Tape::exp(VarId x) {
  Tensor y = val(x);
  exp_inplace(y);
  return push(std::move(y), requires_grad(x), false, [x](Tape& t, int self) {
    if (!t.requires_grad(x)) return;
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& v = t.val(self);
    Tensor& acc = t.grad_buf(x);
    ew(acc.size(), [&](std::size_t i) { acc[i] += v[i] * g[i]; });
  });
}

VarId Tape::cos(VarId x) {
  Tensor y = val(x);
  ew(y.size(), [&](std::size_t i) { y[i] = std::cos(y[i]); });
  return push(std::move(y), requires_grad(x), false, [x](Tape& t, int self) {
    if (!t.requires_grad(x)) return;
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& xv = t.val(x);
    Tensor& acc = t.grad_buf(x);
    ew(acc.size(), [&](std::size_t i) { acc[i] += -std::sin(xv[i]) * g[i]; });
  });
}

VarId Tape::sin(VarId x) {
  Tensor y = val(x);
  ew(y.size(), [&](std::size_t i) { y[i] = std::sin(y[i]); });
  return push(std::move(y), requires_grad(x), false, [x](Tape& t, int self) {
    if (!t.requires_grad(x)) return;
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& xv = t.val(x);
    Tensor& acc = t.grad_buf(x);
    ew(acc.size(), [&](std::size_t i) { acc[i] += std::cos(xv[i]) * g[i]; });
  });
}

VarId Tape::square(VarId x) {
  Tensor y = val(x);
  ew(y.size(), [&](std::size_t i) { y[i] = y[i] * y[i]; });
  return push(std::move(y), requires_grad(x), false, [x](Tape& t, int self) {
    if (!t.requires_grad(x)) return;
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& xv = t.val(x);
    Tensor& acc = t.grad_buf(x);
    ew(acc.size(), [&](std::size_t i) { acc[i] += 2.0 * xv[i] * g[i]; });
  });
}

VarId Tape::clamp(VarId x, double lo, double hi) {
  Tensor y = val(x);
  ew(y.size(), [&](std::size_t i) { y[i] = clamp_scalar(y[i], lo, hi); });
  return push(std::move(y), requires_grad(x), false, [x, lo, hi](Tape& t, int self) {
    if (!t.requires_grad(x)) return;
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& xv = t.val(x);
    Tensor& acc = t.grad_buf(x);
    ew(acc.size(), [&](std::size_t i) {
      if (xv[i] > lo && xv[i] < hi) acc[i] += g[i];
    });
  });
}

VarId Tape::affine(VarId x, double scale, double shift) {
  Tensor y = val(x);
  ew(y.size(), [&](std::size_t i) { y[i] = scale * y[i] + shift; });
  return push(std::move(y), requires_grad(x), false, [x, scale](Tape& t, int self) {
    if (!t.requires_grad(x)) return;
    const Tensor& g = t.nodes_[self].grad;
    Tensor& acc = t.grad_buf(x);
    ew(acc.size(), [&](std::size_t i) { acc[i] += scale * g[i]; });
  });
}

VarId Tape::add(VarId a, VarId b) {
  if (!val(a).same_shape(val(b))) throw ShapeError("add: shape mismatch");
  Tensor y = val(a);
  const Tensor& bv = val(b);
  ew(y.size(), [&](std::size_t i) { y[i] += bv[i]; });
  bool rg = requires_grad(a) || requires_grad(b);
  return push(std::move(y), rg, false, [a, b](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    for (VarId p : {a, b}) {
      if (!t.requires_grad(p)) continue;
      Tensor& acc = t.grad_buf(p);
      ew(acc.size(), [&](std::size_t i) { acc[i] += g[i]; });
    }
  });
}

VarId Tape::sub(VarId a, VarId b) {
  if (!val(a).same_shape(val(b))) throw ShapeError("sub: shape mismatch");
  Tensor y = val(a);
  const Tensor& bv = val(b);
  ew(y.size(), [&](std::size_t i) { y[i] -= bv[i]; });
  bool rg = requires_grad(a) || requires_grad(b);
  return push(std::move(y), rg, false, [a, b](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    if (t.requires_grad(a)) {
      Tensor& acc = t.grad_buf(a);
      ew(acc.size(), [&](std::size_t i) { acc[i] += g[i]; });
    }
    if (t.requires_grad(b)) {
      Tensor& acc = t.grad_buf(b);
      ew(acc.size(), [&](std::size_t i) { acc[i] -= g[i]; });
    }
  });
}

VarId Tape::mul(VarId a, VarId b) {
  if (!val(a).same_shape(val(b))) throw ShapeError("mul: shape mismatch");
  Tensor y = val(a);
  const Tensor& bv = val(b);
  ew(y.size(), [&](std::size_t i) { y[i] *= bv[i]; });
  bool rg = requires_grad(a) || requires_grad(b);
  return push(std::move(y), rg, false, [a, b](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    if (t.requires_grad(a)) {
      const Tensor& bv2 = t.val(b);
      Tensor& acc = t.grad_buf(a);
      ew(acc.size(), [&](std::size_t i) { acc[i] += bv2[i] * g[i]; });
    }
    if (t.requires_grad(b)) {
      const Tensor& av = t.val(a);
      Tensor& acc = t.grad_buf(b);
      ew(acc.size(), [&](std::size_t i) { acc[i] += av[i] * g[i]; });
    }
  });
}

VarId Tape::sum(VarId x) {
  const Tensor& xv = val(x);
  double total = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) total += xv[i];
  return push(Tensor::scalar(total), requires_grad(x), false, [x](Tape& t, int self) {
    if (!t.requires_grad(x)) return;
    double g = t.nodes_[self].grad[0];
    Tensor& acc = t.grad_buf(x);
    ew(acc.size(), [&](std::size_t i) { acc[i] += g; });
  });
}

VarId Tape::slice_cols(VarId x, std::size_t c0, std::size_t c1) {
  const Tensor& xv = val(x);
  std::size_t n = xv.rows(), m = xv.cols();
  if (c0 >= c1 || c1 > m) throw ShapeError("slice_cols: bad range");
  std::size_t w = c1 - c0;
  Tensor y({n, w});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < w; ++c) y[r * w + c] = xv[r * m + c0 + c];
  }
  return push(std::move(y), requires_grad(x), false, [x, c0, w](Tape& t, int self) {
    if (!t.requires_grad(x)) return;
    const Tensor& g = t.nodes_[self].grad;
    Tensor& acc = t.grad_buf(x);
    std::size_t m2 = acc.cols();
    std::size_t n2 = acc.rows();
    for (std::size_t r = 0; r < n2; ++r) {
      for (std::size_t c = 0; c < w; ++c) acc[r * m2 + c0 + c] += g[r * w + c];
    }
  });
}

VarId Tape::hcat(const std::vector<VarId>& xs) {
  if (xs.empty()) throw ShapeError("hcat: empty");
  std::size_t n = val(xs[0]).rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (VarId id : xs) {
    if (val(id).rows() != n) throw ShapeError("hcat: row mismatch");
    widths.push_back(val(id).cols());
    total += widths.back();
  }
  Tensor y({n, total});
  bool rg = false;
  std::size_t off = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Tensor& xv = val(xs[k]);
    std::size_t w = widths[k];
    ew(n, [&](std::size_t r) {
      for (std::size_t c = 0; c < w; ++c) y[r * total + off + c] = xv[r * w + c];
    });
    off += w;
    rg = rg || requires_grad(xs[k]);
  }
  return push(std::move(y), rg, false, [xs, widths, total](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    std::size_t n2 = g.rows();
    std::size_t off2 = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      std::size_t w = widths[k];
      if (t.requires_grad(xs[k])) {
        Tensor& acc = t.grad_buf(xs[k]);
        ew(n2, [&](std::size_t r) {
          for (std::size_t c = 0; c < w; ++c) acc[r * w + c] += g[r * total + off2 + c];
        });
      }
      off2 += w;
    }
  });
}

VarId Tape::outer_rows(VarId a, Tensor v) {
  const Tensor& av = val(a);
  std::size_t B = av.size();
  std::size_t P = v.size();
  Tensor y({B * P, 1});
  ew(B, [&](std::size_t i) {
    for (std::size_t p = 0; p < P; ++p) y[i * P + p] = av[i] * v[p];
  });
  auto vptr = std::make_shared<Tensor>(std::move(v));
  return push(std::move(y), requires_grad(a), false, [a, vptr, P](Tape& t, int self) {
    if (!t.requires_grad(a)) return;
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& vv = *vptr;
    Tensor& acc = t.grad_buf(a);
    ew(acc.size(), [&](std::size_t i) {
      double s = 0.0;
      for (std::size_t p = 0; p < P; ++p) s += vv[p] * g[i * P + p];
      acc[i] += s;
    });
  });
}

VarId Tape::repeat_rows(VarId z, std::size_t times) {
  const Tensor& zv = val(z);
  std::size_t B = zv.rows(), d = zv.cols();
  Tensor y({B * times, d});
  ew(B, [&](std::size_t i) {
    for (std::size_t r = 0; r < times; ++r) {
      for (std::size_t c = 0; c < d; ++c) y[(i * times + r) * d + c] = zv[i * d + c];
    }
  });
  return push(std::move(y), requires_grad(z), false, [z, times](Tape& t, int self) {
    if (!t.requires_grad(z)) return;
    const Tensor& g = t.nodes_[self].grad;
    Tensor& acc = t.grad_buf(z);
    std::size_t B2 = acc.rows(), d2 = acc.cols();
    ew(B2, [&](std::size_t i) {
      for (std::size_t r = 0; r < times; ++r) {
        for (std::size_t c = 0; c < d2; ++c) acc[i * d2 + c] += g[(i * times + r) * d2 + c];
      }
    });
  });
}

VarId Tape::bernoulli_loglik(Tensor y, VarId p) {
  double ll = svae::bernoulli_loglik(y, val(p));
  auto yptr = std::make_shared<Tensor>(std::move(y));
  return push(Tensor::scalar(ll), requires_grad(p), false, [yptr, p](Tape& t, int self) {
    if (!t.requires_grad(p)) return;
    double g = t.nodes_[self].grad[0];
    const Tensor& yv = *yptr;
    const Tensor& pv = t.val(p);
    Tensor& acc = t.grad_buf(p);
    ew(acc.size(), [&](std::size_t i) {
      if (pv[i] <= kProbClamp || pv[i] >= 1.0 - kProbClamp) return;  // clamped: zero grad
      acc[i] += g * (yv[i] / pv[i] - (1.0 - yv[i]) / (1.0 - pv[i]));
    });
  });
}

VarId Tape::gaussian_loglik(Tensor y, VarId mean, VarId sigma) {
  double ll = svae::gaussian_loglik(y, val(mean), val(sigma));
  auto yptr = std::make_shared<Tensor>(std::move(y));
  bool rg = requires_grad(mean) || requires_grad(sigma);
  return push(Tensor::scalar(ll), rg, false, [yptr, mean, sigma](Tape& t, int self) {
    double g = t.nodes_[self].grad[0];
    const Tensor& yv = *yptr;
    const Tensor& mv = t.val(mean);
    const Tensor& sv = t.val(sigma);
    if (t.requires_grad(mean)) {
      Tensor& acc = t.grad_buf(mean);
      ew(acc.size(), [&](std::size_t i) { acc[i] += g * (yv[i] - mv[i]) / (sv[i] * sv[i]); });
    }
    if (t.requires_grad(sigma)) {
      Tensor& acc = t.grad_buf(sigma);
      ew(acc.size(), [&](std::size_t i) {
        double r = yv[i] - mv[i];
        acc[i] += g * (r * r / (sv[i] * sv[i] * sv[i]) - 1.0 / sv[i]);
      });
    }
  });
}

void Tape::backprop(VarId loss) {
  if (ran_backward_) throw NumericError("tape: backprop already ran");
  if (val(loss).size() != 1) throw ShapeError("backprop: loss must be scalar");
  ran_backward_ = true;
  grad_buf(loss)[0] = 1.0;
  for (int i = loss; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.grad.size() > 0 && n.backward) {
      n.backward(*this, i);
    }
    if (!n.is_leaf) {
      if (n.grad.size() > 0) n.grad = Tensor();
      if (n.value.size() > kReleaseThreshold) n.value = Tensor();
    }
  }
  // Parameters untouched by the loss get explicit zero gradients.
  for (Node& n : nodes_) {
    if (n.is_leaf && n.requires_grad && n.grad.size() == 0) n.grad = Tensor::zeros(n.value.shape());
  }
}

}  // namespace svae
