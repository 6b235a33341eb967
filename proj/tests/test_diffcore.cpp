#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "svae/adam.hpp"
#include "svae/errors.hpp"
#include "svae/gradcheck.hpp"
#include "svae/rng.hpp"
#include "svae/tape.hpp"
#include "svae/tensor.hpp"

using namespace svae;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * (2.0 * rng.u01() - 1.0);
  return t;
}

}  // namespace

TEST_CASE("linear identity and row selection") {
  Tape t;
  VarId x = t.constant(Tensor({1, 2}, {1.0, 2.0}));
  VarId w = t.param(Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0}));
  VarId b = t.param(Tensor({2}, {0.0, 0.0}));
  VarId y = t.linear(x, w, b);
  CHECK(t.value(y)[0] == 1.0);
  CHECK(t.value(y)[1] == 2.0);

  Tape t2;
  VarId x2 = t2.constant(Tensor({1, 2}, {1.0, 0.0}));
  VarId w2 = t2.param(Tensor({2, 2}, {3.0, 4.0, 5.0, 6.0}));
  VarId b2 = t2.param(Tensor({2}, {1.0, 1.0}));
  VarId y2 = t2.linear(x2, w2, b2);
  CHECK(t2.value(y2)[0] == 4.0);
  CHECK(t2.value(y2)[1] == 5.0);
}

TEST_CASE("linear bias gradient is all ones under sum") {
  Tape t;
  VarId x = t.constant(Tensor({3, 2}, {0.5, -1.0, 2.0, 0.25, -0.75, 1.5}));
  VarId w = t.param(Tensor({2, 2}, {0.1, 0.2, 0.3, 0.4}));
  VarId b = t.param(Tensor({2}, {0.0, 0.0}));
  VarId loss = t.sum(t.linear(x, w, b));
  t.backprop(loss);
  const Tensor& gb = t.grad(b);
  CHECK(gb[0] == 3.0);  // one per row
  CHECK(gb[1] == 3.0);
}

TEST_CASE("linear shape mismatch throws") {
  Tape t;
  VarId x = t.constant(Tensor({1, 3}));
  VarId w = t.param(Tensor({2, 2}));
  VarId b = t.param(Tensor({2}));
  CHECK_THROWS_AS(t.linear(x, w, b), ShapeError);
}

TEST_CASE("tanh value and gradient") {
  Tape t;
  VarId x = t.param(Tensor({3}, {0.0, 20.0, -20.0}));
  VarId y = t.tanh_act(x);
  CHECK(t.value(y)[0] == 0.0);
  CHECK(t.value(y)[1] == doctest::Approx(1.0).epsilon(1e-12));
  VarId loss = t.sum(y);
  t.backprop(loss);
  CHECK(t.grad(x)[0] == 1.0);               // 1 - tanh^2(0)
  CHECK(std::abs(t.grad(x)[1]) <= 1e-12);   // saturated
}

TEST_CASE("backprop of w^2") {
  Tape t;
  VarId w = t.param(Tensor::scalar(3.0));
  VarId loss = t.square(w);
  t.backprop(loss);
  CHECK(t.grad(w)[0] == 6.0);
}

TEST_CASE("backprop non-scalar loss throws") {
  Tape t;
  VarId w = t.param(Tensor({2}, {1.0, 2.0}));
  CHECK_THROWS_AS(t.backprop(w), ShapeError);
}

TEST_CASE("unused parameter gets a zero gradient") {
  Tape t;
  VarId w = t.param(Tensor::scalar(3.0));
  VarId unused = t.param(Tensor({2}, {1.0, 2.0}));
  t.backprop(t.square(w));
  CHECK(t.grad(unused)[0] == 0.0);
  CHECK(t.grad(unused)[1] == 0.0);
}

TEST_CASE("sum(tanh(linear)) matches central differences") {
  Rng rng(7);
  Tensor x = random_tensor({4, 3}, rng);
  std::vector<Tensor> params = {random_tensor({3, 5}, rng), random_tensor({5}, rng, 0.1)};
  auto build = [&](Tape& t, const std::vector<VarId>& vars) {
    VarId xv = t.constant(x);
    return t.sum(t.tanh_act(t.linear(xv, vars[0], vars[1])));
  };
  CHECK(finite_diff_check(build, params, 1e-5) <= 1e-4);
}

TEST_CASE("finite_diff_check exact on quadratic form") {
  Rng rng(11);
  std::vector<Tensor> params = {random_tensor({6}, rng)};
  auto build = [](Tape& t, const std::vector<VarId>& vars) { return t.sum(t.square(vars[0])); };
  CHECK(finite_diff_check(build, params, 1e-5) <= 1e-8);
}

TEST_CASE("finite_diff_check rejects zero eps") {
  std::vector<Tensor> params = {Tensor::scalar(1.0)};
  auto build = [](Tape& t, const std::vector<VarId>& vars) { return t.square(vars[0]); };
  CHECK_THROWS_AS(finite_diff_check(build, params, 0.0), NumericError);
}

TEST_CASE("forward and backward are deterministic") {
  for (int run = 0; run < 2; ++run) {
    static double first_loss = 0.0, first_grad = 0.0;
    Rng rng(42);
    Tensor x = random_tensor({8, 4}, rng);
    Tensor w = random_tensor({4, 4}, rng);
    Tensor b = random_tensor({4}, rng);
    Tape t;
    VarId loss = t.sum(t.sigmoid(t.linear(t.constant(x), t.param(w), t.param(b))));
    double lv = t.value(loss).item();
    t.backprop(loss);
    double gv = t.grad(1)[0];
    if (run == 0) {
      first_loss = lv;
      first_grad = gv;
    } else {
      CHECK(lv == first_loss);
      CHECK(gv == first_grad);
    }
  }
}

TEST_CASE("matmul results do not depend on thread count") {
  Rng rng(3);
  Tensor a = random_tensor({300, 17}, rng);
  Tensor b = random_tensor({17, 23}, rng);
  int saved = thread_count();
  set_threads(1);
  Tensor r1 = matmul(a, b);
  set_threads(2);
  Tensor r2 = matmul(a, b);
  set_threads(saved);
  for (std::size_t i = 0; i < r1.size(); ++i) CHECK(r1[i] == r2[i]);
}

// Per-operation gradient property: analytic vs central differences over many
// random seeds and every differentiable op.
TEST_CASE("per-op gradients match finite differences over 100 seeds") {
  struct OpCase {
    const char* name;
    std::size_t n_params;
    LossBuilder build;
  };
  std::vector<OpCase> cases;
  cases.push_back({"linear", 3, [](Tape& t, const std::vector<VarId>& v) {
                     return t.sum(t.linear(v[0], v[1], v[2]));
                   }});
  cases.push_back({"tanh", 1, [](Tape& t, const std::vector<VarId>& v) {
                     return t.sum(t.tanh_act(v[0]));
                   }});
  cases.push_back({"sigmoid", 1, [](Tape& t, const std::vector<VarId>& v) {
                     return t.sum(t.sigmoid(v[0]));
                   }});
  cases.push_back({"exp", 1, [](Tape& t, const std::vector<VarId>& v) {
                     return t.sum(t.exp(v[0]));
                   }});
  cases.push_back({"cos", 1, [](Tape& t, const std::vector<VarId>& v) {
                     return t.sum(t.cos(v[0]));
                   }});
  cases.push_back({"sin", 1, [](Tape& t, const std::vector<VarId>& v) {
                     return t.sum(t.sin(v[0]));
                   }});
  cases.push_back({"square", 1, [](Tape& t, const std::vector<VarId>& v) {
                     return t.sum(t.square(v[0]));
                   }});
  cases.push_back({"mul_add_sub", 2, [](Tape& t, const std::vector<VarId>& v) {
                     return t.sum(t.mul(t.add(v[0], v[1]), t.sub(v[0], v[1])));
                   }});
  cases.push_back({"affine", 1, [](Tape& t, const std::vector<VarId>& v) {
                     return t.sum(t.affine(v[0], 2.5, -0.75));
                   }});
  cases.push_back({"slice_hcat", 2, [](Tape& t, const std::vector<VarId>& v) {
                     VarId h = t.hcat({v[0], v[1]});
                     return t.sum(t.square(t.slice_cols(h, 1, 4)));
                   }});
  cases.push_back({"outer_repeat", 2, [](Tape& t, const std::vector<VarId>& v) {
                     VarId o = t.outer_rows(v[0], Tensor({3}, {0.5, -1.0, 2.0}));
                     VarId r = t.repeat_rows(v[1], 3);
                     return t.sum(t.mul(t.hcat({o, o}), r));
                   }});
  cases.push_back({"bernoulli", 1, [](Tape& t, const std::vector<VarId>& v) {
                     Tensor y({6});
                     for (std::size_t i = 0; i < 6; ++i) y[i] = (i % 2) ? 1.0 : 0.0;
                     return t.bernoulli_loglik(y, t.sigmoid(v[0]));
                   }});
  cases.push_back({"gaussian", 2, [](Tape& t, const std::vector<VarId>& v) {
                     Tensor y({6});
                     for (std::size_t i = 0; i < 6; ++i) y[i] = 0.3 * static_cast<double>(i) - 1.0;
                     return t.gaussian_loglik(y, v[0], t.exp(t.clamp(v[1], -7.0, 7.0)));
                   }});

  for (const OpCase& c : cases) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng = Rng::keyed(seed, {0xabcd});
      std::vector<Tensor> params;
      for (std::size_t k = 0; k < c.n_params; ++k) {
        if (std::string(c.name) == "linear") {
          if (k == 0) params.push_back(random_tensor({4, 3}, rng));
          if (k == 1) params.push_back(random_tensor({3, 2}, rng));
          if (k == 2) params.push_back(random_tensor({2}, rng));
        } else if (std::string(c.name) == "slice_hcat") {
          params.push_back(random_tensor({4, 3}, rng));
        } else if (std::string(c.name) == "outer_repeat") {
          if (k == 0) params.push_back(random_tensor({4, 1}, rng));
          if (k == 1) params.push_back(random_tensor({4, 2}, rng));
        } else {
          params.push_back(random_tensor({2, 3}, rng));
        }
      }
      worst = std::max(worst, finite_diff_check(c.build, params, 1e-5));
    }
    INFO(c.name);
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("adam zero gradient is identity") {
  Tensor p({3}, {1.0, -2.0, 0.5});
  Tensor orig = p;
  std::vector<Tensor*> params = {&p};
  AdamState st = AdamState::init({&p}, AdamConfig{});
  std::vector<Tensor> grads = {Tensor::zeros({3})};
  adam_step(params, grads, st);
  adam_step(params, grads, st);
  for (std::size_t i = 0; i < 3; ++i) CHECK(p[i] == orig[i]);
  CHECK(st.step == 2);
}

TEST_CASE("adam first step matches the update formula") {
  AdamConfig cfg;
  cfg.lr = 1e-4;
  double g = 0.5;
  // Oracle: with bias correction at t=1, mhat = g and vhat = g^2, so the
  // update is -lr * g / (|g| + eps).
  double expected_delta = -cfg.lr * g / (std::abs(g) + cfg.eps);

  Tensor p = Tensor::scalar(1.0);
  std::vector<Tensor*> params = {&p};
  AdamState st = AdamState::init({&p}, cfg);
  std::vector<Tensor> grads = {Tensor::scalar(g)};
  adam_step(params, grads, st);
  CHECK(p[0] == doctest::Approx(1.0 + expected_delta).epsilon(1e-12));
  CHECK(std::abs((p[0] - 1.0) - (-cfg.lr)) < 1e-8);  // ~ -lr
}

TEST_CASE("adam is deterministic from identical state") {
  Rng rng(5);
  Tensor a = random_tensor({4}, rng);
  Tensor b = a;
  Tensor g = random_tensor({4}, rng);
  std::vector<Tensor*> pa = {&a}, pb = {&b};
  AdamState sa = AdamState::init({&a}, AdamConfig{});
  AdamState sb = AdamState::init({&b}, AdamConfig{});
  std::vector<Tensor> grads = {g};
  adam_step(pa, grads, sa);
  adam_step(pb, grads, sb);
  for (std::size_t i = 0; i < 4; ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("adam rejects non-finite gradients and shape mismatch") {
  Tensor p({2}, {0.0, 0.0});
  std::vector<Tensor*> params = {&p};
  AdamState st = AdamState::init({&p}, AdamConfig{});
  std::vector<Tensor> bad = {Tensor({2}, {1.0, std::nan("")})};
  CHECK_THROWS_AS(adam_step(params, bad, st), NumericError);
  std::vector<Tensor> wrong = {Tensor({3})};
  CHECK_THROWS_AS(adam_step(params, wrong, st), ShapeError);
}
