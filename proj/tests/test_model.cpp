#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "svae/errors.hpp"
#include "svae/model.hpp"
#include "svae/rng.hpp"
#include "svae/tape.hpp"

using namespace svae;

namespace {

void zero_last_layer(MlpParams& mlp) {
  Tensor& w = mlp.weights.back();
  Tensor& b = mlp.biases.back();
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = 0.0;
}

}  // namespace

TEST_CASE("init bounds and zero biases") {
  Rng rng(1);
  MlpParams mlp = init_mlp({10, 20, 3}, rng);
  REQUIRE(mlp.weights.size() == 2);
  double bound0 = std::sqrt(6.0 / 30.0);
  for (std::size_t i = 0; i < mlp.weights[0].size(); ++i) {
    CHECK(std::abs(mlp.weights[0][i]) <= bound0);
  }
  for (std::size_t i = 0; i < mlp.biases[0].size(); ++i) CHECK(mlp.biases[0][i] == 0.0);
}

TEST_CASE("spatial generator with zeroed head emits 0.5 everywhere") {
  Rng rng(2);
  GeneratorParams g = make_spatial_generator(2, 8, 2, PixelModel::kBinary, false, rng);
  zero_last_layer(g.mlp);
  CoordGrid grid = make_grid(4, 4);
  Tensor z({2}, {0.3, -0.7});
  PixelDistribution d = generator_forward(grid.coords, z, g);
  REQUIRE(d.probs.size() == 16);
  for (std::size_t i = 0; i < 16; ++i) CHECK(d.probs[i] == 0.5);
}

TEST_CASE("generator determinism and per-row independence") {
  Rng rng(3);
  GeneratorParams g = make_spatial_generator(2, 8, 2, PixelModel::kBinary, false, rng);
  Tensor z({2}, {0.1, 0.2});
  Tensor coords({3, 2}, {0.0, 0.0, 0.5, -0.5, -1.0, 1.0});
  PixelDistribution a = generator_forward(coords, z, g);
  PixelDistribution b = generator_forward(coords, z, g);
  for (std::size_t i = 0; i < 3; ++i) CHECK(a.probs[i] == b.probs[i]);

  // Permuting coordinate rows permutes outputs identically.
  Tensor perm({3, 2}, {-1.0, 1.0, 0.0, 0.0, 0.5, -0.5});
  PixelDistribution p = generator_forward(perm, z, g);
  CHECK(p.probs[0] == a.probs[2]);
  CHECK(p.probs[1] == a.probs[0]);
  CHECK(p.probs[2] == a.probs[1]);
}

TEST_CASE("real head: positive sigma and nonneg mean clamp") {
  Rng rng(4);
  GeneratorParams g = make_spatial_generator(1, 8, 2, PixelModel::kReal, true, rng);
  CoordGrid grid = make_grid(3, 3);
  Tensor z({1}, {0.5});
  PixelDistribution d = generator_forward(grid.coords, z, g);
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(d.sigma[i] > 0.0);
    CHECK(d.mean[i] >= 0.0);
  }
}

TEST_CASE("vanilla generator baseline") {
  Rng rng(5);
  GeneratorParams g = make_vanilla_generator(2, 28 * 28, 16, 2, PixelModel::kBinary, false, rng);
  Tensor z({2}, {0.0, 0.0});
  PixelDistribution d = vanilla_generator_forward(z, g);
  CHECK(d.probs.size() == 28 * 28);

  zero_last_layer(g.mlp);
  PixelDistribution half = vanilla_generator_forward(z, g);
  for (std::size_t i = 0; i < half.probs.size(); ++i) CHECK(half.probs[i] == 0.5);

  PixelDistribution again = vanilla_generator_forward(z, g);
  for (std::size_t i = 0; i < half.probs.size(); ++i) CHECK(half.probs[i] == again.probs[i]);

  Tensor bad({3});
  CHECK_THROWS_AS(vanilla_generator_forward(bad, g), ShapeError);
}

TEST_CASE("encoder posterior contract") {
  Rng rng(6);
  InferenceParams enc = make_inference(16, 2, true, false, 8, 2, rng);
  zero_last_layer(enc.mlp);
  Tensor img = Tensor::full({16}, 0.25);
  Posterior p = encoder_forward(img, enc);
  CHECK(p.mu_z[0] == 0.0);
  CHECK(p.mu_z[1] == 0.0);
  CHECK(p.sigma_z[0] == 1.0);
  CHECK(p.mu_theta.has_value());
  CHECK(*p.mu_theta == 0.0);
  CHECK(*p.sigma_theta == 1.0);
  CHECK_FALSE(p.mu_dx.has_value());

  Posterior q = encoder_forward(img, enc);
  CHECK(q.mu_z[0] == p.mu_z[0]);

  Tensor wrong({9});
  CHECK_THROWS_AS(encoder_forward(wrong, enc), ShapeError);
}

TEST_CASE("encoder stays finite with extreme inputs") {
  Rng rng(7);
  InferenceParams enc = make_inference(16, 2, true, true, 8, 2, rng);
  for (double scale : {1e3, -1e3}) {
    Tensor img = Tensor::full({16}, scale);
    Posterior p = encoder_forward(img, enc);
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(std::isfinite(p.mu_z[j]));
      CHECK(p.sigma_z[j] > 0.0);
    }
    CHECK(p.sigma_theta.value() > 0.0);
    CHECK((*p.sigma_dx)[0] > 0.0);
  }
}

TEST_CASE("reparameterize: zero noise returns the means") {
  Posterior p;
  p.mu_z = Tensor({2}, {0.4, -0.6});
  p.sigma_z = Tensor({2}, {0.5, 2.0});
  p.mu_theta = 0.2;
  p.sigma_theta = 0.1;
  LatentSample s = reparameterize(p, {0.0, 0.0, 0.0});
  CHECK(s.z[0] == 0.4);
  CHECK(s.z[1] == -0.6);
  CHECK(s.theta == 0.2);
  CHECK(s.dx[0] == 0.0);
  CHECK(s.dx[1] == 0.0);

  // sigma -> 0 limit: the sample collapses to the mean.
  p.sigma_z = Tensor({2}, {1e-300, 1e-300});
  p.sigma_theta = 1e-300;
  LatentSample t = reparameterize(p, {3.0, -2.0, 5.0});
  CHECK(t.z[0] == 0.4);
  CHECK(t.z[1] == -0.6);
  CHECK(t.theta == 0.2);

  CHECK_THROWS_AS(reparameterize(p, {0.0}), ShapeError);
}

TEST_CASE("disabled latents are exactly zero and consume no noise") {
  Posterior p;
  p.mu_z = Tensor({1}, {0.9});
  p.sigma_z = Tensor({1}, {1.0});
  LatentSample s = reparameterize(p, {0.7});
  CHECK(s.theta == 0.0);
  CHECK(s.dx[0] == 0.0);
  CHECK(s.dx[1] == 0.0);
  CHECK(s.noise.size() == 1);
}

TEST_CASE("reparameterization gradients are affine") {
  // d(sample)/d(mu) = 1 and d(sample)/d(sigma) = eps.
  double eps = 0.37;
  Tape t;
  VarId mu = t.param(Tensor::scalar(0.5));
  VarId sigma = t.param(Tensor::scalar(1.2));
  VarId e = t.constant(Tensor::scalar(eps));
  VarId sample = t.add(mu, t.mul(sigma, e));
  t.backprop(sample);
  CHECK(t.grad(mu)[0] == 1.0);
  CHECK(t.grad(sigma)[0] == eps);
}

TEST_CASE("decode_image equals generator on transformed coordinates, bit-exact") {
  Rng rng(8);
  GeneratorParams g = make_spatial_generator(2, 8, 2, PixelModel::kBinary, false, rng);
  CoordGrid grid = make_grid(6, 6);
  for (int trial = 0; trial < 20; ++trial) {
    LatentSample s;
    s.z = Tensor({2}, {rng.normal(), rng.normal()});
    s.theta = rng.normal() * 3.0;
    s.dx = {rng.normal() * 0.3, rng.normal() * 0.3};
    PixelDistribution a = decode_image(s, grid, g);
    PixelDistribution b = generator_forward(transform_coords(grid.coords, s.theta, s.dx), s.z, g);
    for (std::size_t i = 0; i < a.probs.size(); ++i) CHECK(a.probs[i] == b.probs[i]);
  }
}

TEST_CASE("single-coordinate decode matches the definitional identity") {
  Rng rng(9);
  GeneratorParams g = make_spatial_generator(1, 8, 2, PixelModel::kBinary, false, rng);
  Tensor coord({1, 2}, {0.3, -0.4});
  LatentSample s;
  s.z = Tensor({1}, {0.7});
  s.theta = 1.1;
  s.dx = {0.05, -0.02};
  CoordGrid one;
  one.height = 1;
  one.width = 1;
  one.coords = coord;
  PixelDistribution a = decode_image(s, one, g);
  PixelDistribution b = generator_forward(transform_coords(coord, s.theta, s.dx), s.z, g);
  CHECK(a.probs[0] == b.probs[0]);
}
