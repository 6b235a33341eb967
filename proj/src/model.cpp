#include "svae/model.hpp"

#include <cmath>

#include "svae/errors.hpp"

namespace svae {

MlpParams init_mlp(const std::vector<std::size_t>& dims, Rng& rng) {
  MlpParams mlp;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    std::size_t in = dims[l], out = dims[l + 1];
    Tensor w({in, out});
    double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = (2.0 * rng.u01() - 1.0) * bound;
    mlp.weights.push_back(std::move(w));
    mlp.biases.push_back(Tensor::zeros({out}));
  }
  return mlp;
}

namespace {

std::vector<std::size_t> layer_dims(std::size_t in, std::size_t hidden, std::size_t layers,
                                    std::size_t out) {
  std::vector<std::size_t> dims{in};
  for (std::size_t i = 0; i < layers; ++i) dims.push_back(hidden);
  dims.push_back(out);
  return dims;
}

}  // namespace

GeneratorParams make_spatial_generator(std::size_t z_dim, std::size_t hidden_dim,
                                       std::size_t hidden_layers, PixelModel pm,
                                       bool clamp_nonneg_mean, Rng& rng) {
  GeneratorParams g;
  g.kind = GeneratorKind::kSpatial;
  g.pixel_model = pm;
  g.clamp_nonneg_mean = clamp_nonneg_mean;
  g.z_dim = z_dim;
  std::size_t out = pm == PixelModel::kBinary ? 1 : 2;
  g.mlp = init_mlp(layer_dims(2 + z_dim, hidden_dim, hidden_layers, out), rng);
  return g;
}

GeneratorParams make_vanilla_generator(std::size_t z_dim, std::size_t n_pixels,
                                       std::size_t hidden_dim, std::size_t hidden_layers,
                                       PixelModel pm, bool clamp_nonneg_mean, Rng& rng) {
  GeneratorParams g;
  g.kind = GeneratorKind::kVanilla;
  g.pixel_model = pm;
  g.clamp_nonneg_mean = clamp_nonneg_mean;
  g.z_dim = z_dim;
  g.n_pixels = n_pixels;
  std::size_t out = (pm == PixelModel::kBinary ? 1 : 2) * n_pixels;
  g.mlp = init_mlp(layer_dims(z_dim, hidden_dim, hidden_layers, out), rng);
  return g;
}

InferenceParams make_inference(std::size_t n_pixels, std::size_t z_dim, bool do_rotation,
                               bool do_translation, std::size_t hidden_dim,
                               std::size_t hidden_layers, Rng& rng) {
  InferenceParams e;
  e.n_pixels = n_pixels;
  e.z_dim = z_dim;
  e.do_rotation = do_rotation;
  e.do_translation = do_translation;
  e.mlp = init_mlp(layer_dims(n_pixels, hidden_dim, hidden_layers, 2 * e.latent_count()), rng);
  return e;
}

Tensor mlp_forward(const MlpParams& mlp, const Tensor& input) {
  Tensor h = input;
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    Tensor y = matmul(h, mlp.weights[l]);
    const Tensor& b = mlp.biases[l];
    std::size_t m = b.size();
    parallel_for(y.rows(), [&](std::size_t lo, std::size_t hi) {
      for (std::size_t r = lo; r < hi; ++r) {
        for (std::size_t c = 0; c < m; ++c) y[r * m + c] += b[c];
      }
    });
    if (l + 1 < mlp.weights.size()) tanh_inplace(y);
    h = std::move(y);
  }
  return h;
}

namespace {

// Turns a raw head output [n, 1] or [n, 2] into pixel distribution params.
PixelDistribution apply_head(Tensor raw, PixelModel pm, bool clamp_nonneg_mean) {
  PixelDistribution d;
  d.model = pm;
  std::size_t n = raw.rows();
  if (pm == PixelModel::kBinary) {
    d.probs = Tensor({n}, std::vector<double>(raw.vec()));
    sigmoid_inplace(d.probs);
  } else {
    d.mean = Tensor({n});
    d.sigma = Tensor({n});
    for (std::size_t i = 0; i < n; ++i) {
      double mu = raw[2 * i];
      if (clamp_nonneg_mean) mu = mu < 0.0 ? 0.0 : mu;
      d.mean[i] = mu;
      d.sigma[i] = clamp_scalar(raw[2 * i + 1], -kLogSigmaClamp, kLogSigmaClamp);
    }
    exp_inplace(d.sigma);
  }
  return d;
}

}  // namespace

PixelDistribution generator_forward(const Tensor& coords, const Tensor& z,
                                    const GeneratorParams& g) {
  if (g.kind != GeneratorKind::kSpatial) throw ShapeError("generator_forward: not a spatial generator");
  if (z.size() != g.z_dim) {
    throw ShapeError("generator_forward: z dim " + std::to_string(z.size()) + " != " +
                     std::to_string(g.z_dim));
  }
  if (coords.ndim() != 2 || coords.cols() != 2) {
    throw ShapeError("generator_forward: coords must be [n,2], got " + coords.shape_str());
  }
  std::size_t n = coords.rows();
  Tensor input({n, 2 + g.z_dim});
  for (std::size_t i = 0; i < n; ++i) {
    double* row = input.data() + i * (2 + g.z_dim);
    row[0] = coords[2 * i];
    row[1] = coords[2 * i + 1];
    for (std::size_t j = 0; j < g.z_dim; ++j) row[2 + j] = z[j];
  }
  return apply_head(mlp_forward(g.mlp, input), g.pixel_model, g.clamp_nonneg_mean);
}

PixelDistribution vanilla_generator_forward(const Tensor& z, const GeneratorParams& g) {
  if (g.kind != GeneratorKind::kVanilla) {
    throw ShapeError("vanilla_generator_forward: not a vanilla generator");
  }
  if (z.size() != g.z_dim) {
    throw ShapeError("vanilla_generator_forward: z dim " + std::to_string(z.size()) + " != " +
                     std::to_string(g.z_dim));
  }
  Tensor input({1, g.z_dim}, std::vector<double>(z.vec()));
  Tensor raw = mlp_forward(g.mlp, input);
  std::size_t n = g.n_pixels;
  PixelDistribution d;
  d.model = g.pixel_model;
  if (g.pixel_model == PixelModel::kBinary) {
    d.probs = Tensor({n}, std::vector<double>(raw.vec()));
    sigmoid_inplace(d.probs);
  } else {
    // Layout [mean(0..n), logsigma(0..n)].
    d.mean = Tensor({n});
    d.sigma = Tensor({n});
    for (std::size_t i = 0; i < n; ++i) {
      double mu = raw[i];
      if (g.clamp_nonneg_mean) mu = mu < 0.0 ? 0.0 : mu;
      d.mean[i] = mu;
      d.sigma[i] = clamp_scalar(raw[n + i], -kLogSigmaClamp, kLogSigmaClamp);
    }
    exp_inplace(d.sigma);
  }
  return d;
}

Posterior encoder_forward(const Tensor& image, const InferenceParams& enc) {
  if (image.size() != enc.n_pixels) {
    throw ShapeError("encoder_forward: image size " + std::to_string(image.size()) + " != " +
                     std::to_string(enc.n_pixels));
  }
  Tensor input({1, enc.n_pixels}, std::vector<double>(image.vec()));
  Tensor raw = mlp_forward(enc.mlp, input);
  std::size_t L = enc.latent_count();
  Posterior post;
  post.mu_z = Tensor({enc.z_dim});
  post.sigma_z = Tensor({enc.z_dim});
  auto sig = [&](std::size_t k) {
    return std::exp(clamp_scalar(raw[L + k], -kLogSigmaClamp, kLogSigmaClamp));
  };
  std::size_t k = 0;
  for (std::size_t j = 0; j < enc.z_dim; ++j, ++k) {
    post.mu_z[j] = raw[k];
    post.sigma_z[j] = sig(k);
  }
  if (enc.do_rotation) {
    post.mu_theta = raw[k];
    post.sigma_theta = sig(k);
    ++k;
  }
  if (enc.do_translation) {
    post.mu_dx = std::array<double, 2>{raw[k], raw[k + 1]};
    post.sigma_dx = std::array<double, 2>{sig(k), sig(k + 1)};
    k += 2;
  }
  return post;
}

LatentSample reparameterize(const Posterior& post, const std::vector<double>& noise) {
  std::size_t z_dim = post.mu_z.size();
  std::size_t need = z_dim + (post.mu_theta ? 1 : 0) + (post.mu_dx ? 2 : 0);
  if (noise.size() != need) {
    throw ShapeError("reparameterize: need " + std::to_string(need) + " noise draws, got " +
                     std::to_string(noise.size()));
  }
  LatentSample s;
  s.noise = noise;
  s.z = Tensor({z_dim});
  std::size_t k = 0;
  for (std::size_t j = 0; j < z_dim; ++j, ++k) s.z[j] = post.mu_z[j] + post.sigma_z[j] * noise[k];
  if (post.mu_theta) {
    s.theta = *post.mu_theta + *post.sigma_theta * noise[k];
    ++k;
  }
  if (post.mu_dx) {
    s.dx[0] = (*post.mu_dx)[0] + (*post.sigma_dx)[0] * noise[k];
    s.dx[1] = (*post.mu_dx)[1] + (*post.sigma_dx)[1] * noise[k + 1];
    k += 2;
  }
  return s;
}

PixelDistribution decode_image(const LatentSample& s, const CoordGrid& grid,
                               const GeneratorParams& g) {
  return generator_forward(transform_coords(grid.coords, s.theta, s.dx), s.z, g);
}

std::vector<std::string> param_names(const ModelParams& m) {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < m.gen.mlp.weights.size(); ++l) {
    names.push_back("gen.W" + std::to_string(l));
    names.push_back("gen.b" + std::to_string(l));
  }
  for (std::size_t l = 0; l < m.enc.mlp.weights.size(); ++l) {
    names.push_back("enc.W" + std::to_string(l));
    names.push_back("enc.b" + std::to_string(l));
  }
  return names;
}

std::vector<Tensor*> param_ptrs(ModelParams& m) {
  std::vector<Tensor*> out;
  for (std::size_t l = 0; l < m.gen.mlp.weights.size(); ++l) {
    out.push_back(&m.gen.mlp.weights[l]);
    out.push_back(&m.gen.mlp.biases[l]);
  }
  for (std::size_t l = 0; l < m.enc.mlp.weights.size(); ++l) {
    out.push_back(&m.enc.mlp.weights[l]);
    out.push_back(&m.enc.mlp.biases[l]);
  }
  return out;
}

std::vector<const Tensor*> param_ptrs(const ModelParams& m) {
  std::vector<const Tensor*> out;
  for (std::size_t l = 0; l < m.gen.mlp.weights.size(); ++l) {
    out.push_back(&m.gen.mlp.weights[l]);
    out.push_back(&m.gen.mlp.biases[l]);
  }
  for (std::size_t l = 0; l < m.enc.mlp.weights.size(); ++l) {
    out.push_back(&m.enc.mlp.weights[l]);
    out.push_back(&m.enc.mlp.biases[l]);
  }
  return out;
}

}  // namespace svae
