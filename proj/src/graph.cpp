#include "svae/graph.hpp"

#include <cmath>

#include "svae/errors.hpp"
#include "svae/geometry.hpp"

namespace svae {

BatchNoise draw_batch_noise(std::size_t batch, const InferenceParams& enc, Rng& rng) {
  BatchNoise n;
  n.batch = batch;
  n.per_image = enc.latent_count();
  n.draws.resize(batch * n.per_image);
  for (double& d : n.draws) d = rng.normal();
  return n;
}

namespace {

// mu + sigma * eps for a [B, d] block.
VarId reparam(Tape& t, VarId mu, VarId sigma, Tensor eps) {
  VarId e = t.constant(std::move(eps));
  return t.add(mu, t.mul(sigma, e));
}

// Sum of kl_gaussian terms over a [B, d] block against prior std s:
// -logsigma + log s - 0.5 + (sigma^2 [+ mu^2]) / (2 s^2).
VarId kl_sum_node(Tape& t, VarId logsigma_clamped, VarId sigma, VarId mu_or_neg1, double s) {
  VarId quad = t.square(sigma);
  if (mu_or_neg1 >= 0) quad = t.add(quad, t.square(mu_or_neg1));
  VarId a = t.affine(logsigma_clamped, -1.0, std::log(s) - 0.5);
  VarId b = t.affine(quad, 1.0 / (2.0 * s * s), 0.0);
  return t.sum(t.add(a, b));
}

}  // namespace

BatchGraph build_batch_graph(Tape& tape, const ModelParams& model,
                             const std::vector<VarId>& param_vars, const Tensor& images,
                             const BatchNoise& noise, const GraphOptions& opts) {
  const GeneratorParams& gen = model.gen;
  const InferenceParams& enc = model.enc;
  std::size_t B = images.rows();
  std::size_t n_pix = images.cols();
  if (n_pix != enc.n_pixels) throw ShapeError("build_batch_graph: image size mismatch");
  if (noise.batch != B || noise.per_image != enc.latent_count()) {
    throw ShapeError("build_batch_graph: noise layout mismatch");
  }
  bool augment = !opts.gammas.empty();
  if (augment && !enc.do_rotation) {
    throw ShapeError("build_batch_graph: augmentation requires rotation inference");
  }
  if (augment && opts.gammas.size() != B) throw ShapeError("build_batch_graph: gamma count mismatch");
  if (gen.kind == GeneratorKind::kVanilla && (enc.do_rotation || enc.do_translation)) {
    throw ShapeError("build_batch_graph: vanilla generator cannot infer pose");
  }

  std::size_t n_gen = gen.mlp.weights.size();
  auto gen_w = [&](std::size_t l) { return param_vars[2 * l]; };
  auto gen_b = [&](std::size_t l) { return param_vars[2 * l + 1]; };
  auto enc_w = [&](std::size_t l) { return param_vars[2 * n_gen + 2 * l]; };
  auto enc_b = [&](std::size_t l) { return param_vars[2 * n_gen + 2 * l + 1]; };

  BatchGraph g;
  g.params = param_vars;

  // Encoder.
  VarId h = tape.constant(images);
  for (std::size_t l = 0; l < enc.mlp.weights.size(); ++l) {
    h = tape.linear(h, enc_w(l), enc_b(l));
    if (l + 1 < enc.mlp.weights.size()) h = tape.tanh_act(h);
  }
  std::size_t L = enc.latent_count();
  std::size_t zd = enc.z_dim;

  auto posterior_block = [&](std::size_t off, std::size_t cnt, VarId& mu, VarId& lc, VarId& sigma) {
    mu = tape.slice_cols(h, off, off + cnt);
    lc = tape.clamp(tape.slice_cols(h, L + off, L + off + cnt), -kLogSigmaClamp, kLogSigmaClamp);
    sigma = tape.exp(lc);
  };

  VarId lc_z = -1, lc_th = -1, lc_dx = -1;
  posterior_block(0, zd, g.mu_z, lc_z, g.sigma_z);
  std::size_t off = zd;
  if (enc.do_rotation) {
    posterior_block(off, 1, g.mu_theta, lc_th, g.sigma_theta);
    off += 1;
  }
  if (enc.do_translation) {
    posterior_block(off, 2, g.mu_dx, lc_dx, g.sigma_dx);
    off += 2;
  }

  // Noise blocks, one column set per latent group.
  Tensor eps_z({B, zd}), eps_th({B, 1}), eps_dx({B, 2});
  for (std::size_t i = 0; i < B; ++i) {
    const double* d = noise.draws.data() + i * noise.per_image;
    std::size_t k = 0;
    for (std::size_t j = 0; j < zd; ++j, ++k) eps_z[i * zd + j] = d[k];
    if (enc.do_rotation) eps_th[i] = d[k++];
    if (enc.do_translation) {
      eps_dx[2 * i] = d[k];
      eps_dx[2 * i + 1] = d[k + 1];
      k += 2;
    }
  }

  // Reparameterized latents.
  if (opts.freeze_z) {
    g.z_sample = tape.constant(Tensor::zeros({B, zd}));
  } else {
    g.z_sample = reparam(tape, g.mu_z, g.sigma_z, std::move(eps_z));
  }
  VarId gamma_const = -1;
  if (enc.do_rotation) {
    if (augment) {
      Tensor gam({B, 1});
      for (std::size_t i = 0; i < B; ++i) gam[i] = opts.gammas[i];
      gamma_const = tape.constant(std::move(gam));
      g.mu_theta = tape.sub(g.mu_theta, gamma_const);  // corrected mean
    }
    g.theta_sample = reparam(tape, g.mu_theta, g.sigma_theta, std::move(eps_th));
    g.theta_decode = augment ? tape.add(g.theta_sample, gamma_const) : g.theta_sample;
  }
  if (enc.do_translation) {
    g.dx_sample = reparam(tape, g.mu_dx, g.sigma_dx, std::move(eps_dx));
  }

  // Decode and reconstruction term.
  VarId raw = -1;
  if (gen.kind == GeneratorKind::kSpatial) {
    Tensor target({B * n_pix, 1}, std::vector<double>(images.vec()));
    CoordGrid grid = make_grid(model.height, model.width);
    Tensor xcol({n_pix}), ycol({n_pix});
    for (std::size_t p = 0; p < n_pix; ++p) {
      xcol[p] = grid.coords[2 * p];
      ycol[p] = grid.coords[2 * p + 1];
    }
    VarId xprime, yprime;
    if (enc.do_rotation) {
      VarId c = tape.cos(g.theta_decode);
      VarId s = tape.sin(g.theta_decode);
      xprime = tape.sub(tape.outer_rows(c, xcol), tape.outer_rows(s, ycol));
      yprime = tape.add(tape.outer_rows(s, xcol), tape.outer_rows(c, ycol));
    } else {
      Tensor xt({B * n_pix, 1}), yt({B * n_pix, 1});
      for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t p = 0; p < n_pix; ++p) {
          xt[i * n_pix + p] = xcol[p];
          yt[i * n_pix + p] = ycol[p];
        }
      }
      xprime = tape.constant(std::move(xt));
      yprime = tape.constant(std::move(yt));
    }
    if (enc.do_translation) {
      Tensor ones = Tensor::full({n_pix}, 1.0);
      VarId dx_x = tape.outer_rows(tape.slice_cols(g.dx_sample, 0, 1), ones);
      VarId dx_y = tape.outer_rows(tape.slice_cols(g.dx_sample, 1, 2), ones);
      xprime = tape.add(xprime, dx_x);
      yprime = tape.add(yprime, dx_y);
    }
    VarId zrep = tape.repeat_rows(g.z_sample, n_pix);
    VarId input = tape.hcat({xprime, yprime, zrep});
    raw = input;
    for (std::size_t l = 0; l < n_gen; ++l) {
      raw = tape.linear(raw, gen_w(l), gen_b(l));
      if (l + 1 < n_gen) raw = tape.tanh_act(raw);
    }
    if (gen.pixel_model == PixelModel::kBinary) {
      g.recon_sum = tape.bernoulli_loglik(std::move(target), tape.sigmoid(raw));
    } else {
      VarId mean = tape.slice_cols(raw, 0, 1);
      if (gen.clamp_nonneg_mean) mean = tape.clamp(mean, 0.0, 1e300);
      VarId sigma = tape.exp(tape.clamp(tape.slice_cols(raw, 1, 2), -kLogSigmaClamp, kLogSigmaClamp));
      g.recon_sum = tape.gaussian_loglik(std::move(target), mean, sigma);
    }
  } else {
    raw = g.z_sample;
    for (std::size_t l = 0; l < n_gen; ++l) {
      raw = tape.linear(raw, gen_w(l), gen_b(l));
      if (l + 1 < n_gen) raw = tape.tanh_act(raw);
    }
    Tensor target_bn({B, n_pix}, std::vector<double>(images.vec()));
    if (gen.pixel_model == PixelModel::kBinary) {
      g.recon_sum = tape.bernoulli_loglik(std::move(target_bn), tape.sigmoid(raw));
    } else {
      VarId mean = tape.slice_cols(raw, 0, n_pix);
      if (gen.clamp_nonneg_mean) mean = tape.clamp(mean, 0.0, 1e300);
      VarId sigma =
          tape.exp(tape.clamp(tape.slice_cols(raw, n_pix, 2 * n_pix), -kLogSigmaClamp, kLogSigmaClamp));
      g.recon_sum = tape.gaussian_loglik(std::move(target_bn), mean, sigma);
    }
  }

  // KL terms.
  VarId elbo = g.recon_sum;
  if (!opts.freeze_z) {
    g.kl_z_sum = kl_sum_node(tape, lc_z, g.sigma_z, g.mu_z, 1.0);
    elbo = tape.sub(elbo, g.kl_z_sum);
  }
  if (enc.do_rotation) {
    bool mean_free = opts.priors.theta_prior == ThetaPrior::kUniformMeanFree;
    g.kl_theta_sum =
        kl_sum_node(tape, lc_th, g.sigma_theta, mean_free ? -1 : g.mu_theta, opts.priors.s_theta);
    elbo = tape.sub(elbo, g.kl_theta_sum);
  }
  if (enc.do_translation) {
    double sx = px_to_norm(opts.priors.s_dx_pixels, model.width);
    double sy = px_to_norm(opts.priors.s_dx_pixels, model.height);
    VarId klx = kl_sum_node(tape, tape.slice_cols(lc_dx, 0, 1),
                            tape.slice_cols(g.sigma_dx, 0, 1), tape.slice_cols(g.mu_dx, 0, 1), sx);
    VarId kly = kl_sum_node(tape, tape.slice_cols(lc_dx, 1, 2),
                            tape.slice_cols(g.sigma_dx, 1, 2), tape.slice_cols(g.mu_dx, 1, 2), sy);
    g.kl_dx_sum = tape.add(klx, kly);
    elbo = tape.sub(elbo, g.kl_dx_sum);
  }
  g.elbo_sum = elbo;
  g.loss = tape.affine(elbo, -1.0 / static_cast<double>(B), 0.0);
  return g;
}

}  // namespace svae
