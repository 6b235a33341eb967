#pragma once

#include <cstdint>
#include <vector>

#include "svae/model.hpp"
#include "svae/rng.hpp"
#include "svae/tape.hpp"

namespace svae {

/// Standard-normal draws for one minibatch, one block per image in
/// consumption order (z, theta, dx). Frozen-z epochs still draw (and ignore)
/// the z block, so the layout never shifts.
struct BatchNoise {
  std::size_t batch = 0;
  std::size_t per_image = 0;
  std::vector<double> draws;  // [batch * per_image]
};

BatchNoise draw_batch_noise(std::size_t batch, const InferenceParams& enc, Rng& rng);

struct GraphOptions {
  PriorConfig priors;
  bool freeze_z = false;
  /// Rotation-augmentation offsets per image; empty disables augmentation.
  /// When set, the encoder input must already be the gamma-rotated images;
  /// the graph subtracts gamma from the predicted rotation mean and re-adds
  /// it for the decode of the rotated target.
  std::vector<double> gammas;
};

/// Handles into the built graph. Sums are over the whole batch; absent KL
/// terms are -1. Intermediate ids are exposed for tests (values are valid
/// until backprop releases large activations).
struct BatchGraph {
  VarId loss = -1;  // -(1/B) * (recon_sum - kl sums)
  VarId elbo_sum = -1;
  VarId recon_sum = -1;
  VarId kl_z_sum = -1;
  VarId kl_theta_sum = -1;
  VarId kl_dx_sum = -1;
  VarId mu_z = -1, sigma_z = -1;
  VarId mu_theta = -1, sigma_theta = -1;  // mu after gamma correction
  VarId mu_dx = -1, sigma_dx = -1;
  VarId z_sample = -1, theta_sample = -1, dx_sample = -1;
  VarId theta_decode = -1;  // theta_sample plus gamma when augmenting
  std::vector<VarId> params;
};

/// Builds the single-sample minibatch ELBO graph: encoder, reparameterized
/// latents, coordinate transform, generator head, pixel log-likelihood and
/// KL terms. `model` supplies architecture and flags; parameter values come
/// from `param_vars` (leaves pushed by the caller, in param_names order).
/// `images` is [B, n_pixels]; it is both the encoder input and the
/// reconstruction target.
BatchGraph build_batch_graph(Tape& tape, const ModelParams& model,
                             const std::vector<VarId>& param_vars, const Tensor& images,
                             const BatchNoise& noise, const GraphOptions& opts);

}  // namespace svae
