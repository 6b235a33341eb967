#pragma once

#include <cstddef>

#include "svae/model.hpp"
#include "svae/tensor.hpp"

namespace svae {

/// Bernoulli probabilities are clamped to [kProbClamp, 1-kProbClamp] inside
/// the log-likelihood so saturated sigmoids cannot produce -inf.
constexpr double kProbClamp = 1e-7;

struct ElboBreakdown {
  double recon_loglik = 0.0;
  double kl_z = 0.0;
  double kl_theta = 0.0;
  double kl_dx = 0.0;
  double elbo = 0.0;  // always recon_loglik - (kl_z + kl_theta + kl_dx)
};

/// sum_i y log p + (1-y) log(1-p), p clamped.
double bernoulli_loglik(const Tensor& y, const Tensor& p);

/// sum_i -0.5 log(2 pi) - log sigma - (y-mu)^2 / (2 sigma^2).
double gaussian_loglik(const Tensor& y, const Tensor& mu, const Tensor& sigma);

/// KL(N(mu, sigma^2) || N(0, s^2)) = log(s/sigma) + (sigma^2+mu^2)/(2 s^2) - 1/2.
double kl_gaussian(double mu, double sigma, double s);
double kl_gaussian(const Tensor& mu, const Tensor& sigma, double s);  // summed over dims

/// Mean-free KL variant for an approximately uniform angle prior:
/// -log sigma_theta + log s_theta + sigma_theta^2/(2 s_theta^2) - 1/2.
/// Identical to kl_gaussian(0, sigma_theta, s_theta).
double kl_theta_uniform(double sigma_theta, double s_theta);

/// Assembles the bound from a single reparameterized sample's decode.
/// kl_z always uses the standard-normal prior; kl_theta uses the mean-free
/// variant when priors.theta_prior is kUniformMeanFree; kl_dx converts the
/// pixel-unit prior to normalized units per axis. Latents whose inference
/// flag is off contribute exactly 0.
ElboBreakdown elbo(const Tensor& image, const Posterior& post, const PixelDistribution& decoded,
                   const PriorConfig& priors, bool do_rotation, bool do_translation,
                   std::size_t width, std::size_t height);

}  // namespace svae
