#include "svae/objective.hpp"

#include <cmath>

#include "svae/errors.hpp"

namespace svae {

namespace {
constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5*log(2*pi)
}

double bernoulli_loglik(const Tensor& y, const Tensor& p) {
  if (y.size() != p.size()) {
    throw ShapeError("bernoulli_loglik: " + y.shape_str() + " vs " + p.shape_str());
  }
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double pc = clamp_scalar(p[i], kProbClamp, 1.0 - kProbClamp);
    total += y[i] * std::log(pc) + (1.0 - y[i]) * std::log(1.0 - pc);
  }
  return total;
}

double gaussian_loglik(const Tensor& y, const Tensor& mu, const Tensor& sigma) {
  if (y.size() != mu.size() || y.size() != sigma.size()) {
    throw ShapeError("gaussian_loglik: size mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(sigma[i] > 0.0)) throw NumericError("gaussian_loglik: sigma must be positive");
    double r = (y[i] - mu[i]) / sigma[i];
    total += -kHalfLog2Pi - std::log(sigma[i]) - 0.5 * r * r;
  }
  return total;
}

double kl_gaussian(double mu, double sigma, double s) {
  if (!(sigma > 0.0) || !(s > 0.0)) throw NumericError("kl_gaussian: sigma and s must be positive");
  return std::log(s / sigma) + (sigma * sigma + mu * mu) / (2.0 * s * s) - 0.5;
}

double kl_gaussian(const Tensor& mu, const Tensor& sigma, double s) {
  if (mu.size() != sigma.size()) throw ShapeError("kl_gaussian: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) total += kl_gaussian(mu[i], sigma[i], s);
  return total;
}

double kl_theta_uniform(double sigma_theta, double s_theta) {
  if (!(sigma_theta > 0.0) || !(s_theta > 0.0)) {
    throw NumericError("kl_theta_uniform: sigma and s must be positive");
  }
  return -std::log(sigma_theta) + std::log(s_theta) +
         sigma_theta * sigma_theta / (2.0 * s_theta * s_theta) - 0.5;
}

ElboBreakdown elbo(const Tensor& image, const Posterior& post, const PixelDistribution& decoded,
                   const PriorConfig& priors, bool do_rotation, bool do_translation,
                   std::size_t width, std::size_t height) {
  if (do_rotation != post.mu_theta.has_value() || do_translation != post.mu_dx.has_value()) {
    throw ShapeError("elbo: posterior fields inconsistent with inference flags");
  }
  ElboBreakdown b;
  if (decoded.model == PixelModel::kBinary) {
    b.recon_loglik = bernoulli_loglik(image, decoded.probs);
  } else {
    b.recon_loglik = gaussian_loglik(image, decoded.mean, decoded.sigma);
  }
  b.kl_z = kl_gaussian(post.mu_z, post.sigma_z, 1.0);
  if (do_rotation) {
    if (priors.theta_prior == ThetaPrior::kUniformMeanFree) {
      b.kl_theta = kl_theta_uniform(*post.sigma_theta, priors.s_theta);
    } else {
      b.kl_theta = kl_gaussian(*post.mu_theta, *post.sigma_theta, priors.s_theta);
    }
  }
  if (do_translation) {
    double sx = px_to_norm(priors.s_dx_pixels, width);
    double sy = px_to_norm(priors.s_dx_pixels, height);
    b.kl_dx = kl_gaussian((*post.mu_dx)[0], (*post.sigma_dx)[0], sx) +
              kl_gaussian((*post.mu_dx)[1], (*post.sigma_dx)[1], sy);
  }
  b.elbo = b.recon_loglik - (b.kl_z + b.kl_theta + b.kl_dx);
  return b;
}

}  // namespace svae
