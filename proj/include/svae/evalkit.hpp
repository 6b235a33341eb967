#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svae/data.hpp"
#include "svae/model.hpp"
#include "svae/objective.hpp"

namespace svae {

/// Mean per-image ELBO over a dataset. The reconstruction expectation is
/// averaged over k_samples reparameterized draws; KL terms are analytic.
/// The k noise vectors are derived from the seed and shared across images,
/// so a dataset of one image duplicated N times scores exactly the image's
/// own value.
ElboBreakdown estimate_elbo(const ImageDataset& ds, const ModelParams& model,
                            const PriorConfig& priors, std::size_t k_samples, std::uint64_t seed);

/// Per-image posterior parameters in one pass: columns are mu then sigma for
/// every active latent in (z, theta, dx) order.
Tensor posterior_means(const ImageDataset& ds, const ModelParams& model);

double pearson_corr(const std::vector<double>& a, const std::vector<double>& b);

/// Jammalamadaka-SenGupta circular correlation:
/// r = sum sin(a-abar) sin(b-bbar) / sqrt(sum sin^2(a-abar) sum sin^2(b-bbar))
/// with circular means abar, bbar. Invariant to constant angular offsets.
double circular_corr(const std::vector<double>& alpha, const std::vector<double>& beta);

/// Mardia circular-linear correlation in [0, 1], for a linear variable
/// against an angle.
double circular_linear_corr(const std::vector<double>& x, const std::vector<double>& theta);

struct CorrelationEntry {
  std::string variable;  // "z1", "z2", ..., "theta"
  std::string factor;    // "conformation", "rotation"
  std::string method;    // "pearson", "circular", "circular-linear"
  double coefficient = 0.0;
};

struct CorrelationReport {
  std::vector<CorrelationEntry> entries;
  std::string to_csv() const;  // header + one row per latent x factor pair
};

/// Correlates inferred posterior means (mu_z per dimension, mu_theta wrapped
/// to (-pi, pi]) against every ground-truth factor in the manifest.
CorrelationReport correlation_report(const ImageDataset& ds, const ModelParams& model);

/// Standard-normal quantile (inverse CDF), rational approximation polished
/// with one Halley step; max error well under 1e-9.
double normal_quantile(double p);

/// Inverse-CDF manifold grid for z_dim 1 or 2: z coordinates at
/// Phi^-1(k/(grid_n+1)), k = 1..grid_n per axis, decoded with theta = 0 and
/// dx = 0. Returns grid_n (1-d) or grid_n^2 (2-d, row-major over (z2, z1))
/// images of the distribution mean/probability.
std::vector<Tensor> manifold_grid(const ModelParams& model, std::size_t grid_n);

/// Linear interpolation between the posterior means of two images, decoded
/// with pose zeroed; endpoints use the exact means.
std::vector<Tensor> interpolate_latents(const ModelParams& model, const Tensor& image_a,
                                        const Tensor& image_b, std::size_t steps);

/// Decoded distribution mean/probability for samples z ~ N(0, I), pose
/// zeroed; n images with draws keyed by (seed, index).
std::vector<Tensor> sample_images(const ModelParams& model, std::size_t n, std::uint64_t seed);

/// 8-bit grayscale PNG grid with 1-pixel separators; images min-max
/// normalized over the whole grid (constant grids map to mid-gray 128).
void render_png_grid(const std::vector<Tensor>& images, std::size_t cols,
                     const std::string& path);

}  // namespace svae
