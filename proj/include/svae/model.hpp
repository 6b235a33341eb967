#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "svae/geometry.hpp"
#include "svae/rng.hpp"
#include "svae/tensor.hpp"

namespace svae {

enum class PixelModel { kBinary, kReal };
enum class ThetaPrior { kGaussian, kUniformMeanFree };
enum class GeneratorKind { kSpatial, kVanilla };

/// Raw log-sigma outputs are clamped to +-kLogSigmaClamp before exp.
constexpr double kLogSigmaClamp = 7.0;

inline double clamp_scalar(double x, double lo, double hi) { return x < lo ? lo : (x > hi ? hi : x); }

/// Priors over the latents. The z prior is fixed standard normal. The
/// translation prior is configured in pixels and converted to normalized
/// coordinate units where it is applied.
struct PriorConfig {
  double s_theta = 0.7853981633974483;  // pi/4
  double s_dx_pixels = 1.4;
  ThetaPrior theta_prior = ThetaPrior::kGaussian;
};

struct MlpParams {
  std::vector<Tensor> weights;  // layer i: [in_i, out_i]
  std::vector<Tensor> biases;   // layer i: [out_i]
};

/// Generator network. Spatial kind: MLP from (x, y, z_1..z_Z) to the pixel
/// distribution parameters at that coordinate. Vanilla kind: MLP from z
/// directly to the parameters of every pixel (one function per pixel index).
/// Binary head: one logit per pixel, mapped through the logistic sigmoid.
/// Real head: mean and log-sigma per pixel; sigma = exp(clamped log-sigma),
/// and the mean is clamped to max(0, mean) when clamp_nonneg_mean is set.
struct GeneratorParams {
  GeneratorKind kind = GeneratorKind::kSpatial;
  PixelModel pixel_model = PixelModel::kBinary;
  bool clamp_nonneg_mean = false;
  std::size_t z_dim = 0;
  std::size_t n_pixels = 0;  // vanilla only: pixels per image
  MlpParams mlp;
};

/// Inference network: MLP from the flattened image to mean and log-sigma of
/// every active latent. Output layout: [mu(z), mu(theta)?, mu(dx)?,
/// logsigma(z), logsigma(theta)?, logsigma(dx)?].
struct InferenceParams {
  std::size_t n_pixels = 0;
  std::size_t z_dim = 0;
  bool do_rotation = false;
  bool do_translation = false;
  MlpParams mlp;

  std::size_t latent_count() const {
    return z_dim + (do_rotation ? 1 : 0) + (do_translation ? 2 : 0);
  }
};

struct Posterior {
  Tensor mu_z, sigma_z;  // [z_dim]
  std::optional<double> mu_theta, sigma_theta;
  std::optional<std::array<double, 2>> mu_dx, sigma_dx;
};

/// One reparameterized draw. Latents with inference disabled are exactly 0
/// and consume no noise. `noise` records the standard-normal draws used, in
/// consumption order (z, theta, dx).
struct LatentSample {
  Tensor z;
  double theta = 0.0;
  std::array<double, 2> dx{0.0, 0.0};
  std::vector<double> noise;
};

/// Per-pixel distribution parameters emitted by a generator.
struct PixelDistribution {
  PixelModel model = PixelModel::kBinary;
  Tensor probs;        // binary: [n]
  Tensor mean, sigma;  // real: [n] each
};

// Weight init: uniform in +-sqrt(6/(fan_in+fan_out)), zero biases.
MlpParams init_mlp(const std::vector<std::size_t>& dims, Rng& rng);

GeneratorParams make_spatial_generator(std::size_t z_dim, std::size_t hidden_dim,
                                       std::size_t hidden_layers, PixelModel pm,
                                       bool clamp_nonneg_mean, Rng& rng);
GeneratorParams make_vanilla_generator(std::size_t z_dim, std::size_t n_pixels,
                                       std::size_t hidden_dim, std::size_t hidden_layers,
                                       PixelModel pm, bool clamp_nonneg_mean, Rng& rng);
InferenceParams make_inference(std::size_t n_pixels, std::size_t z_dim, bool do_rotation,
                               bool do_translation, std::size_t hidden_dim,
                               std::size_t hidden_layers, Rng& rng);

/// Tanh hidden layers, linear head.
Tensor mlp_forward(const MlpParams& mlp, const Tensor& input);

PixelDistribution generator_forward(const Tensor& coords, const Tensor& z,
                                    const GeneratorParams& g);
PixelDistribution vanilla_generator_forward(const Tensor& z, const GeneratorParams& g);
Posterior encoder_forward(const Tensor& image, const InferenceParams& enc);
LatentSample reparameterize(const Posterior& post, const std::vector<double>& noise);

/// decode_image(s, grid, g) == generator_forward(transform_coords(grid.coords,
/// s.theta, s.dx), s.z, g), bit-exactly; the model never touches pixel
/// lattices.
PixelDistribution decode_image(const LatentSample& s, const CoordGrid& grid,
                               const GeneratorParams& g);

struct ModelParams {
  GeneratorParams gen;
  InferenceParams enc;
  std::size_t height = 0, width = 0;
};

// Flat parameter list in checkpoint/optimizer order: generator layers first
// (W then b per layer), then inference layers.
std::vector<std::string> param_names(const ModelParams& m);
std::vector<Tensor*> param_ptrs(ModelParams& m);
std::vector<const Tensor*> param_ptrs(const ModelParams& m);

}  // namespace svae
