#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "svae/model.hpp"
#include "svae/tensor.hpp"

namespace svae {

/// Per-image ground-truth factors; every column optional per dataset.
/// theta in radians, wrapped to (-pi, pi]; dx in pixels (x right, y up);
/// conformation is the hinge fraction in [0, 1].
struct Manifest {
  bool has_theta = false;
  bool has_dx = false;
  bool has_conformation = false;
  std::vector<double> theta;
  std::vector<std::array<double, 2>> dx;
  std::vector<double> conformation;
};

struct StandardizeStats {
  double mean = 0.0;
  double stddev = 1.0;
};

struct ImageDataset {
  Tensor images;  // [count, h, w]
  PixelModel pixel_model = PixelModel::kBinary;
  std::string split = "train";
  std::optional<Manifest> manifest;
  std::optional<StandardizeStats> standardize;  // real datasets only
  std::string generator_json;                   // config echo for meta.json
  std::uint64_t seed = 0;

  std::size_t count() const { return images.ndim() == 3 ? images.shape()[0] : 0; }
  std::size_t height() const { return images.shape()[1]; }
  std::size_t width() const { return images.shape()[2]; }
  std::size_t pixels() const { return height() * width(); }

  /// Copy of image i as [h, w].
  Tensor image(std::size_t i) const;
  /// Copy of image i flattened to [h*w].
  Tensor flat_image(std::size_t i) const;
};

double wrap_angle(double theta);  // into (-pi, pi]

// ---- IDX ingestion (big-endian, as published MNIST format) ----

/// Images (magic 0x00000803); pixel bytes scaled to [0, 1].
ImageDataset load_idx_images(const std::string& path);
/// Labels (magic 0x00000801).
std::vector<std::uint8_t> load_idx_labels(const std::string& path);
/// Writes [count,h,w] values in [0,1] as an images IDX file (bytes 0..255).
void write_idx_images(const std::string& path, const Tensor& images);

// ---- Dataset container: meta.json + images.f32 + optional manifest.csv ----

void save_dataset(const ImageDataset& ds, const std::string& dir);
ImageDataset load_dataset(const std::string& dir);

// ---- Random-transform pipeline ----

/// Each image is resampled with theta ~ N(0, theta_sigma^2) wrapped to
/// (-pi, pi] and per-axis shifts ~ N(0, t_sigma_px^2) pixels; the manifest
/// records the draws. Per-image RNG streams are keyed by (seed, index).
ImageDataset apply_random_transforms(const ImageDataset& ds, double theta_sigma,
                                     double t_sigma_px, std::uint64_t seed);

// ---- Procedural hinged-particle generator ----

/// Two anisotropic Gaussian lobes: a fixed body and an arm rotating about a
/// pivot over n_steps conformation steps. Templates are scaled to peak 255,
/// then Gaussian noise with noise_sigma is added on that scale.
struct HingeConfig {
  std::size_t height = 40;
  std::size_t width = 40;
  std::size_t n_steps = 20;
  double step_degrees = 2.0;
  double noise_sigma = 25.0;
  std::size_t count = 20000;
  std::uint64_t seed = 0;
  // Lobe geometry in normalized coordinates.
  double body_cx = -0.28, body_cy = 0.0;
  double body_sigma_long = 0.22, body_sigma_perp = 0.13;
  double body_amp = 1.0;
  double pivot_x = 0.10, pivot_y = 0.0;
  double arm_len = 0.44;
  double arm_sigma_long = 0.20, arm_sigma_perp = 0.10;
  double arm_amp = 0.9;
};

/// Clean template (no noise) at a conformation step, viewed at in-plane
/// rotation theta; peak exactly 255.
Tensor render_hinge_template(const HingeConfig& cfg, std::size_t step, double theta);

/// Conformation step uniform in {0..n_steps-1}, theta ~ U(-pi, pi], plus
/// noise; manifest records conformation fraction step/(n_steps-1) and theta.
/// Images are left on the raw 0-255-peak scale; standardize with
/// standardize_split after splitting.
ImageDataset generate_hinge_dataset(const HingeConfig& cfg);

// ---- Synthetic stroke-rendered digits (MNIST-like stand-in) ----

struct DigitsConfig {
  std::size_t count = 5000;
  std::size_t size = 28;
  std::uint64_t seed = 0;
};

/// Ten digit glyph classes drawn with a soft pen and per-image jitter
/// (scale, shear, offset, pen width); values in [0, 1], binary pixel model.
ImageDataset generate_digits_dataset(const DigitsConfig& cfg);

// ---- Splitting / standardization / batching ----

std::pair<ImageDataset, ImageDataset> split_dataset(const ImageDataset& ds,
                                                    std::size_t train_count);

/// Standardizes both splits to the train split's mean/stddev; stores the
/// stats on both datasets.
void standardize_split(ImageDataset& train, ImageDataset& test);

/// Random permutation chunked into batches; deterministic given (seed,
/// epoch); the last short batch is kept.
std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size,
                                                   std::uint64_t seed, std::uint64_t epoch);

}  // namespace svae
