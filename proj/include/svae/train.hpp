#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "svae/adam.hpp"
#include "svae/data.hpp"
#include "svae/graph.hpp"
#include "svae/model.hpp"
#include "svae/objective.hpp"

namespace svae {

struct TrainConfig {
  GeneratorKind generator = GeneratorKind::kSpatial;
  PixelModel pixel_model = PixelModel::kBinary;
  std::size_t z_dim = 2;
  std::size_t gen_hidden = 500, gen_layers = 2;
  std::size_t enc_hidden = 500, enc_layers = 2;
  bool do_rotation = true;
  bool do_translation = true;
  bool clamp_nonneg_mean = false;
  PriorConfig priors;
  std::size_t epochs = 100;
  std::size_t batch_size = 100;
  double lr = 1e-4;
  std::size_t freeze_z_epochs = 0;
  bool augment_rotation = false;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;      // test-set ELBO cadence (epochs)
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only

  AdamConfig adam() const {
    AdamConfig a;
    a.lr = lr;
    return a;
  }
};

struct HistoryRow {
  std::size_t epoch = 0;  // 1-based, after the epoch completed
  ElboBreakdown train;
  std::optional<ElboBreakdown> test;
};

std::string history_to_csv(const std::vector<HistoryRow>& rows);

struct Checkpoint {
  ModelParams model;
  AdamState opt;
  TrainConfig config;
  std::size_t epoch = 0;  // epochs completed
  std::vector<HistoryRow> history;
};

/// Directory with header.json (architecture, config, epoch, history,
/// checksums) + params.f64 + adam.f64, little-endian float64 in
/// param_names order (adam.f64 holds all first moments, then all second
/// moments). Round-trips bit-exactly.
void save_checkpoint(const std::string& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& dir);

/// Model/optimizer construction for a dataset geometry, seeded from
/// (config.seed, init tag): generator layers first, then inference layers.
ModelParams init_model(const TrainConfig& cfg, std::size_t height, std::size_t width);

/// gamma-rotated copies of the selected images plus the gamma draws,
/// gamma_i ~ U[0, 2pi) keyed by (seed, epoch, step).
struct AugmentedBatch {
  Tensor images;  // [B, n_pixels]
  std::vector<double> gammas;
};
AugmentedBatch rotation_augment(const ImageDataset& ds, const std::vector<std::size_t>& idx,
                                std::uint64_t seed, std::uint64_t epoch, std::uint64_t step);

/// One ADAM step on -mean(elbo) over the batch. Returns the batch-mean
/// breakdown. Throws NumericError on a non-finite loss.
ElboBreakdown train_step(ModelParams& model, AdamState& opt, const Tensor& batch_images,
                         const BatchNoise& noise, const GraphOptions& opts);

struct TrainResult {
  ModelParams model;
  AdamState opt;
  std::vector<HistoryRow> history;
};

/// Full training loop: keyed RNG streams per (epoch, step) for shuffling,
/// noise, and augmentation, so a resumed run reproduces the uninterrupted
/// trajectory bit-exactly. Writes history.csv and checkpoints under out_dir
/// when it is non-empty.
TrainResult run_training(const TrainConfig& cfg, const ImageDataset& train,
                         const ImageDataset* test, const std::string& out_dir,
                         const std::string& resume_from = "");

}  // namespace svae
