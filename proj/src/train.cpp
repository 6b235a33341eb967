#include "svae/train.hpp"

#include <cmath>
#include <cstdio>
#include <utility>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "svae/errors.hpp"
#include "svae/evalkit.hpp"
#include "svae/geometry.hpp"

namespace svae {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string history_to_csv(const std::vector<HistoryRow>& rows) {
  std::string out =
      "epoch,train_elbo,train_recon,train_kl_z,train_kl_theta,train_kl_dx,"
      "test_elbo,test_recon,test_kl_z,test_kl_theta,test_kl_dx\n";
  for (const HistoryRow& r : rows) {
    out += std::to_string(r.epoch);
    out += "," + fmt_double(r.train.elbo) + "," + fmt_double(r.train.recon_loglik) + "," +
           fmt_double(r.train.kl_z) + "," + fmt_double(r.train.kl_theta) + "," +
           fmt_double(r.train.kl_dx);
    if (r.test) {
      out += "," + fmt_double(r.test->elbo) + "," + fmt_double(r.test->recon_loglik) + "," +
             fmt_double(r.test->kl_z) + "," + fmt_double(r.test->kl_theta) + "," +
             fmt_double(r.test->kl_dx);
    } else {
      out += ",,,,,";
    }
    out += "\n";
  }
  return out;
}

ModelParams init_model(const TrainConfig& cfg, std::size_t height, std::size_t width) {
  if (cfg.generator == GeneratorKind::kVanilla && (cfg.do_rotation || cfg.do_translation)) {
    throw ShapeError("init_model: vanilla generator cannot infer pose");
  }
  if (cfg.augment_rotation && !cfg.do_rotation) {
    throw ShapeError("init_model: rotation augmentation requires rotation inference");
  }
  if (cfg.z_dim == 0) throw ShapeError("init_model: z_dim must be >= 1");
  Rng rng = Rng::keyed(cfg.seed, {rng_tag::kInit});
  ModelParams m;
  m.height = height;
  m.width = width;
  std::size_t n_pix = height * width;
  if (cfg.generator == GeneratorKind::kSpatial) {
    m.gen = make_spatial_generator(cfg.z_dim, cfg.gen_hidden, cfg.gen_layers, cfg.pixel_model,
                                   cfg.clamp_nonneg_mean, rng);
  } else {
    m.gen = make_vanilla_generator(cfg.z_dim, n_pix, cfg.gen_hidden, cfg.gen_layers,
                                   cfg.pixel_model, cfg.clamp_nonneg_mean, rng);
  }
  m.enc = make_inference(n_pix, cfg.z_dim, cfg.do_rotation, cfg.do_translation, cfg.enc_hidden,
                         cfg.enc_layers, rng);
  return m;
}

AugmentedBatch rotation_augment(const ImageDataset& ds, const std::vector<std::size_t>& idx,
                                std::uint64_t seed, std::uint64_t epoch, std::uint64_t step) {
  Rng rng = Rng::keyed(seed, {rng_tag::kAugment, epoch, step});
  AugmentedBatch out;
  std::size_t n = ds.pixels();
  out.images = Tensor({idx.size(), n});
  out.gammas.resize(idx.size());
  for (std::size_t b = 0; b < idx.size(); ++b) {
    double gamma = kTwoPi * rng.u01();
    out.gammas[b] = gamma;
    Tensor rot = resample(ds.image(idx[b]), gamma, {0.0, 0.0});
    std::memcpy(out.images.data() + b * n, rot.data(), n * sizeof(double));
  }
  return out;
}

ElboBreakdown train_step(ModelParams& model, AdamState& opt, const Tensor& batch_images,
                         const BatchNoise& noise, const GraphOptions& opts) {
  Tape tape;
  std::vector<const Tensor*> ptrs = param_ptrs(std::as_const(model));
  std::vector<VarId> vars;
  vars.reserve(ptrs.size());
  for (const Tensor* p : ptrs) vars.push_back(tape.param(*p));
  BatchGraph g = build_batch_graph(tape, model, vars, batch_images, noise, opts);

  double B = static_cast<double>(batch_images.rows());
  ElboBreakdown mean;
  mean.recon_loglik = tape.value(g.recon_sum).item() / B;
  mean.kl_z = g.kl_z_sum >= 0 ? tape.value(g.kl_z_sum).item() / B : 0.0;
  mean.kl_theta = g.kl_theta_sum >= 0 ? tape.value(g.kl_theta_sum).item() / B : 0.0;
  mean.kl_dx = g.kl_dx_sum >= 0 ? tape.value(g.kl_dx_sum).item() / B : 0.0;
  mean.elbo = mean.recon_loglik - (mean.kl_z + mean.kl_theta + mean.kl_dx);

  double loss = tape.value(g.loss).item();
  if (!std::isfinite(loss)) {
    throw NumericError("train_step: non-finite loss (recon=" +
                       std::to_string(mean.recon_loglik) + ", kl_z=" + std::to_string(mean.kl_z) +
                       ", kl_theta=" + std::to_string(mean.kl_theta) + ", kl_dx=" +
                       std::to_string(mean.kl_dx) + ")");
  }
  tape.backprop(g.loss);
  std::vector<Tensor> grads;
  grads.reserve(vars.size());
  for (VarId v : vars) grads.push_back(tape.grad(v));
  std::vector<Tensor*> mut = param_ptrs(model);
  adam_step(mut, grads, opt);
  return mean;
}

namespace {

Tensor gather_batch(const ImageDataset& ds, const std::vector<std::size_t>& idx) {
  std::size_t n = ds.pixels();
  Tensor out({idx.size(), n});
  for (std::size_t b = 0; b < idx.size(); ++b) {
    std::memcpy(out.data() + b * n, ds.images.data() + idx[b] * n, n * sizeof(double));
  }
  return out;
}

void write_history(const std::string& out_dir, const std::vector<HistoryRow>& rows) {
  std::ofstream f(out_dir + "/history.csv", std::ios::binary);
  if (!f) throw DataError("cannot write history: " + out_dir);
  f << history_to_csv(rows);
}

}  // namespace

TrainResult run_training(const TrainConfig& cfg, const ImageDataset& train,
                         const ImageDataset* test, const std::string& out_dir,
                         const std::string& resume_from) {
  if (cfg.freeze_z_epochs > cfg.epochs) throw ShapeError("run_training: freeze_z_epochs > epochs");
  if (!(cfg.lr > 0.0) && cfg.lr != 0.0) throw NumericError("run_training: bad learning rate");
  if (train.pixel_model != cfg.pixel_model) {
    throw DataError("run_training: dataset pixel model does not match config");
  }

  ModelParams model;
  AdamState opt;
  std::vector<HistoryRow> history;
  std::size_t start_epoch = 0;
  if (!resume_from.empty()) {
    Checkpoint ck = load_checkpoint(resume_from);
    if (ck.model.enc.n_pixels != train.pixels()) {
      throw DataError("run_training: checkpoint geometry does not match dataset");
    }
    model = std::move(ck.model);
    opt = std::move(ck.opt);
    history = std::move(ck.history);
    start_epoch = ck.epoch;
  } else {
    model = init_model(cfg, train.height(), train.width());
    opt = AdamState::init(param_ptrs(std::as_const(model)), cfg.adam());
  }

  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  for (std::size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    auto batches = make_batches(train.count(), cfg.batch_size, cfg.seed, epoch);
    double sum_recon = 0, sum_klz = 0, sum_klth = 0, sum_kldx = 0;
    std::size_t n_images = 0;
    for (std::size_t step = 0; step < batches.size(); ++step) {
      const auto& idx = batches[step];
      GraphOptions opts;
      opts.priors = cfg.priors;
      opts.freeze_z = epoch < cfg.freeze_z_epochs;
      Tensor batch_images;
      if (cfg.augment_rotation) {
        AugmentedBatch aug = rotation_augment(train, idx, cfg.seed, epoch, step);
        batch_images = std::move(aug.images);
        opts.gammas = std::move(aug.gammas);
      } else {
        batch_images = gather_batch(train, idx);
      }
      Rng noise_rng = Rng::keyed(cfg.seed, {rng_tag::kNoise, epoch, step});
      BatchNoise noise = draw_batch_noise(idx.size(), model.enc, noise_rng);
      ElboBreakdown b;
      try {
        b = train_step(model, opt, batch_images, noise, opts);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch + 1) + " step " +
                           std::to_string(step + 1) + ": " + e.what());
      }
      double bs = static_cast<double>(idx.size());
      sum_recon += b.recon_loglik * bs;
      sum_klz += b.kl_z * bs;
      sum_klth += b.kl_theta * bs;
      sum_kldx += b.kl_dx * bs;
      n_images += idx.size();
    }
    HistoryRow row;
    row.epoch = epoch + 1;
    double n = static_cast<double>(n_images);
    row.train.recon_loglik = sum_recon / n;
    row.train.kl_z = sum_klz / n;
    row.train.kl_theta = sum_klth / n;
    row.train.kl_dx = sum_kldx / n;
    row.train.elbo = row.train.recon_loglik - (row.train.kl_z + row.train.kl_theta + row.train.kl_dx);
    bool last = epoch + 1 == cfg.epochs;
    if (test && (last || (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0))) {
      row.test = estimate_elbo(*test, model, cfg.priors, 1,
                               Rng::keyed(cfg.seed, {rng_tag::kEval, epoch}).u64());
    }
    history.push_back(row);

    if (!out_dir.empty()) {
      write_history(out_dir, history);
      bool periodic = cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0;
      if (periodic || last) {
        Checkpoint ck{model, opt, cfg, epoch + 1, history};
        save_checkpoint(out_dir + (last ? "/ckpt-final" : "/ckpt-" + std::to_string(epoch + 1)),
                        ck);
      }
    }
  }
  return TrainResult{std::move(model), std::move(opt), std::move(history)};
}

}  // namespace svae
