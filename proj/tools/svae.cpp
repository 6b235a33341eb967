// Command-line front end: dataset generation, training, evaluation, figure
// emission, and a gradient-check entry point.
//
// Exit codes: 0 success, 1 usage error, 2 data/config error, 3 numeric
// failure (non-finite loss or a failed gradient check).

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "svae/data.hpp"
#include "svae/errors.hpp"
#include "svae/evalkit.hpp"
#include "svae/gradcheck.hpp"
#include "svae/graph.hpp"
#include "svae/train.hpp"

namespace fs = std::filesystem;
using namespace svae;

namespace {

constexpr double kPi = 3.14159265358979323846;

TrainConfig preset_config(const std::string& name) {
  TrainConfig c;
  c.generator = GeneratorKind::kSpatial;
  c.pixel_model = PixelModel::kBinary;
  c.z_dim = 2;
  c.gen_hidden = c.enc_hidden = 500;
  c.gen_layers = c.enc_layers = 2;
  c.do_rotation = c.do_translation = true;
  c.epochs = 100;
  c.batch_size = 100;
  c.lr = 1e-4;
  if (name == "mnist-plain") {
    c.priors.s_theta = kPi / 8.0;
    c.priors.s_dx_pixels = 1.4;
  } else if (name == "mnist-rotated" || name == "mnist-rot-trans") {
    c.priors.s_theta = kPi / 4.0;
    c.priors.s_dx_pixels = 1.4;
  } else if (name == "mnist-rotated-wide" || name == "mnist-rot-trans-wide") {
    c.priors.s_theta = kPi;
    c.priors.s_dx_pixels = 14.0;
  } else if (name == "hinge") {
    c.pixel_model = PixelModel::kReal;
    c.z_dim = 1;
    c.do_translation = false;
    c.priors.s_theta = kPi;
    c.priors.theta_prior = ThetaPrior::kUniformMeanFree;
    c.freeze_z_epochs = 2;
    c.augment_rotation = true;
    c.epochs = 500;
  } else if (name == "hinge-vanilla-1d" || name == "hinge-vanilla-2d") {
    c.generator = GeneratorKind::kVanilla;
    c.pixel_model = PixelModel::kReal;
    c.z_dim = name == "hinge-vanilla-1d" ? 1 : 2;
    c.do_rotation = c.do_translation = false;
    c.epochs = 500;
  } else if (name == "em-style") {
    c.pixel_model = PixelModel::kReal;
    c.z_dim = 2;
    c.gen_hidden = c.enc_hidden = 1000;
    c.priors.s_theta = kPi;
    c.priors.theta_prior = ThetaPrior::kUniformMeanFree;
    c.priors.s_dx_pixels = 4.0;
    c.augment_rotation = true;
    c.clamp_nonneg_mean = true;
    c.epochs = 1000;
  } else if (!name.empty()) {
    throw DataError("unknown preset: " + name);
  }
  return c;
}

std::string resolve_data_dir(const std::string& path, const std::string& root) {
  if (fs::exists(path)) return path;
  if (!root.empty() && !fs::path(path).is_absolute()) {
    std::string joined = (fs::path(root) / path).string();
    if (fs::exists(joined)) return joined;
  }
  throw DataError("dataset path not found: " + path);
}

struct SplitPaths {
  std::string train, test;
  bool has_test = false;
};

SplitPaths find_splits(const std::string& dir) {
  SplitPaths p;
  if (fs::exists(fs::path(dir) / "train" / "meta.json")) {
    p.train = (fs::path(dir) / "train").string();
    if (fs::exists(fs::path(dir) / "test" / "meta.json")) {
      p.test = (fs::path(dir) / "test").string();
      p.has_test = true;
    }
  } else if (fs::exists(fs::path(dir) / "meta.json")) {
    p.train = dir;
  } else {
    throw DataError("no dataset found under: " + dir);
  }
  return p;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

// ---- generate ----

int cmd_generate(const std::string& kind, const std::string& in_dir, const std::string& out_dir,
                 std::uint64_t seed, std::size_t count, std::size_t train_count, std::size_t size,
                 double theta_sigma, double t_sigma, const HingeConfig& hinge_base) {
  ImageDataset all;
  bool standardize = false;
  if (kind == "hinge") {
    HingeConfig cfg = hinge_base;
    cfg.count = count;
    cfg.seed = seed;
    cfg.height = cfg.width = size == 0 ? 40 : size;
    all = generate_hinge_dataset(cfg);
    standardize = true;
  } else if (kind == "digits") {
    DigitsConfig cfg;
    cfg.count = count;
    cfg.seed = seed;
    cfg.size = size == 0 ? 28 : size;
    all = generate_digits_dataset(cfg);
    if (theta_sigma != 0.0 || t_sigma != 0.0) {
      all = apply_random_transforms(all, theta_sigma, t_sigma, seed);
    }
  } else if (kind == "mnist-plain" || kind == "mnist-rotated" || kind == "mnist-rot-trans") {
    if (in_dir.empty()) throw DataError("generate " + kind + " requires --in with MNIST IDX files");
    std::string train_idx = (fs::path(in_dir) / "train-images-idx3-ubyte").string();
    std::string test_idx = (fs::path(in_dir) / "t10k-images-idx3-ubyte").string();
    ImageDataset train = load_idx_images(train_idx);
    ImageDataset test = load_idx_images(test_idx);
    double ts = kind == "mnist-plain" ? 0.0 : kPi / 4.0;
    double xs = kind == "mnist-rot-trans" ? 14.0 : (kind == "mnist-rotated" ? 1.4 : 0.0);
    if (ts != 0.0 || xs != 0.0) {
      train = apply_random_transforms(train, ts, xs, seed);
      test = apply_random_transforms(test, ts, xs, seed + 1);
    }
    train.split = "train";
    test.split = "test";
    save_dataset(train, (fs::path(out_dir) / "train").string());
    save_dataset(test, (fs::path(out_dir) / "test").string());
    std::cout << "wrote " << out_dir << "/train (" << train.count() << ") and " << out_dir
              << "/test (" << test.count() << ")\n";
    return 0;
  } else if (kind == "transform") {
    if (in_dir.empty()) throw DataError("generate transform requires --in with a dataset");
    all = apply_random_transforms(load_dataset(in_dir), theta_sigma, t_sigma, seed);
  } else {
    throw DataError("unknown dataset kind: " + kind);
  }

  if (train_count == 0 || train_count > all.count()) {
    train_count = all.count() * 4 / 5;  // default 80/20
  }
  auto [train, test] = split_dataset(all, train_count);
  if (standardize) standardize_split(train, test);
  save_dataset(train, (fs::path(out_dir) / "train").string());
  save_dataset(test, (fs::path(out_dir) / "test").string());
  std::cout << "wrote " << out_dir << "/train (" << train.count() << ") and " << out_dir
            << "/test (" << test.count() << ")\n";
  return 0;
}

// ---- eval ----

int cmd_eval(const std::string& ckpt_dir, const std::string& data_dir, std::size_t k,
             std::uint64_t seed, const std::string& out_csv) {
  Checkpoint ck = load_checkpoint(ckpt_dir);
  SplitPaths paths = find_splits(data_dir);
  std::vector<std::pair<std::string, ImageDataset>> splits;
  splits.emplace_back("train", load_dataset(paths.train));
  if (paths.has_test) splits.emplace_back("test", load_dataset(paths.test));

  std::vector<std::pair<std::string, CorrelationReport>> reports;
  bool any_manifest = false;
  for (auto& [name, ds] : splits) {
    if (ds.manifest) any_manifest = true;
  }

  std::string csv;
  std::string header = "split,count,k_samples,seed,elbo,recon,kl_z,kl_theta,kl_dx";
  std::vector<std::string> corr_cols;
  std::vector<std::string> rows;
  for (auto& [name, ds] : splits) {
    ElboBreakdown b = estimate_elbo(ds, ck.model, ck.config.priors, k, seed);
    std::string row = name + "," + std::to_string(ds.count()) + "," + std::to_string(k) + "," +
                      std::to_string(seed) + "," + fmt(b.elbo) + "," + fmt(b.recon_loglik) + "," +
                      fmt(b.kl_z) + "," + fmt(b.kl_theta) + "," + fmt(b.kl_dx);
    if (any_manifest && ds.manifest) {
      CorrelationReport rep = correlation_report(ds, ck.model);
      reports.emplace_back(name, rep);
      if (corr_cols.empty()) {
        for (const CorrelationEntry& e : rep.entries) {
          corr_cols.push_back("corr:" + e.variable + ":" + e.factor);
          corr_cols.push_back("abscorr:" + e.variable + ":" + e.factor);
        }
      }
      for (const CorrelationEntry& e : rep.entries) {
        row += "," + fmt(e.coefficient) + "," + fmt(std::abs(e.coefficient));
      }
    }
    rows.push_back(row);
  }
  for (const std::string& c : corr_cols) header += "," + c;
  csv = header + "\n";
  for (const std::string& r : rows) csv += r + "\n";

  if (out_csv.empty()) {
    std::cout << csv;
  } else {
    std::ofstream f(out_csv, std::ios::binary);
    if (!f) throw DataError("cannot write: " + out_csv);
    f << csv;
    for (auto& [name, rep] : reports) {
      fs::path p = fs::path(out_csv).parent_path() / ("correlations_" + name + ".csv");
      std::ofstream cf(p, std::ios::binary);
      cf << rep.to_csv();
    }
    std::cout << "wrote " << out_csv << "\n";
  }
  return 0;
}

// ---- figures ----

int cmd_figures(const std::string& ckpt_dir, const std::string& kind, const std::string& out_png,
                std::size_t grid_n, std::size_t n, std::size_t steps, const std::string& data_dir,
                std::uint64_t seed, std::size_t index_a, std::size_t index_b) {
  Checkpoint ck = load_checkpoint(ckpt_dir);
  std::vector<Tensor> images;
  std::size_t cols = 0;
  if (kind == "manifold") {
    images = manifold_grid(ck.model, grid_n);
    cols = ck.model.gen.z_dim == 2 ? grid_n : images.size();
  } else if (kind == "interpolate") {
    if (data_dir.empty()) throw DataError("figures interpolate requires --data");
    SplitPaths paths = find_splits(data_dir);
    ImageDataset ds = load_dataset(paths.has_test ? paths.test : paths.train);
    if (index_a >= ds.count() || index_b >= ds.count()) {
      throw DataError("figures interpolate: image index out of range");
    }
    images = interpolate_latents(ck.model, ds.flat_image(index_a), ds.flat_image(index_b), steps);
    cols = images.size();
  } else if (kind == "samples") {
    images = sample_images(ck.model, n, seed);
    cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  } else {
    throw DataError("unknown figure kind: " + kind);
  }
  render_png_grid(images, cols, out_png);
  std::cout << "wrote " << out_png << " (" << images.size() << " tiles)\n";
  return 0;
}

// ---- gradcheck ----

int cmd_gradcheck(std::size_t size, std::size_t z_dim, std::size_t hidden, double epsilon,
                  std::uint64_t seed, const std::string& pixel_model, std::size_t batch) {
  TrainConfig cfg;
  cfg.z_dim = z_dim;
  cfg.gen_hidden = cfg.enc_hidden = hidden;
  cfg.pixel_model = pixel_model == "real" ? PixelModel::kReal : PixelModel::kBinary;
  cfg.do_rotation = true;
  cfg.do_translation = true;
  cfg.seed = seed;
  cfg.priors.s_theta = kPi / 4.0;
  cfg.priors.s_dx_pixels = 1.4;
  ModelParams model = init_model(cfg, size, size);

  Rng data_rng = Rng::keyed(seed, {0xDA7A});
  Tensor images({batch, size * size});
  for (std::size_t i = 0; i < images.size(); ++i) images[i] = data_rng.u01();
  Rng noise_rng = Rng::keyed(seed, {rng_tag::kNoise, 0, 0});
  BatchNoise noise = draw_batch_noise(batch, model.enc, noise_rng);
  GraphOptions opts;
  opts.priors = cfg.priors;

  std::vector<Tensor> params;
  for (const Tensor* p : param_ptrs(std::as_const(model))) params.push_back(*p);
  auto build = [&](Tape& t, const std::vector<VarId>& vars) {
    return build_batch_graph(t, model, vars, images, noise, opts).loss;
  };
  double err = finite_diff_check(build, params, epsilon);
  std::size_t coords = 0;
  for (const Tensor& p : params) coords += p.size();
  std::printf("gradcheck: %zux%zu image, z_dim=%zu, hidden=%zu, %s pixels, %zu coordinates\n",
              size, size, z_dim, hidden, pixel_model.c_str(), coords);
  std::printf("max relative error vs central differences (eps=%g): %.3e\n", epsilon, err);
  if (err <= 1e-4) {
    std::printf("PASS (<= 1e-4)\n");
    return 0;
  }
  std::printf("FAIL (> 1e-4)\n");
  return 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spatial-vae: coordinate-conditioned VAE with pose inference"};
  app.require_subcommand(1);

  int threads = 0;
  app.add_option("--threads", threads, "worker threads (default: hardware)");

  std::string data_root;
  if (const char* env = std::getenv("SVAE_DATA_ROOT")) data_root = env;

  // generate
  auto* gen = app.add_subcommand("generate", "generate a dataset (train/ + test/ split dirs)");
  std::string g_kind, g_in, g_out;
  std::uint64_t g_seed = 0;
  std::size_t g_count = 20000, g_train_count = 0, g_size = 0;
  double g_theta_sigma = 0.0, g_t_sigma = 0.0;
  HingeConfig g_hinge;
  gen->add_option("kind", g_kind,
                  "hinge | digits | mnist-plain | mnist-rotated | mnist-rot-trans | transform")
      ->required();
  gen->add_option("--in", g_in, "input directory (IDX files or dataset)");
  gen->add_option("--out", g_out, "output directory")->required();
  gen->add_option("--seed", g_seed, "generation seed")->required();
  gen->add_option("--count", g_count, "total images (hinge/digits)");
  gen->add_option("--train-count", g_train_count, "train split size (default 80%)");
  gen->add_option("--size", g_size, "image side length");
  gen->add_option("--theta-sigma", g_theta_sigma, "rotation sigma, radians (digits/transform)");
  gen->add_option("--t-sigma", g_t_sigma, "translation sigma, pixels (digits/transform)");
  gen->add_option("--hinge-steps", g_hinge.n_steps, "hinge conformation steps");
  gen->add_option("--hinge-step-degrees", g_hinge.step_degrees, "degrees per hinge step");
  gen->add_option("--hinge-noise", g_hinge.noise_sigma, "hinge noise sigma (0-255 scale)");

  // train
  auto* tr = app.add_subcommand("train", "train a model");
  tr->set_config("--config", "", "flat key=value config file (flags override)");
  std::string t_data, t_out, t_preset, t_resume;
  std::optional<std::size_t> t_z, t_epochs, t_batch, t_freeze, t_gen_hidden, t_enc_hidden,
      t_gen_layers, t_enc_layers, t_eval_every, t_ckpt_every;
  std::optional<double> t_lr, t_stheta, t_sdx;
  std::optional<std::uint64_t> t_seed;
  bool t_no_rot = false, t_no_trans = false, t_vanilla = false, t_augment = false,
       t_no_augment = false, t_mean_free = false, t_nonneg = false;
  tr->add_option("--data", t_data, "dataset directory (with train/ and test/)")->required();
  tr->add_option("--out", t_out, "output directory")->required();
  tr->add_option("--preset", t_preset, "experiment preset name");
  tr->add_option("--resume", t_resume, "checkpoint directory to resume from");
  tr->add_option("--z-dim", t_z);
  tr->add_option("--epochs", t_epochs);
  tr->add_option("--batch", t_batch);
  tr->add_option("--lr", t_lr);
  tr->add_option("--seed", t_seed);
  tr->add_option("--freeze-z-epochs", t_freeze);
  tr->add_option("--gen-hidden", t_gen_hidden);
  tr->add_option("--enc-hidden", t_enc_hidden);
  tr->add_option("--gen-layers", t_gen_layers);
  tr->add_option("--enc-layers", t_enc_layers);
  tr->add_option("--eval-every", t_eval_every);
  tr->add_option("--checkpoint-every", t_ckpt_every);
  tr->add_option("--s-theta", t_stheta, "theta prior sigma, radians");
  tr->add_option("--s-dx", t_sdx, "translation prior sigma, pixels");
  tr->add_flag("--no-rotation", t_no_rot);
  tr->add_flag("--no-translation", t_no_trans);
  tr->add_flag("--vanilla", t_vanilla, "vanilla per-pixel generator baseline");
  tr->add_flag("--augment", t_augment, "rotation augmentation of the inference net");
  tr->add_flag("--no-augment", t_no_augment);
  tr->add_flag("--uniform-theta-prior", t_mean_free, "mean-free KL for theta");
  tr->add_flag("--nonneg-mean", t_nonneg, "clamp real pixel mean to >= 0");

  // eval
  auto* ev = app.add_subcommand("eval", "held-out ELBO and correlation metrics");
  std::string e_ckpt, e_data, e_out;
  std::size_t e_k = 1;
  std::uint64_t e_seed = 0;
  ev->add_option("--ckpt", e_ckpt, "checkpoint directory")->required();
  ev->add_option("--data", e_data, "dataset directory")->required();
  ev->add_option("--k", e_k, "samples per image");
  ev->add_option("--seed", e_seed);
  ev->add_option("--out", e_out, "metrics CSV path (default: stdout)");

  // figures
  auto* fg = app.add_subcommand("figures", "render PNG figures from a checkpoint");
  std::string f_ckpt, f_kind, f_out, f_data;
  std::size_t f_grid = 15, f_n = 64, f_steps = 8, f_a = 0, f_b = 1;
  std::uint64_t f_seed = 0;
  fg->add_option("--ckpt", f_ckpt)->required();
  fg->add_option("kind", f_kind, "manifold | interpolate | samples")->required();
  fg->add_option("--out", f_out, "output PNG path")->required();
  fg->add_option("--grid", f_grid, "manifold grid size per axis");
  fg->add_option("--n", f_n, "sample count");
  fg->add_option("--steps", f_steps, "interpolation steps");
  fg->add_option("--data", f_data, "dataset for interpolation endpoints");
  fg->add_option("--seed", f_seed);
  fg->add_option("--index-a", f_a);
  fg->add_option("--index-b", f_b);

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "full-model gradient check vs central differences");
  std::size_t c_size = 6, c_z = 2, c_hidden = 8, c_batch = 2;
  double c_eps = 1e-5;
  std::uint64_t c_seed = 1;
  std::string c_pixel = "binary";
  gc->add_option("--size", c_size, "image side length");
  gc->add_option("--z-dim", c_z);
  gc->add_option("--hidden", c_hidden);
  gc->add_option("--epsilon", c_eps, "central-difference step")
      ->check(CLI::Range(1e-12, 1.0).description("must be positive"));
  gc->add_option("--seed", c_seed);
  gc->add_option("--pixel-model", c_pixel)->check(CLI::IsMember({"binary", "real"}));
  gc->add_option("--batch", c_batch);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (threads > 0) set_threads(threads);
    if (gen->parsed()) {
      return cmd_generate(g_kind, g_in, g_out, g_seed, g_count, g_train_count, g_size,
                          g_theta_sigma, g_t_sigma, g_hinge);
    }
    if (tr->parsed()) {
      TrainConfig cfg = preset_config(t_preset);
      if (t_vanilla) {
        cfg.generator = GeneratorKind::kVanilla;
        cfg.do_rotation = cfg.do_translation = false;
        cfg.augment_rotation = false;
      }
      if (t_z) cfg.z_dim = *t_z;
      if (t_epochs) cfg.epochs = *t_epochs;
      if (t_batch) cfg.batch_size = *t_batch;
      if (t_lr) cfg.lr = *t_lr;
      if (t_seed) cfg.seed = *t_seed;
      if (t_freeze) cfg.freeze_z_epochs = *t_freeze;
      if (t_gen_hidden) cfg.gen_hidden = *t_gen_hidden;
      if (t_enc_hidden) cfg.enc_hidden = *t_enc_hidden;
      if (t_gen_layers) cfg.gen_layers = *t_gen_layers;
      if (t_enc_layers) cfg.enc_layers = *t_enc_layers;
      if (t_eval_every) cfg.eval_every = *t_eval_every;
      if (t_ckpt_every) cfg.checkpoint_every = *t_ckpt_every;
      if (t_stheta) cfg.priors.s_theta = *t_stheta;
      if (t_sdx) cfg.priors.s_dx_pixels = *t_sdx;
      if (t_mean_free) cfg.priors.theta_prior = ThetaPrior::kUniformMeanFree;
      if (t_no_rot) cfg.do_rotation = false;
      if (t_no_trans) cfg.do_translation = false;
      if (t_augment) cfg.augment_rotation = true;
      if (t_no_augment) cfg.augment_rotation = false;
      if (t_nonneg) cfg.clamp_nonneg_mean = true;
      if (!cfg.do_rotation) cfg.augment_rotation = false;

      SplitPaths paths = find_splits(resolve_data_dir(t_data, data_root));
      ImageDataset train = load_dataset(paths.train);
      ImageDataset test;
      if (paths.has_test) test = load_dataset(paths.test);
      cfg.pixel_model = train.pixel_model;
      TrainResult res =
          run_training(cfg, train, paths.has_test ? &test : nullptr, t_out, t_resume);
      const HistoryRow& last = res.history.back();
      std::cout << "epoch " << last.epoch << ": train elbo " << fmt(last.train.elbo);
      if (last.test) std::cout << ", test elbo " << fmt(last.test->elbo);
      std::cout << "\nwrote " << t_out << "/history.csv and " << t_out << "/ckpt-final\n";
      return 0;
    }
    if (ev->parsed()) return cmd_eval(e_ckpt, resolve_data_dir(e_data, data_root), e_k, e_seed, e_out);
    if (fg->parsed()) {
      return cmd_figures(f_ckpt, f_kind, f_out, f_grid, f_n, f_steps,
                         f_data.empty() ? f_data : resolve_data_dir(f_data, data_root), f_seed,
                         f_a, f_b);
    }
    if (gc->parsed()) return cmd_gradcheck(c_size, c_z, c_hidden, c_eps, c_seed, c_pixel, c_batch);
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
