#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "svae/data.hpp"
#include "svae/errors.hpp"
#include "svae/evalkit.hpp"
#include "svae/geometry.hpp"
#include "svae/train.hpp"

using namespace svae;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("svae_train_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  REQUIRE(in.good());
  std::vector<unsigned char> bytes(static_cast<std::size_t>(in.tellg()));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  return bytes;
}

ImageDataset tiny_digits(std::size_t count, std::size_t size, std::uint64_t seed) {
  DigitsConfig cfg;
  cfg.count = count;
  cfg.size = size;
  cfg.seed = seed;
  return generate_digits_dataset(cfg);
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.z_dim = 2;
  cfg.gen_hidden = cfg.enc_hidden = 12;
  cfg.epochs = 2;
  cfg.batch_size = 5;
  cfg.seed = 77;
  cfg.priors.s_theta = kPi / 4.0;
  cfg.priors.s_dx_pixels = 1.4;
  cfg.eval_every = 1;
  return cfg;
}

bool params_equal(const ModelParams& a, const ModelParams& b) {
  auto pa = param_ptrs(std::as_const(a));
  auto pb = param_ptrs(std::as_const(b));
  if (pa.size() != pb.size()) return false;
  for (std::size_t k = 0; k < pa.size(); ++k) {
    if (pa[k]->size() != pb[k]->size()) return false;
    for (std::size_t i = 0; i < pa[k]->size(); ++i) {
      if ((*pa[k])[i] != (*pb[k])[i]) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("zero learning rate leaves parameters unchanged but reports the elbo") {
  ImageDataset ds = tiny_digits(10, 10, 1);
  TrainConfig cfg = tiny_config();
  cfg.lr = 0.0;
  cfg.epochs = 1;
  ModelParams model = init_model(cfg, ds.height(), ds.width());
  ModelParams before = model;
  AdamState opt = AdamState::init(param_ptrs(std::as_const(model)), cfg.adam());
  Tensor batch({2, ds.pixels()});
  std::memcpy(batch.data(), ds.images.data(), 2 * ds.pixels() * sizeof(double));
  Rng nrng(5);
  BatchNoise noise = draw_batch_noise(2, model.enc, nrng);
  GraphOptions opts;
  opts.priors = cfg.priors;
  ElboBreakdown b = train_step(model, opt, batch, noise, opts);
  CHECK(std::isfinite(b.elbo));
  CHECK(b.elbo == doctest::Approx(b.recon_loglik - b.kl_z - b.kl_theta - b.kl_dx));
  CHECK(params_equal(model, before));
}

TEST_CASE("frozen z forces the sample to zero and drops its KL") {
  ImageDataset ds = tiny_digits(4, 8, 2);
  TrainConfig cfg = tiny_config();
  ModelParams model = init_model(cfg, 8, 8);
  Tensor batch({4, 64});
  std::memcpy(batch.data(), ds.images.data(), 4 * 64 * sizeof(double));
  Rng nrng(6);
  BatchNoise noise = draw_batch_noise(4, model.enc, nrng);
  GraphOptions opts;
  opts.priors = cfg.priors;
  opts.freeze_z = true;

  Tape tape;
  std::vector<VarId> vars;
  for (const Tensor* p : param_ptrs(std::as_const(model))) vars.push_back(tape.param(*p));
  BatchGraph g = build_batch_graph(tape, model, vars, batch, noise, opts);
  CHECK(g.kl_z_sum == -1);
  const Tensor& zs = tape.value(g.z_sample);
  for (std::size_t i = 0; i < zs.size(); ++i) CHECK(zs[i] == 0.0);
}

TEST_CASE("one small step on one image decreases the frozen-noise loss") {
  ImageDataset ds = tiny_digits(1, 10, 3);
  TrainConfig cfg = tiny_config();
  cfg.lr = 1e-3;
  ModelParams model = init_model(cfg, 10, 10);
  AdamState opt = AdamState::init(param_ptrs(std::as_const(model)), cfg.adam());
  Tensor batch({1, 100});
  std::memcpy(batch.data(), ds.images.data(), 100 * sizeof(double));
  Rng nrng(7);
  BatchNoise noise = draw_batch_noise(1, model.enc, nrng);
  GraphOptions opts;
  opts.priors = cfg.priors;

  auto loss_at = [&](const ModelParams& m) {
    Tape t;
    std::vector<VarId> vars;
    for (const Tensor* p : param_ptrs(std::as_const(m))) vars.push_back(t.param(*p));
    BatchGraph g = build_batch_graph(t, m, vars, batch, noise, opts);
    return t.value(g.loss).item();
  };
  double before = loss_at(model);
  train_step(model, opt, batch, noise, opts);
  double after = loss_at(model);
  CHECK(after < before);
}

TEST_CASE("rotation augmentation with gamma = 0 matches the plain pipeline bitwise") {
  ImageDataset ds = tiny_digits(3, 9, 4);
  TrainConfig cfg = tiny_config();
  cfg.priors.theta_prior = ThetaPrior::kUniformMeanFree;
  ModelParams model = init_model(cfg, 9, 9);
  Tensor batch({3, 81});
  std::memcpy(batch.data(), ds.images.data(), 3 * 81 * sizeof(double));
  Rng nrng(8);
  BatchNoise noise = draw_batch_noise(3, model.enc, nrng);

  GraphOptions plain;
  plain.priors = cfg.priors;
  Tape t1;
  std::vector<VarId> v1;
  for (const Tensor* p : param_ptrs(std::as_const(model))) v1.push_back(t1.param(*p));
  BatchGraph g1 = build_batch_graph(t1, model, v1, batch, noise, plain);

  GraphOptions aug = plain;
  aug.gammas = {0.0, 0.0, 0.0};
  Tape t2;
  std::vector<VarId> v2;
  for (const Tensor* p : param_ptrs(std::as_const(model))) v2.push_back(t2.param(*p));
  BatchGraph g2 = build_batch_graph(t2, model, v2, batch, noise, aug);

  CHECK(t1.value(g1.loss).item() == t2.value(g2.loss).item());
  CHECK(t1.value(g1.recon_sum).item() == t2.value(g2.recon_sum).item());
}

TEST_CASE("rotation augmentation: corrected mean and exact-lattice invariance") {
  // A 4-fold symmetric image is bitwise invariant under the quarter-turn
  // resample, so feeding gamma = pi/2 must reproduce the unaugmented elbo
  // exactly under the mean-free theta prior.
  std::size_t n = 9;
  Rng rng(9);
  Tensor base({n, n});
  for (std::size_t i = 0; i < base.size(); ++i) base[i] = rng.u01();
  Tensor sym({n, n});
  Tensor r1 = resample(base, kPi / 2.0, {0, 0});
  Tensor r2 = resample(base, kPi, {0, 0});
  Tensor r3 = resample(base, 3.0 * kPi / 2.0, {0, 0});
  for (std::size_t i = 0; i < sym.size(); ++i) {
    sym[i] = 0.25 * (base[i] + r1[i] + r2[i] + r3[i]);
  }
  Tensor check = resample(sym, kPi / 2.0, {0, 0});
  double symdiff = 0.0;
  for (std::size_t i = 0; i < sym.size(); ++i) symdiff = std::max(symdiff, std::abs(check[i] - sym[i]));
  REQUIRE(symdiff < 1e-15);

  TrainConfig cfg = tiny_config();
  cfg.priors.theta_prior = ThetaPrior::kUniformMeanFree;
  cfg.do_translation = false;
  ModelParams model = init_model(cfg, n, n);
  Tensor batch({1, n * n}, std::vector<double>(sym.vec()));
  Rng nrng(10);
  BatchNoise noise = draw_batch_noise(1, model.enc, nrng);

  GraphOptions plain;
  plain.priors = cfg.priors;
  Tape t1;
  std::vector<VarId> v1;
  for (const Tensor* p : param_ptrs(std::as_const(model))) v1.push_back(t1.param(*p));
  BatchGraph g1 = build_batch_graph(t1, model, v1, batch, noise, plain);

  // Augmented pipeline: encoder sees the (identical) rotated image.
  AugmentedBatch ab;
  ab.images = batch;
  ab.gammas = {kPi / 2.0};
  GraphOptions aug = plain;
  aug.gammas = ab.gammas;
  Tape t2;
  std::vector<VarId> v2;
  for (const Tensor* p : param_ptrs(std::as_const(model))) v2.push_back(t2.param(*p));
  BatchGraph g2 = build_batch_graph(t2, model, v2, ab.images, noise, aug);

  // Equal up to the float round-trip of (mu - gamma) + gamma in the decode
  // angle; the gamma bookkeeping cancels exactly in exact arithmetic.
  CHECK(t1.value(g1.elbo_sum).item() ==
        doctest::Approx(t2.value(g2.elbo_sum).item()).epsilon(1e-12));
  // The reported rotation mean carries the -gamma correction.
  double mu_plain = t1.value(g1.mu_theta)[0];
  double mu_aug = t2.value(g2.mu_theta)[0];
  CHECK(mu_aug == mu_plain - kPi / 2.0);
  // The decode angle re-adds gamma on top of the corrected sample.
  CHECK(t2.value(g2.theta_decode)[0] ==
        doctest::Approx(t2.value(g2.theta_sample)[0] + kPi / 2.0).epsilon(1e-15));
}

TEST_CASE("rotation_augment is deterministic given its keys") {
  ImageDataset ds = tiny_digits(5, 9, 11);
  std::vector<std::size_t> idx = {0, 2, 4};
  AugmentedBatch a = rotation_augment(ds, idx, 3, 1, 2);
  AugmentedBatch b = rotation_augment(ds, idx, 3, 1, 2);
  CHECK(a.gammas == b.gammas);
  for (std::size_t i = 0; i < a.images.size(); ++i) CHECK(a.images[i] == b.images[i]);
  AugmentedBatch c = rotation_augment(ds, idx, 3, 1, 3);
  CHECK(a.gammas != c.gammas);
  for (double g : a.gammas) {
    CHECK(g >= 0.0);
    CHECK(g < 2.0 * kPi);
  }
}

TEST_CASE("ablated and full bounds share the reconstruction path") {
  // With a zeroed encoder head (mu = 0 everywhere) and pose noise forced to
  // zero, the full model's reconstruction term equals the rotation-free
  // model's bitwise; the bounds differ only by the pose KL terms.
  std::size_t n = 8;
  ImageDataset ds = tiny_digits(2, n, 13);
  TrainConfig full_cfg = tiny_config();
  ModelParams full = init_model(full_cfg, n, n);
  auto zero_head = [](MlpParams& mlp) {
    for (auto& t : {std::ref(mlp.weights.back()), std::ref(mlp.biases.back())}) {
      Tensor& x = t.get();
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.0;
    }
  };
  zero_head(full.enc.mlp);

  TrainConfig abl_cfg = full_cfg;
  abl_cfg.do_rotation = abl_cfg.do_translation = false;
  ModelParams ablated = init_model(abl_cfg, n, n);
  ablated.gen = full.gen;  // same generator weights
  zero_head(ablated.enc.mlp);

  Tensor batch({2, n * n});
  std::memcpy(batch.data(), ds.images.data(), 2 * n * n * sizeof(double));

  Rng nrng(14);
  BatchNoise noise_full = draw_batch_noise(2, full.enc, nrng);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t k = full_cfg.z_dim; k < noise_full.per_image; ++k) {
      noise_full.draws[i * noise_full.per_image + k] = 0.0;  // pose noise off
    }
  }
  BatchNoise noise_abl;
  noise_abl.batch = 2;
  noise_abl.per_image = abl_cfg.z_dim;
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t k = 0; k < abl_cfg.z_dim; ++k) {
      noise_abl.draws.push_back(noise_full.draws[i * noise_full.per_image + k]);
    }
  }

  GraphOptions opts;
  opts.priors = full_cfg.priors;
  Tape t1;
  std::vector<VarId> v1;
  for (const Tensor* p : param_ptrs(std::as_const(full))) v1.push_back(t1.param(*p));
  BatchGraph g1 = build_batch_graph(t1, full, v1, batch, noise_full, opts);
  Tape t2;
  std::vector<VarId> v2;
  for (const Tensor* p : param_ptrs(std::as_const(ablated))) v2.push_back(t2.param(*p));
  BatchGraph g2 = build_batch_graph(t2, ablated, v2, batch, noise_abl, opts);

  CHECK(t1.value(g1.recon_sum).item() == t2.value(g2.recon_sum).item());
  CHECK(g2.kl_theta_sum == -1);
  CHECK(g2.kl_dx_sum == -1);
}

TEST_CASE("full-run determinism and history consistency") {
  ImageDataset ds = tiny_digits(12, 8, 15);
  auto [train, test] = split_dataset(ds, 9);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 3;
  TrainResult a = run_training(cfg, train, &test, "");
  TrainResult b = run_training(cfg, train, &test, "");
  CHECK(params_equal(a.model, b.model));
  REQUIRE(a.history.size() == 3);
  for (std::size_t e = 0; e < 3; ++e) {
    CHECK(a.history[e].train.elbo == b.history[e].train.elbo);
    REQUIRE(a.history[e].test.has_value());
    CHECK(a.history[e].test->elbo == b.history[e].test->elbo);
  }
}

TEST_CASE("checkpoint round-trip is byte-identical and validates corruption") {
  ImageDataset ds = tiny_digits(10, 8, 16);
  auto [train, test] = split_dataset(ds, 8);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 2;
  std::string out = temp_dir("ckpt");
  TrainResult res = run_training(cfg, train, &test, out);

  std::string first = out + "/ckpt-final";
  Checkpoint ck = load_checkpoint(first);
  CHECK(params_equal(ck.model, res.model));
  CHECK(ck.epoch == 2);
  CHECK(ck.opt.step == res.opt.step);
  REQUIRE(ck.history.size() == 2);
  CHECK(ck.history[1].train.elbo == res.history[1].train.elbo);

  std::string second = temp_dir("ckpt2") + "/resaved";
  save_checkpoint(second, ck);
  for (const char* f : {"/header.json", "/params.f64", "/adam.f64"}) {
    CHECK(slurp(first + f) == slurp(second + f));
  }

  // Truncate the params payload: load must fail the checksum/size check.
  std::string corrupt = temp_dir("ckpt3") + "/bad";
  save_checkpoint(corrupt, ck);
  {
    auto bytes = slurp(corrupt + "/params.f64");
    bytes.resize(bytes.size() - 8);
    std::ofstream f(corrupt + "/params.f64", std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(load_checkpoint(corrupt), DataError);

  // Flip one payload byte: the checksum must catch it.
  std::string flipped = temp_dir("ckpt4") + "/flip";
  save_checkpoint(flipped, ck);
  {
    auto bytes = slurp(flipped + "/params.f64");
    bytes[10] ^= 0xff;
    std::ofstream f(flipped + "/params.f64", std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(flipped), doctest::Contains("checksum"), DataError);
}

TEST_CASE("resume reproduces the uninterrupted trajectory bit-exactly") {
  ImageDataset ds = tiny_digits(14, 8, 17);
  auto [train, test] = split_dataset(ds, 10);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 4;
  cfg.checkpoint_every = 2;

  std::string full_dir = temp_dir("full");
  TrainResult full = run_training(cfg, train, &test, full_dir);

  std::string part_dir = temp_dir("part");
  TrainConfig half = cfg;
  half.epochs = 2;
  run_training(half, train, &test, part_dir);
  TrainResult resumed = run_training(cfg, train, &test, part_dir, part_dir + "/ckpt-final");

  CHECK(params_equal(full.model, resumed.model));
  REQUIRE(resumed.history.size() == 4);
  for (std::size_t e = 0; e < 4; ++e) {
    CHECK(full.history[e].train.elbo == resumed.history[e].train.elbo);
  }
  CHECK(slurp(full_dir + "/history.csv") == slurp(part_dir + "/history.csv"));
}

TEST_CASE("training a fuzzed tiny dataset never yields non-finite parameters") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng = Rng::keyed(seed, {0xF0});
    ImageDataset ds;
    ds.pixel_model = PixelModel::kReal;
    ds.images = Tensor({16, 6, 6});
    for (std::size_t i = 0; i < ds.images.size(); ++i) ds.images[i] = 3.0 * rng.normal();
    TrainConfig cfg;
    cfg.pixel_model = PixelModel::kReal;
    cfg.z_dim = 1;
    cfg.gen_hidden = cfg.enc_hidden = 8;
    cfg.epochs = 50;
    cfg.batch_size = 8;
    cfg.lr = 1e-2;  // deliberately hot
    cfg.seed = seed;
    cfg.do_translation = false;
    cfg.priors.s_theta = kPi;
    cfg.priors.theta_prior = ThetaPrior::kUniformMeanFree;
    cfg.eval_every = 0;
    TrainResult res = run_training(cfg, ds, nullptr, "");
    for (const Tensor* p : param_ptrs(std::as_const(res.model))) CHECK(p->all_finite());
  }
}

TEST_CASE("history csv formatting") {
  std::vector<HistoryRow> rows(2);
  rows[0].epoch = 1;
  rows[0].train.elbo = -1.5;
  rows[1].epoch = 2;
  rows[1].train.elbo = -1.25;
  rows[1].test = ElboBreakdown{};
  std::string csv = history_to_csv(rows);
  CHECK(csv.find("epoch,train_elbo") == 0);
  CHECK(csv.find("\n1,-1.5,") != std::string::npos);
  CHECK(csv.find("\n2,-1.25,") != std::string::npos);
}
