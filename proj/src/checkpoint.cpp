#include <json.hpp>

#include <cstring>
#include <utility>
#include <filesystem>
#include <fstream>

#include "svae/errors.hpp"
#include "svae/train.hpp"

namespace svae {

namespace {

using nlohmann::json;

constexpr int kCheckpointVersion = 1;

std::uint32_t crc32(const std::vector<unsigned char>& data) {
  static std::uint32_t table[256];
  static bool built = false;
  if (!built) {
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
    built = true;
  }
  std::uint32_t c = 0xffffffffu;
  for (unsigned char b : data) c = table[(c ^ b) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

std::vector<unsigned char> pack_f64(const std::vector<const Tensor*>& tensors) {
  std::size_t total = 0;
  for (const Tensor* t : tensors) total += t->size();
  std::vector<unsigned char> bytes(total * 8);
  std::size_t off = 0;
  for (const Tensor* t : tensors) {
    for (std::size_t i = 0; i < t->size(); ++i) {
      std::uint64_t u;
      double d = (*t)[i];
      std::memcpy(&u, &d, 8);
      for (int b = 0; b < 8; ++b) bytes[off++] = (u >> (8 * b)) & 0xff;
    }
  }
  return bytes;
}

void unpack_f64(const std::vector<unsigned char>& bytes, std::vector<Tensor*>& tensors) {
  std::size_t off = 0;
  for (Tensor* t : tensors) {
    for (std::size_t i = 0; i < t->size(); ++i) {
      std::uint64_t u = 0;
      for (int b = 0; b < 8; ++b) u |= std::uint64_t(bytes[off++]) << (8 * b);
      double d;
      std::memcpy(&d, &u, 8);
      (*t)[i] = d;
    }
  }
}

void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing: " + path);
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw DataError("cannot open: " + path);
  std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) throw DataError("failed reading: " + path);
  return bytes;
}

json config_to_json(const TrainConfig& c) {
  json j;
  j["generator"] = c.generator == GeneratorKind::kSpatial ? "spatial" : "vanilla";
  j["pixel_model"] = c.pixel_model == PixelModel::kBinary ? "binary" : "real";
  j["z_dim"] = c.z_dim;
  j["gen_hidden"] = c.gen_hidden;
  j["gen_layers"] = c.gen_layers;
  j["enc_hidden"] = c.enc_hidden;
  j["enc_layers"] = c.enc_layers;
  j["rotation"] = c.do_rotation;
  j["translation"] = c.do_translation;
  j["clamp_nonneg_mean"] = c.clamp_nonneg_mean;
  j["s_theta"] = c.priors.s_theta;
  j["s_dx_pixels"] = c.priors.s_dx_pixels;
  j["theta_prior"] =
      c.priors.theta_prior == ThetaPrior::kUniformMeanFree ? "uniform-mean-free" : "gaussian";
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["freeze_z_epochs"] = c.freeze_z_epochs;
  j["augment_rotation"] = c.augment_rotation;
  j["seed"] = c.seed;
  j["eval_every"] = c.eval_every;
  j["checkpoint_every"] = c.checkpoint_every;
  j["rng_scheme"] = "keyed-streams-v1";  // streams derived from (seed, tag, epoch, step)
  return j;
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.generator = j.at("generator") == "spatial" ? GeneratorKind::kSpatial : GeneratorKind::kVanilla;
  c.pixel_model = j.at("pixel_model") == "binary" ? PixelModel::kBinary : PixelModel::kReal;
  c.z_dim = j.at("z_dim").get<std::size_t>();
  c.gen_hidden = j.at("gen_hidden").get<std::size_t>();
  c.gen_layers = j.at("gen_layers").get<std::size_t>();
  c.enc_hidden = j.at("enc_hidden").get<std::size_t>();
  c.enc_layers = j.at("enc_layers").get<std::size_t>();
  c.do_rotation = j.at("rotation").get<bool>();
  c.do_translation = j.at("translation").get<bool>();
  c.clamp_nonneg_mean = j.at("clamp_nonneg_mean").get<bool>();
  c.priors.s_theta = j.at("s_theta").get<double>();
  c.priors.s_dx_pixels = j.at("s_dx_pixels").get<double>();
  c.priors.theta_prior = j.at("theta_prior") == "uniform-mean-free" ? ThetaPrior::kUniformMeanFree
                                                                    : ThetaPrior::kGaussian;
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.lr = j.at("lr").get<double>();
  c.freeze_z_epochs = j.at("freeze_z_epochs").get<std::size_t>();
  c.augment_rotation = j.at("augment_rotation").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.eval_every = j.at("eval_every").get<std::size_t>();
  c.checkpoint_every = j.at("checkpoint_every").get<std::size_t>();
  return c;
}

json breakdown_to_json(const ElboBreakdown& b) {
  return json{{"elbo", b.elbo},
              {"recon", b.recon_loglik},
              {"kl_z", b.kl_z},
              {"kl_theta", b.kl_theta},
              {"kl_dx", b.kl_dx}};
}

ElboBreakdown breakdown_from_json(const json& j) {
  ElboBreakdown b;
  b.elbo = j.at("elbo").get<double>();
  b.recon_loglik = j.at("recon").get<double>();
  b.kl_z = j.at("kl_z").get<double>();
  b.kl_theta = j.at("kl_theta").get<double>();
  b.kl_dx = j.at("kl_dx").get<double>();
  return b;
}

}  // namespace

void save_checkpoint(const std::string& dir, const Checkpoint& ckpt) {
  std::filesystem::create_directories(dir);
  std::vector<const Tensor*> params = param_ptrs(ckpt.model);
  std::vector<unsigned char> params_bytes = pack_f64(params);

  std::vector<const Tensor*> adam_tensors;
  for (const Tensor& t : ckpt.opt.m) adam_tensors.push_back(&t);
  for (const Tensor& t : ckpt.opt.v) adam_tensors.push_back(&t);
  std::vector<unsigned char> adam_bytes = pack_f64(adam_tensors);

  json h;
  h["format"] = "svae-checkpoint";
  h["version"] = kCheckpointVersion;
  h["epoch"] = ckpt.epoch;
  h["config"] = config_to_json(ckpt.config);
  h["arch"] = {{"height", ckpt.model.height},
               {"width", ckpt.model.width},
               {"gen_layers", ckpt.model.gen.mlp.weights.size()},
               {"enc_layers", ckpt.model.enc.mlp.weights.size()}};
  json dims = json::array();
  for (const Tensor* p : params) {
    json d = json::array();
    for (std::size_t s : p->shape()) d.push_back(s);
    dims.push_back(d);
  }
  h["param_shapes"] = dims;
  json names = json::array();
  for (const std::string& n : param_names(ckpt.model)) names.push_back(n);
  h["param_names"] = names;
  h["adam_step"] = ckpt.opt.step;
  h["adam"] = {{"lr", ckpt.opt.cfg.lr},
               {"beta1", ckpt.opt.cfg.beta1},
               {"beta2", ckpt.opt.cfg.beta2},
               {"eps", ckpt.opt.cfg.eps}};
  h["crc32_params"] = crc32(params_bytes);
  h["crc32_adam"] = crc32(adam_bytes);
  h["gen"] = {{"n_pixels", ckpt.model.gen.n_pixels}};
  json hist = json::array();
  for (const HistoryRow& r : ckpt.history) {
    json row;
    row["epoch"] = r.epoch;
    row["train"] = breakdown_to_json(r.train);
    if (r.test) row["test"] = breakdown_to_json(*r.test);
    hist.push_back(row);
  }
  h["history"] = hist;

  std::ofstream out(dir + "/header.json", std::ios::binary);
  if (!out) throw DataError("cannot write: " + dir + "/header.json");
  out << h.dump(2) << "\n";
  out.close();
  write_file(dir + "/params.f64", params_bytes);
  write_file(dir + "/adam.f64", adam_bytes);
}

Checkpoint load_checkpoint(const std::string& dir) {
  std::ifstream in(dir + "/header.json");
  if (!in) throw DataError("not a checkpoint directory (missing header.json): " + dir);
  json h = json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (h.is_discarded()) throw DataError("malformed checkpoint header: " + dir);
  if (h.value("format", "") != "svae-checkpoint") throw DataError("unknown checkpoint format: " + dir);
  if (h.value("version", -1) != kCheckpointVersion) {
    throw DataError("checkpoint version mismatch in " + dir + " (have " +
                    std::to_string(h.value("version", -1)) + ", expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }

  Checkpoint ck;
  ck.config = config_from_json(h.at("config"));
  ck.epoch = h.at("epoch").get<std::size_t>();
  std::size_t height = h.at("arch").at("height").get<std::size_t>();
  std::size_t width = h.at("arch").at("width").get<std::size_t>();
  ck.model = init_model(ck.config, height, width);  // shapes; values overwritten below
  ck.model.gen.n_pixels = h.at("gen").at("n_pixels").get<std::size_t>();

  std::vector<unsigned char> params_bytes = read_file(dir + "/params.f64");
  std::vector<Tensor*> params = param_ptrs(ck.model);
  std::size_t expect = 0;
  for (Tensor* p : params) expect += p->size() * 8;
  if (params_bytes.size() != expect) throw DataError("checkpoint params payload size mismatch: " + dir);
  if (crc32(params_bytes) != h.at("crc32_params").get<std::uint32_t>()) {
    throw DataError("checkpoint params checksum error: " + dir);
  }
  unpack_f64(params_bytes, params);

  ck.opt = AdamState::init(param_ptrs(std::as_const(ck.model)), [&] {
    AdamConfig a;
    a.lr = h.at("adam").at("lr").get<double>();
    a.beta1 = h.at("adam").at("beta1").get<double>();
    a.beta2 = h.at("adam").at("beta2").get<double>();
    a.eps = h.at("adam").at("eps").get<double>();
    return a;
  }());
  ck.opt.step = h.at("adam_step").get<std::int64_t>();
  std::vector<unsigned char> adam_bytes = read_file(dir + "/adam.f64");
  if (adam_bytes.size() != 2 * expect) throw DataError("checkpoint adam payload size mismatch: " + dir);
  if (crc32(adam_bytes) != h.at("crc32_adam").get<std::uint32_t>()) {
    throw DataError("checkpoint adam checksum error: " + dir);
  }
  std::vector<Tensor*> adam_tensors;
  for (Tensor& t : ck.opt.m) adam_tensors.push_back(&t);
  for (Tensor& t : ck.opt.v) adam_tensors.push_back(&t);
  unpack_f64(adam_bytes, adam_tensors);

  for (const json& row : h.at("history")) {
    HistoryRow r;
    r.epoch = row.at("epoch").get<std::size_t>();
    r.train = breakdown_from_json(row.at("train"));
    if (row.contains("test")) r.test = breakdown_from_json(row.at("test"));
    ck.history.push_back(r);
  }
  return ck;
}

}  // namespace svae
