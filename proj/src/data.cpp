#include "svae/data.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "svae/errors.hpp"
#include "svae/geometry.hpp"
#include "svae/rng.hpp"

namespace svae {

namespace fs = std::filesystem;
using nlohmann::json;

Tensor ImageDataset::image(std::size_t i) const {
  std::size_t n = pixels();
  Tensor out({height(), width()});
  std::memcpy(out.data(), images.data() + i * n, n * sizeof(double));
  return out;
}

Tensor ImageDataset::flat_image(std::size_t i) const {
  std::size_t n = pixels();
  Tensor out({n});
  std::memcpy(out.data(), images.data() + i * n, n * sizeof(double));
  return out;
}

double wrap_angle(double theta) {
  double r = std::remainder(theta, 6.283185307179586476925286766559);
  if (r <= -3.14159265358979323846) r += 6.283185307179586476925286766559;
  return r;
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_f32(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write: " + path);
  std::vector<unsigned char> bytes(t.size() * 4);
  for (std::size_t i = 0; i < t.size(); ++i) {
    float f = static_cast<float>(t[i]);
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    bytes[4 * i] = u & 0xff;
    bytes[4 * i + 1] = (u >> 8) & 0xff;
    bytes[4 * i + 2] = (u >> 16) & 0xff;
    bytes[4 * i + 3] = (u >> 24) & 0xff;
  }
  out.write(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing: " + path);
}

void read_f32(const std::string& path, Tensor& t) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::vector<unsigned char> bytes(t.size() * 4);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    throw DataError("truncated image payload: " + path);
  }
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint32_t u = std::uint32_t(bytes[4 * i]) | (std::uint32_t(bytes[4 * i + 1]) << 8) |
                      (std::uint32_t(bytes[4 * i + 2]) << 16) |
                      (std::uint32_t(bytes[4 * i + 3]) << 24);
    float f;
    std::memcpy(&f, &u, 4);
    t[i] = f;
  }
}

}  // namespace

void save_dataset(const ImageDataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  json meta;
  meta["format"] = "svae-dataset";
  meta["version"] = 1;
  meta["count"] = ds.count();
  meta["height"] = ds.height();
  meta["width"] = ds.width();
  meta["pixel_model"] = ds.pixel_model == PixelModel::kBinary ? "binary" : "real";
  meta["split"] = ds.split;
  meta["seed"] = ds.seed;
  if (ds.standardize) {
    meta["standardize"] = {{"mean", ds.standardize->mean}, {"stddev", ds.standardize->stddev}};
  }
  if (!ds.generator_json.empty()) meta["generator"] = json::parse(ds.generator_json);
  if (ds.manifest) {
    json cols = json::array();
    cols.push_back("index");
    if (ds.manifest->has_theta) cols.push_back("theta_rad");
    if (ds.manifest->has_dx) {
      cols.push_back("dx_px");
      cols.push_back("dy_px");
    }
    if (ds.manifest->has_conformation) cols.push_back("conformation");
    meta["manifest_columns"] = cols;
  }
  {
    std::ofstream out(dir + "/meta.json");
    if (!out) throw DataError("cannot write: " + dir + "/meta.json");
    out << meta.dump(2) << "\n";
  }
  write_f32(dir + "/images.f32", ds.images);
  if (ds.manifest) {
    const Manifest& m = *ds.manifest;
    std::ofstream out(dir + "/manifest.csv");
    if (!out) throw DataError("cannot write: " + dir + "/manifest.csv");
    out << "index";
    if (m.has_theta) out << ",theta_rad";
    if (m.has_dx) out << ",dx_px,dy_px";
    if (m.has_conformation) out << ",conformation";
    out << "\n";
    for (std::size_t i = 0; i < ds.count(); ++i) {
      out << i;
      if (m.has_theta) out << "," << fmt_double(m.theta[i]);
      if (m.has_dx) out << "," << fmt_double(m.dx[i][0]) << "," << fmt_double(m.dx[i][1]);
      if (m.has_conformation) out << "," << fmt_double(m.conformation[i]);
      out << "\n";
    }
  }
}

ImageDataset load_dataset(const std::string& dir) {
  std::ifstream in(dir + "/meta.json");
  if (!in) throw DataError("not a dataset directory (missing meta.json): " + dir);
  json meta = json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (meta.is_discarded()) throw DataError("malformed meta.json in " + dir);
  if (meta.value("format", "") != "svae-dataset") throw DataError("unknown dataset format in " + dir);

  ImageDataset ds;
  std::size_t count = meta.at("count").get<std::size_t>();
  std::size_t h = meta.at("height").get<std::size_t>();
  std::size_t w = meta.at("width").get<std::size_t>();
  ds.images = Tensor({count, h, w});
  ds.pixel_model = meta.at("pixel_model") == "binary" ? PixelModel::kBinary : PixelModel::kReal;
  ds.split = meta.value("split", "train");
  ds.seed = meta.value("seed", std::uint64_t{0});
  if (meta.contains("standardize")) {
    StandardizeStats st;
    st.mean = meta["standardize"]["mean"].get<double>();
    st.stddev = meta["standardize"]["stddev"].get<double>();
    ds.standardize = st;
  }
  if (meta.contains("generator")) ds.generator_json = meta["generator"].dump();
  read_f32(dir + "/images.f32", ds.images);

  if (fs::exists(dir + "/manifest.csv")) {
    std::ifstream mf(dir + "/manifest.csv");
    std::string header;
    std::getline(mf, header);
    Manifest m;
    std::vector<std::string> cols;
    {
      std::stringstream ss(header);
      std::string c;
      while (std::getline(ss, c, ',')) cols.push_back(c);
    }
    for (const std::string& c : cols) {
      if (c == "theta_rad") m.has_theta = true;
      if (c == "dx_px") m.has_dx = true;
      if (c == "conformation") m.has_conformation = true;
    }
    std::string line;
    while (std::getline(mf, line)) {
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string cell;
      std::vector<double> vals;
      while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
      std::size_t k = 1;  // skip index
      if (m.has_theta) m.theta.push_back(vals[k++]);
      if (m.has_dx) {
        m.dx.push_back({vals[k], vals[k + 1]});
        k += 2;
      }
      if (m.has_conformation) m.conformation.push_back(vals[k++]);
    }
    if ((m.has_theta && m.theta.size() != count) || (m.has_dx && m.dx.size() != count) ||
        (m.has_conformation && m.conformation.size() != count)) {
      throw DataError("manifest length does not match image count in " + dir);
    }
    ds.manifest = std::move(m);
  }
  return ds;
}

ImageDataset apply_random_transforms(const ImageDataset& ds, double theta_sigma,
                                     double t_sigma_px, std::uint64_t seed) {
  ImageDataset out;
  out.pixel_model = ds.pixel_model;
  out.split = ds.split;
  out.seed = seed;
  out.images = Tensor(ds.images.shape());
  Manifest m;
  m.has_theta = true;
  m.has_dx = true;
  m.theta.resize(ds.count());
  m.dx.resize(ds.count());
  if (ds.manifest && ds.manifest->has_conformation) {
    m.has_conformation = true;
    m.conformation = ds.manifest->conformation;
  }
  std::size_t n = ds.pixels();
  parallel_for(ds.count(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      Rng rng = Rng::keyed(seed, {rng_tag::kTransform, i});
      double theta = theta_sigma == 0.0 ? 0.0 : wrap_angle(rng.normal() * theta_sigma);
      double dx = t_sigma_px == 0.0 ? 0.0 : rng.normal() * t_sigma_px;
      double dy = t_sigma_px == 0.0 ? 0.0 : rng.normal() * t_sigma_px;
      m.theta[i] = theta;
      m.dx[i] = {dx, dy};
      Tensor img = ds.image(i);
      Tensor res = resample(img, theta, {dx, dy});
      std::memcpy(out.images.data() + i * n, res.data(), n * sizeof(double));
    }
  });
  json gen;
  gen["kind"] = "random-transforms";
  gen["theta_sigma"] = theta_sigma;
  gen["t_sigma_px"] = t_sigma_px;
  gen["seed"] = seed;
  out.generator_json = gen.dump();
  out.manifest = std::move(m);
  return out;
}

std::pair<ImageDataset, ImageDataset> split_dataset(const ImageDataset& ds,
                                                    std::size_t train_count) {
  if (train_count > ds.count()) throw DataError("split_dataset: train count exceeds dataset");
  std::size_t n = ds.pixels();
  auto slice = [&](std::size_t lo, std::size_t cnt, const char* split) {
    ImageDataset part;
    part.pixel_model = ds.pixel_model;
    part.split = split;
    part.seed = ds.seed;
    part.generator_json = ds.generator_json;
    part.images = Tensor({cnt, ds.height(), ds.width()});
    std::memcpy(part.images.data(), ds.images.data() + lo * n, cnt * n * sizeof(double));
    if (ds.manifest) {
      Manifest m;
      m.has_theta = ds.manifest->has_theta;
      m.has_dx = ds.manifest->has_dx;
      m.has_conformation = ds.manifest->has_conformation;
      for (std::size_t i = lo; i < lo + cnt; ++i) {
        if (m.has_theta) m.theta.push_back(ds.manifest->theta[i]);
        if (m.has_dx) m.dx.push_back(ds.manifest->dx[i]);
        if (m.has_conformation) m.conformation.push_back(ds.manifest->conformation[i]);
      }
      part.manifest = std::move(m);
    }
    return part;
  };
  return {slice(0, train_count, "train"), slice(train_count, ds.count() - train_count, "test")};
}

void standardize_split(ImageDataset& train, ImageDataset& test) {
  if (train.pixel_model != PixelModel::kReal) {
    throw DataError("standardize_split: only real-valued datasets are standardized");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < train.images.size(); ++i) sum += train.images[i];
  double mean = sum / static_cast<double>(train.images.size());
  double ss = 0.0;
  for (std::size_t i = 0; i < train.images.size(); ++i) {
    double d = train.images[i] - mean;
    ss += d * d;
  }
  double stddev = std::sqrt(ss / static_cast<double>(train.images.size()));
  if (!(stddev > 0.0)) throw NumericError("standardize_split: zero variance");
  StandardizeStats st{mean, stddev};
  for (std::size_t i = 0; i < train.images.size(); ++i) {
    train.images[i] = (train.images[i] - mean) / stddev;
  }
  for (std::size_t i = 0; i < test.images.size(); ++i) {
    test.images[i] = (test.images[i] - mean) / stddev;
  }
  train.standardize = st;
  test.standardize = st;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size,
                                                   std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size == 0) throw ShapeError("make_batches: batch_size must be >= 1");
  std::vector<std::size_t> perm(count);
  for (std::size_t i = 0; i < count; ++i) perm[i] = i;
  Rng rng = Rng::keyed(seed, {rng_tag::kShuffle, epoch});
  for (std::size_t i = count; i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(perm[i - 1], perm[j]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t lo = 0; lo < count; lo += batch_size) {
    std::size_t hi = std::min(lo + batch_size, count);
    batches.emplace_back(perm.begin() + lo, perm.begin() + hi);
  }
  return batches;
}

}  // namespace svae
