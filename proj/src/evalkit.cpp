#include "svae/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "svae/errors.hpp"
#include "svae/geometry.hpp"
#include "svae/png.hpp"
#include "svae/rng.hpp"

namespace svae {

namespace {

constexpr double kPi = 3.14159265358979323846;

PixelDistribution decode_any(const ModelParams& model, const LatentSample& s,
                             const CoordGrid& grid) {
  if (model.gen.kind == GeneratorKind::kSpatial) return decode_image(s, grid, model.gen);
  return vanilla_generator_forward(s.z, model.gen);
}

Tensor distribution_image(const PixelDistribution& d, std::size_t h, std::size_t w) {
  const Tensor& src = d.model == PixelModel::kBinary ? d.probs : d.mean;
  return Tensor({h, w}, std::vector<double>(src.vec()));
}

}  // namespace

ElboBreakdown estimate_elbo(const ImageDataset& ds, const ModelParams& model,
                            const PriorConfig& priors, std::size_t k_samples, std::uint64_t seed) {
  if (ds.pixels() != model.enc.n_pixels) {
    throw ShapeError("estimate_elbo: dataset geometry does not match model");
  }
  if (k_samples == 0) throw ShapeError("estimate_elbo: k_samples must be >= 1");
  std::size_t count = ds.count();
  std::size_t per = model.enc.latent_count();

  // k noise vectors shared across images: a duplicated image scores exactly
  // its own value, and the estimate stays deterministic given the seed.
  std::vector<std::vector<double>> noise(k_samples);
  for (std::size_t j = 0; j < k_samples; ++j) {
    Rng rng = Rng::keyed(seed, {rng_tag::kEval, j});
    noise[j].resize(per);
    for (double& d : noise[j]) d = rng.normal();
  }

  CoordGrid grid = make_grid(ds.height(), ds.width());
  constexpr std::size_t kGrain = 64;
  std::size_t nchunks = (count + kGrain - 1) / kGrain;
  std::vector<ElboBreakdown> partial(nchunks);
  parallel_for_grain(count, kGrain, [&](std::size_t lo, std::size_t hi) {
    ElboBreakdown acc;
    for (std::size_t i = lo; i < hi; ++i) {
      Tensor img = ds.flat_image(i);
      Posterior post = encoder_forward(img, model.enc);
      ElboBreakdown bi;
      for (std::size_t j = 0; j < k_samples; ++j) {
        LatentSample s = reparameterize(post, noise[j]);
        PixelDistribution dec = decode_any(model, s, grid);
        ElboBreakdown bj = elbo(img, post, dec, priors, model.enc.do_rotation,
                                model.enc.do_translation, ds.width(), ds.height());
        bi.recon_loglik += bj.recon_loglik / static_cast<double>(k_samples);
        if (j == 0) {
          bi.kl_z = bj.kl_z;
          bi.kl_theta = bj.kl_theta;
          bi.kl_dx = bj.kl_dx;
        }
      }
      acc.recon_loglik += bi.recon_loglik;
      acc.kl_z += bi.kl_z;
      acc.kl_theta += bi.kl_theta;
      acc.kl_dx += bi.kl_dx;
    }
    partial[lo / kGrain] = acc;
  });
  ElboBreakdown mean;
  for (const ElboBreakdown& p : partial) {
    mean.recon_loglik += p.recon_loglik;
    mean.kl_z += p.kl_z;
    mean.kl_theta += p.kl_theta;
    mean.kl_dx += p.kl_dx;
  }
  double n = static_cast<double>(count);
  mean.recon_loglik /= n;
  mean.kl_z /= n;
  mean.kl_theta /= n;
  mean.kl_dx /= n;
  mean.elbo = mean.recon_loglik - (mean.kl_z + mean.kl_theta + mean.kl_dx);
  return mean;
}

Tensor posterior_means(const ImageDataset& ds, const ModelParams& model) {
  std::size_t count = ds.count();
  std::size_t L = model.enc.latent_count();
  Tensor out({count, 2 * L});
  parallel_for_grain(count, 64, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      Posterior p = encoder_forward(ds.flat_image(i), model.enc);
      double* row = out.data() + i * 2 * L;
      std::size_t k = 0;
      for (std::size_t j = 0; j < model.enc.z_dim; ++j, ++k) {
        row[k] = p.mu_z[j];
        row[L + k] = p.sigma_z[j];
      }
      if (p.mu_theta) {
        row[k] = *p.mu_theta;
        row[L + k] = *p.sigma_theta;
        ++k;
      }
      if (p.mu_dx) {
        row[k] = (*p.mu_dx)[0];
        row[k + 1] = (*p.mu_dx)[1];
        row[L + k] = (*p.sigma_dx)[0];
        row[L + k + 1] = (*p.sigma_dx)[1];
        k += 2;
      }
    }
  });
  return out;
}

double pearson_corr(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw ShapeError("pearson_corr: need n >= 2 equal-length");
  double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw NumericError("pearson_corr: zero variance");
  return sab / std::sqrt(saa * sbb);
}

double circular_corr(const std::vector<double>& alpha, const std::vector<double>& beta) {
  if (alpha.size() != beta.size() || alpha.size() < 2) {
    throw ShapeError("circular_corr: need n >= 2 equal-length");
  }
  auto circ_mean = [](const std::vector<double>& v) {
    double s = 0, c = 0;
    for (double x : v) {
      s += std::sin(x);
      c += std::cos(x);
    }
    return std::atan2(s, c);
  };
  double am = circ_mean(alpha), bm = circ_mean(beta);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    double sa = std::sin(alpha[i] - am), sb = std::sin(beta[i] - bm);
    sab += sa * sb;
    saa += sa * sa;
    sbb += sb * sb;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw NumericError("circular_corr: degenerate angular spread");
  return sab / std::sqrt(saa * sbb);
}

double circular_linear_corr(const std::vector<double>& x, const std::vector<double>& theta) {
  if (x.size() != theta.size() || x.size() < 3) {
    throw ShapeError("circular_linear_corr: need n >= 3 equal-length");
  }
  std::vector<double> c(theta.size()), s(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    c[i] = std::cos(theta[i]);
    s[i] = std::sin(theta[i]);
  }
  double rxc = pearson_corr(x, c);
  double rxs = pearson_corr(x, s);
  double rcs = pearson_corr(c, s);
  double denom = 1.0 - rcs * rcs;
  if (!(denom > 0.0)) throw NumericError("circular_linear_corr: degenerate angles");
  double r2 = (rxc * rxc + rxs * rxs - 2.0 * rxc * rxs * rcs) / denom;
  return std::sqrt(r2 < 0.0 ? 0.0 : r2);
}

std::string CorrelationReport::to_csv() const {
  std::string out = "variable,factor,method,coefficient,abs_coefficient\n";
  char buf[96];
  for (const CorrelationEntry& e : entries) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.10g,%.10g\n", e.variable.c_str(),
                  e.factor.c_str(), e.method.c_str(), e.coefficient, std::abs(e.coefficient));
    out += buf;
  }
  return out;
}

CorrelationReport correlation_report(const ImageDataset& ds, const ModelParams& model) {
  if (!ds.manifest) throw DataError("correlation_report: dataset has no manifest");
  const Manifest& m = *ds.manifest;
  Tensor post = posterior_means(ds, model);
  std::size_t L = model.enc.latent_count();
  std::size_t count = ds.count();

  auto column = [&](std::size_t c) {
    std::vector<double> v(count);
    for (std::size_t i = 0; i < count; ++i) v[i] = post[i * 2 * L + c];
    return v;
  };

  CorrelationReport rep;
  std::vector<std::pair<std::string, std::vector<double>>> latents;
  for (std::size_t j = 0; j < model.enc.z_dim; ++j) {
    latents.emplace_back("z" + std::to_string(j + 1), column(j));
  }
  std::vector<double> mu_theta;
  if (model.enc.do_rotation) {
    mu_theta = column(model.enc.z_dim);
    for (double& t : mu_theta) t = wrap_angle(t);
  }

  if (m.has_conformation) {
    for (auto& [name, vals] : latents) {
      rep.entries.push_back({name, "conformation", "pearson", pearson_corr(vals, m.conformation)});
    }
    if (model.enc.do_rotation) {
      rep.entries.push_back({"theta", "conformation", "circular-linear",
                             circular_linear_corr(m.conformation, mu_theta)});
    }
  }
  if (m.has_theta) {
    for (auto& [name, vals] : latents) {
      rep.entries.push_back(
          {name, "rotation", "circular-linear", circular_linear_corr(vals, m.theta)});
    }
    if (model.enc.do_rotation) {
      rep.entries.push_back({"theta", "rotation", "circular", circular_corr(mu_theta, m.theta)});
    }
  }
  return rep;
}

double normal_quantile(double p) {
  if (!(p > 0.0) || !(p < 1.0)) throw NumericError("normal_quantile: p must be in (0,1)");
  // Acklam's rational approximation.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                             3.754408661907416e+00};
  constexpr double plow = 0.02425;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    double q = p - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley refinement against the exact CDF.
  double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  double u = e * std::sqrt(2.0 * kPi) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

namespace {

Tensor decode_mean_at(const ModelParams& model, const Tensor& z, const CoordGrid& grid) {
  LatentSample s;
  s.z = z;
  s.theta = 0.0;
  s.dx = {0.0, 0.0};
  PixelDistribution d = decode_any(model, s, grid);
  return distribution_image(d, model.height, model.width);
}

}  // namespace

std::vector<Tensor> manifold_grid(const ModelParams& model, std::size_t grid_n) {
  std::size_t zd = model.gen.z_dim;
  if (zd < 1 || zd > 2) throw ShapeError("manifold_grid: requires z_dim of 1 or 2, model has " +
                                         std::to_string(zd));
  if (grid_n == 0) throw ShapeError("manifold_grid: grid_n must be >= 1");
  CoordGrid grid = make_grid(model.height, model.width);
  std::vector<double> q(grid_n);
  for (std::size_t k = 1; k <= grid_n; ++k) {
    q[k - 1] = normal_quantile(static_cast<double>(k) / static_cast<double>(grid_n + 1));
  }
  std::vector<Tensor> out;
  if (zd == 1) {
    for (std::size_t k = 0; k < grid_n; ++k) {
      out.push_back(decode_mean_at(model, Tensor({1}, {q[k]}), grid));
    }
  } else {
    for (std::size_t r = 0; r < grid_n; ++r) {
      for (std::size_t c = 0; c < grid_n; ++c) {
        out.push_back(decode_mean_at(model, Tensor({2}, {q[c], q[r]}), grid));
      }
    }
  }
  return out;
}

std::vector<Tensor> interpolate_latents(const ModelParams& model, const Tensor& image_a,
                                        const Tensor& image_b, std::size_t steps) {
  if (steps < 2) throw ShapeError("interpolate_latents: steps must be >= 2");
  Posterior pa = encoder_forward(image_a, model.enc);
  Posterior pb = encoder_forward(image_b, model.enc);
  CoordGrid grid = make_grid(model.height, model.width);
  std::vector<Tensor> out;
  std::size_t zd = model.enc.z_dim;
  for (std::size_t i = 0; i < steps; ++i) {
    double t = static_cast<double>(i) / static_cast<double>(steps - 1);
    Tensor z({zd});
    for (std::size_t j = 0; j < zd; ++j) z[j] = (1.0 - t) * pa.mu_z[j] + t * pb.mu_z[j];
    out.push_back(decode_mean_at(model, z, grid));
  }
  return out;
}

std::vector<Tensor> sample_images(const ModelParams& model, std::size_t n, std::uint64_t seed) {
  CoordGrid grid = make_grid(model.height, model.width);
  std::vector<Tensor> out;
  std::size_t zd = model.gen.z_dim;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = Rng::keyed(seed, {rng_tag::kEval, 0x5a, i});
    Tensor z({zd});
    for (std::size_t j = 0; j < zd; ++j) z[j] = rng.normal();
    out.push_back(decode_mean_at(model, z, grid));
  }
  return out;
}

void render_png_grid(const std::vector<Tensor>& images, std::size_t cols,
                     const std::string& path) {
  if (images.empty()) throw ShapeError("render_png_grid: no images");
  if (cols == 0) throw ShapeError("render_png_grid: cols must be >= 1");
  std::size_t h = images[0].rows(), w = images[0].cols();
  for (const Tensor& t : images) {
    if (t.rows() != h || t.cols() != w) throw ShapeError("render_png_grid: non-uniform sizes");
  }
  double lo = images[0][0], hi = images[0][0];
  for (const Tensor& t : images) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      lo = std::min(lo, t[i]);
      hi = std::max(hi, t[i]);
    }
  }
  std::size_t rows = (images.size() + cols - 1) / cols;
  std::size_t W = cols * w + (cols - 1);
  std::size_t H = rows * h + (rows - 1);
  std::vector<std::uint8_t> canvas(W * H, 0);
  double range = hi - lo;
  for (std::size_t k = 0; k < images.size(); ++k) {
    std::size_t gr = k / cols, gc = k % cols;
    std::size_t r0 = gr * (h + 1), c0 = gc * (w + 1);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        double v = images[k][r * w + c];
        std::uint8_t byte = range > 1e-12
                                ? static_cast<std::uint8_t>(255.0 * (v - lo) / range + 0.5)
                                : 128;
        canvas[(r0 + r) * W + c0 + c] = byte;
      }
    }
  }
  write_png_gray8(path, W, H, canvas);
}

}  // namespace svae
