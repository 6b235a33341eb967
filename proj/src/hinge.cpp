#include <json.hpp>

#include <cmath>
#include <cstring>

#include "svae/data.hpp"
#include "svae/errors.hpp"
#include "svae/geometry.hpp"
#include "svae/rng.hpp"

namespace svae {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Lobe {
  double cx, cy;        // center
  double orient;        // long-axis angle
  double s_long, s_perp;
  double amp;
};

double lobe_value(const Lobe& b, double x, double y) {
  double dx = x - b.cx;
  double dy = y - b.cy;
  double c = std::cos(b.orient), s = std::sin(b.orient);
  double u = c * dx + s * dy;   // along the long axis
  double v = -s * dx + c * dy;  // across
  double q = (u / b.s_long) * (u / b.s_long) + (v / b.s_perp) * (v / b.s_perp);
  return b.amp * std::exp(-0.5 * q);
}

// Body + arm for a conformation step, before in-plane rotation.
std::array<Lobe, 2> make_lobes(const HingeConfig& cfg, std::size_t step) {
  double alpha = static_cast<double>(step) * cfg.step_degrees * kPi / 180.0;
  Lobe body{cfg.body_cx, cfg.body_cy, 0.0, cfg.body_sigma_long, cfg.body_sigma_perp, cfg.body_amp};
  Lobe arm;
  arm.cx = cfg.pivot_x + 0.5 * cfg.arm_len * std::cos(alpha);
  arm.cy = cfg.pivot_y + 0.5 * cfg.arm_len * std::sin(alpha);
  arm.orient = alpha;
  arm.s_long = cfg.arm_sigma_long;
  arm.s_perp = cfg.arm_sigma_perp;
  arm.amp = cfg.arm_amp;
  return {body, arm};
}

// The image shows the template through the viewing transform u = x R(theta),
// matching the decoder's coordinate convention, so the manifest theta is
// directly comparable to inferred rotations.
void render_into(double* out, const HingeConfig& cfg, std::size_t step, double theta) {
  auto lobes = make_lobes(cfg, step);
  CoordGrid grid = make_grid(cfg.height, cfg.width);
  double c = std::cos(theta), s = std::sin(theta);
  std::size_t n = cfg.height * cfg.width;
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double x = grid.coords[2 * i];
    double y = grid.coords[2 * i + 1];
    double ux = c * x - s * y;
    double uy = s * x + c * y;
    double v = lobe_value(lobes[0], ux, uy) + lobe_value(lobes[1], ux, uy);
    out[i] = v;
    if (v > peak) peak = v;
  }
  double scale = 255.0 / peak;
  for (std::size_t i = 0; i < n; ++i) out[i] *= scale;
}

}  // namespace

Tensor render_hinge_template(const HingeConfig& cfg, std::size_t step, double theta) {
  if (step >= cfg.n_steps) throw ShapeError("render_hinge_template: step out of range");
  Tensor img({cfg.height, cfg.width});
  render_into(img.data(), cfg, step, theta);
  return img;
}

ImageDataset generate_hinge_dataset(const HingeConfig& cfg) {
  if (cfg.n_steps < 2) throw ShapeError("generate_hinge_dataset: n_steps must be >= 2");
  if (cfg.noise_sigma < 0.0) throw NumericError("generate_hinge_dataset: negative noise");
  ImageDataset ds;
  ds.pixel_model = PixelModel::kReal;
  ds.seed = cfg.seed;
  ds.images = Tensor({cfg.count, cfg.height, cfg.width});
  Manifest m;
  m.has_theta = true;
  m.has_conformation = true;
  m.theta.resize(cfg.count);
  m.conformation.resize(cfg.count);
  std::size_t n = cfg.height * cfg.width;
  parallel_for(cfg.count, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      Rng rng = Rng::keyed(cfg.seed, {rng_tag::kHinge, i});
      std::size_t step = static_cast<std::size_t>(rng.below(cfg.n_steps));
      double theta = kPi - 2.0 * kPi * rng.u01();  // U(-pi, pi]
      m.theta[i] = theta;
      m.conformation[i] = static_cast<double>(step) / static_cast<double>(cfg.n_steps - 1);
      double* px = ds.images.data() + i * n;
      render_into(px, cfg, step, theta);
      if (cfg.noise_sigma > 0.0) {
        for (std::size_t p = 0; p < n; ++p) px[p] += cfg.noise_sigma * rng.normal();
      }
    }
  });
  nlohmann::json gen;
  gen["kind"] = "hinge";
  gen["height"] = cfg.height;
  gen["width"] = cfg.width;
  gen["n_steps"] = cfg.n_steps;
  gen["step_degrees"] = cfg.step_degrees;
  gen["noise_sigma"] = cfg.noise_sigma;
  gen["count"] = cfg.count;
  gen["seed"] = cfg.seed;
  ds.generator_json = gen.dump();
  ds.manifest = std::move(m);
  return ds;
}

}  // namespace svae
