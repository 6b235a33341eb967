#include <json.hpp>

#include <cmath>
#include <vector>

#include "svae/data.hpp"
#include "svae/errors.hpp"
#include "svae/rng.hpp"

namespace svae {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct P {
  double x, y;
};
using Stroke = std::vector<P>;  // polyline in a unit glyph box, y up

void arc(Stroke& s, double cx, double cy, double rx, double ry, double a0_deg, double a1_deg,
         int segs = 20) {
  for (int i = 0; i <= segs; ++i) {
    double t = (a0_deg + (a1_deg - a0_deg) * i / segs) * kPi / 180.0;
    s.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
  }
}

// Stroke skeletons for the ten digit classes.
std::vector<Stroke> glyph(int digit) {
  std::vector<Stroke> g;
  Stroke s;
  switch (digit) {
    case 0:
      arc(s, 0.5, 0.5, 0.26, 0.38, 90, 450, 28);
      g.push_back(s);
      break;
    case 1:
      g.push_back({{0.52, 0.92}, {0.52, 0.08}});
      g.push_back({{0.52, 0.92}, {0.36, 0.72}});
      break;
    case 2:
      arc(s, 0.5, 0.66, 0.24, 0.25, 170, 0);
      g.push_back(s);
      g.push_back({{0.74, 0.66}, {0.26, 0.10}, {0.76, 0.10}});
      break;
    case 3:
      arc(s, 0.47, 0.70, 0.24, 0.21, 140, -80);
      g.push_back(s);
      s.clear();
      arc(s, 0.47, 0.29, 0.27, 0.23, 80, -140);
      g.push_back(s);
      break;
    case 4:
      g.push_back({{0.60, 0.92}, {0.22, 0.42}, {0.80, 0.42}});
      g.push_back({{0.62, 0.70}, {0.62, 0.08}});
      break;
    case 5:
      g.push_back({{0.72, 0.90}, {0.32, 0.90}, {0.30, 0.56}});
      s.clear();
      arc(s, 0.48, 0.33, 0.26, 0.25, 105, -125);
      g.push_back(s);
      break;
    case 6:
      arc(s, 0.54, 0.55, 0.26, 0.37, 70, 250);
      g.push_back(s);
      s.clear();
      arc(s, 0.50, 0.30, 0.22, 0.21, 90, 450, 24);
      g.push_back(s);
      break;
    case 7:
      g.push_back({{0.26, 0.90}, {0.76, 0.90}, {0.42, 0.08}});
      break;
    case 8:
      arc(s, 0.5, 0.69, 0.20, 0.20, 90, 450, 24);
      g.push_back(s);
      s.clear();
      arc(s, 0.5, 0.29, 0.24, 0.22, 90, 450, 24);
      g.push_back(s);
      break;
    case 9:
      arc(s, 0.5, 0.66, 0.22, 0.20, 90, 450, 24);
      g.push_back(s);
      g.push_back({{0.71, 0.64}, {0.60, 0.08}});
      break;
    default:
      throw ShapeError("glyph: digit out of range");
  }
  return g;
}

double dist2_to_segment(double px, double py, const P& a, const P& b) {
  double vx = b.x - a.x, vy = b.y - a.y;
  double wx = px - a.x, wy = py - a.y;
  double vv = vx * vx + vy * vy;
  double t = vv > 0.0 ? (wx * vx + wy * vy) / vv : 0.0;
  t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
  double dx = wx - t * vx, dy = wy - t * vy;
  return dx * dx + dy * dy;
}

}  // namespace

ImageDataset generate_digits_dataset(const DigitsConfig& cfg) {
  if (cfg.size < 8) throw ShapeError("generate_digits_dataset: size too small");
  ImageDataset ds;
  ds.pixel_model = PixelModel::kBinary;
  ds.seed = cfg.seed;
  ds.images = Tensor({cfg.count, cfg.size, cfg.size});
  std::size_t n = cfg.size * cfg.size;
  parallel_for(cfg.count, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      Rng rng = Rng::keyed(cfg.seed, {rng_tag::kDigits, i});
      int digit = static_cast<int>(rng.below(10));
      double scale = 0.75 + 0.20 * rng.u01();
      double shear = -0.18 + 0.36 * rng.u01();
      double tx = -0.05 + 0.10 * rng.u01();
      double ty = -0.05 + 0.10 * rng.u01();
      double pen = 0.038 + 0.022 * rng.u01();
      std::vector<Stroke> strokes = glyph(digit);
      for (Stroke& s : strokes) {
        for (P& p : s) {
          double gx = p.x - 0.5, gy = p.y - 0.5;
          gx += shear * gy;  // slant
          p.x = 0.5 + scale * gx + tx + 0.012 * rng.normal();
          p.y = 0.5 + scale * gy + ty + 0.012 * rng.normal();
        }
      }
      double* px = ds.images.data() + i * n;
      double inv2p2 = 1.0 / (2.0 * pen * pen);
      for (std::size_t r = 0; r < cfg.size; ++r) {
        double v = 1.0 - (static_cast<double>(r) + 0.5) / static_cast<double>(cfg.size);
        for (std::size_t c = 0; c < cfg.size; ++c) {
          double u = (static_cast<double>(c) + 0.5) / static_cast<double>(cfg.size);
          double best = 1e9;
          for (const Stroke& s : strokes) {
            for (std::size_t k = 0; k + 1 < s.size(); ++k) {
              double d2 = dist2_to_segment(u, v, s[k], s[k + 1]);
              if (d2 < best) best = d2;
            }
          }
          px[r * cfg.size + c] = std::exp(-best * inv2p2);
        }
      }
    }
  });
  nlohmann::json gen;
  gen["kind"] = "digits";
  gen["size"] = cfg.size;
  gen["count"] = cfg.count;
  gen["seed"] = cfg.seed;
  ds.generator_json = gen.dump();
  ds.manifest.reset();
  return ds;
}

}  // namespace svae
