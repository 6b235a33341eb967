#include "svae/geometry.hpp"

#include <cmath>

#include "svae/errors.hpp"

namespace svae {

CoordGrid make_grid(std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ShapeError("make_grid: zero dimension");
  CoordGrid g;
  g.height = height;
  g.width = width;
  g.coords = Tensor({height * width, 2});
  for (std::size_t r = 0; r < height; ++r) {
    double y = height > 1 ? 1.0 - 2.0 * static_cast<double>(r) / static_cast<double>(height - 1) : 0.0;
    for (std::size_t c = 0; c < width; ++c) {
      double x = width > 1 ? -1.0 + 2.0 * static_cast<double>(c) / static_cast<double>(width - 1) : 0.0;
      std::size_t i = r * width + c;
      g.coords[2 * i] = x;
      g.coords[2 * i + 1] = y;
    }
  }
  return g;
}

double px_to_norm(double px, std::size_t extent) {
  return extent > 1 ? px * 2.0 / static_cast<double>(extent - 1) : 0.0;
}

Tensor transform_coords(const Tensor& coords, double theta, const std::array<double, 2>& dx) {
  if (coords.ndim() != 2 || coords.cols() != 2) {
    throw ShapeError("transform_coords: expected [n,2], got " + coords.shape_str());
  }
  double c = std::cos(theta);
  double s = std::sin(theta);
  std::size_t n = coords.rows();
  Tensor out({n, 2});
  // Kept as explicit expressions so the tape-built rotation path produces
  // bitwise-identical coordinates.
  for (std::size_t i = 0; i < n; ++i) {
    double x = coords[2 * i];
    double y = coords[2 * i + 1];
    out[2 * i] = c * x - s * y + dx[0];
    out[2 * i + 1] = s * x + c * y + dx[1];
  }
  return out;
}

namespace {

constexpr double kLatticeSnap = 1e-9;

double snap(double v) {
  double r = std::nearbyint(v);
  return std::abs(v - r) < kLatticeSnap ? r : v;
}

}  // namespace

Tensor resample(const Tensor& image, double theta, const std::array<double, 2>& dx_pixels) {
  if (image.ndim() != 2) throw ShapeError("resample: expected [h,w], got " + image.shape_str());
  std::size_t h = image.rows(), w = image.cols();
  CoordGrid grid = make_grid(h, w);
  std::array<double, 2> dx_norm = {px_to_norm(dx_pixels[0], w), px_to_norm(dx_pixels[1], h)};
  Tensor src = transform_coords(grid.coords, theta, dx_norm);
  Tensor out({h, w});
  for (std::size_t i = 0; i < h * w; ++i) {
    double x = src[2 * i];
    double y = src[2 * i + 1];
    if (x < -1.0 || x > 1.0 || y < -1.0 || y > 1.0) continue;  // zero fill
    // Grid conventions: column = (x+1)/2*(w-1), row = (1-y)/2*(h-1).
    double cf = snap(w > 1 ? (x + 1.0) * 0.5 * static_cast<double>(w - 1) : 0.0);
    double rf = snap(h > 1 ? (1.0 - y) * 0.5 * static_cast<double>(h - 1) : 0.0);
    std::size_t c0 = static_cast<std::size_t>(cf);
    std::size_t r0 = static_cast<std::size_t>(rf);
    if (c0 + 1 >= w) c0 = w >= 2 ? w - 2 : 0;
    if (r0 + 1 >= h) r0 = h >= 2 ? h - 2 : 0;
    double fc = cf - static_cast<double>(c0);
    double fr = rf - static_cast<double>(r0);
    std::size_t c1 = w >= 2 ? c0 + 1 : c0;
    std::size_t r1 = h >= 2 ? r0 + 1 : r0;
    double v00 = image.at(r0, c0), v01 = image.at(r0, c1);
    double v10 = image.at(r1, c0), v11 = image.at(r1, c1);
    out[i] = (1.0 - fr) * ((1.0 - fc) * v00 + fc * v01) + fr * ((1.0 - fc) * v10 + fc * v11);
  }
  return out;
}

}  // namespace svae
