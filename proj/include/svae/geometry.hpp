#pragma once

#include <array>
#include <cstddef>

#include "svae/tensor.hpp"

namespace svae {

/// Pixel-center coordinate grid in normalized Cartesian coordinates.
///
/// Conventions (fixed, and relied on by dataset manifests):
///   - origin at the image center;
///   - extreme pixel centers at exactly +-1 on each axis;
///   - pixels in row-major order, row 0 on top;
///   - row 0 maps to y = +1 (y points up), column 0 maps to x = -1.
struct CoordGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  Tensor coords;  // [height*width, 2], columns (x, y)
};

CoordGrid make_grid(std::size_t height, std::size_t width);

/// Conversion from pixel offsets to normalized coordinate units along an
/// axis with `extent` pixels: 2/(extent-1) per pixel (0 for a 1-pixel axis).
double px_to_norm(double px, std::size_t extent);

/// Rows mapped through x -> x R(theta) + dx, with the row-vector rotation
/// R(theta) = [[cos, sin], [-sin, cos]]. theta is unbounded; cos/sin wrap it.
Tensor transform_coords(const Tensor& coords, double theta, const std::array<double, 2>& dx);

/// Resamples an image on its own grid: the output pixel at grid coordinate x
/// takes the bilinear interpolation of the input at x R(theta) + dx, with dx
/// given in pixels. Lookups outside [-1,1]^2 fill with 0. Lookups within
/// 1e-9 of the pixel lattice snap to it, so theta = 0 and exact quarter-turn
/// rotations of odd square images reproduce pixels exactly.
Tensor resample(const Tensor& image, double theta, const std::array<double, 2>& dx_pixels);

}  // namespace svae
