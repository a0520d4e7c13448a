#include "deal/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace deal {

Image piecewise_constant(int channels, int height, int width, std::uint64_t seed, int shapes) {
  if (channels < 1 || height < 1 || width < 1)
    throw std::invalid_argument("piecewise_constant: empty image");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> level(0.1, 0.9);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Image img(Shape{channels, height, width});
  for (int c = 0; c < channels; ++c) {
    const double bg = level(rng);
    for (double& v : img.plane(c)) v = bg;
  }
  for (int s = 0; s < shapes; ++s) {
    std::vector<double> value(channels);
    for (double& v : value) v = level(rng);
    const bool disc = unit(rng) < 0.5;
    const double ci = unit(rng) * height;
    const double cj = unit(rng) * width;
    const double ri = (0.1 + 0.3 * unit(rng)) * height;
    const double rj = disc ? ri : (0.1 + 0.3 * unit(rng)) * width;
    for (int i = 0; i < height; ++i)
      for (int j = 0; j < width; ++j) {
        const double di = (i + 0.5 - ci) / ri;
        const double dj = (j + 0.5 - cj) / rj;
        const bool inside = disc ? di * di + dj * dj <= 1.0 : std::abs(di) <= 1.0 && std::abs(dj) <= 1.0;
        if (!inside) continue;
        for (int c = 0; c < channels; ++c) img.at(c, i, j) = value[c];
      }
  }
  return img;
}

std::vector<Image> piecewise_constant_set(int count, int channels, int size, std::uint64_t seed) {
  std::vector<Image> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k)
    out.push_back(piecewise_constant(channels, size, size, seed * 7919 + k));
  return out;
}

Image step_image(int height, int width, double low, double high) {
  Image img(Shape{1, height, width});
  for (int i = 0; i < height; ++i)
    for (int j = 0; j < width; ++j) img.at(0, i, j) = j < width / 2 ? low : high;
  return img;
}

Image phantom(int height, int width) {
  struct Ellipse {
    double value, a, b, x0, y0, phi_deg;
  };
  static constexpr Ellipse kEllipses[] = {
      {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},       {-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0},
      {-0.2, 0.11, 0.31, 0.22, 0.0, -18.0},   {-0.2, 0.16, 0.41, -0.22, 0.0, 18.0},
      {0.1, 0.21, 0.25, 0.0, 0.35, 0.0},      {0.1, 0.046, 0.046, 0.0, 0.1, 0.0},
      {0.1, 0.046, 0.046, 0.0, -0.1, 0.0},    {0.1, 0.046, 0.023, -0.08, -0.605, 0.0},
      {0.1, 0.023, 0.023, 0.0, -0.606, 0.0},  {0.1, 0.023, 0.046, 0.06, -0.605, 0.0},
  };
  Image img(Shape{1, height, width});
  for (int i = 0; i < height; ++i)
    for (int j = 0; j < width; ++j) {
      const double y = 1.0 - 2.0 * (i + 0.5) / height;
      const double x = 2.0 * (j + 0.5) / width - 1.0;
      double v = 0.0;
      for (const auto& e : kEllipses) {
        const double phi = e.phi_deg * std::acos(-1.0) / 180.0;
        const double xr = (x - e.x0) * std::cos(phi) + (y - e.y0) * std::sin(phi);
        const double yr = -(x - e.x0) * std::sin(phi) + (y - e.y0) * std::cos(phi);
        if ((xr * xr) / (e.a * e.a) + (yr * yr) / (e.b * e.b) <= 1.0) v += e.value;
      }
      img.at(0, i, j) = std::clamp(v, 0.0, 1.0);
    }
  return img;
}

std::vector<std::vector<int>> fourier_row_mask(int height, int width, int center, double fraction,
                                               std::uint64_t seed) {
  if (height < 1 || width < 1 || center < 1)
    throw std::invalid_argument("fourier_row_mask: invalid size");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<int>> mask(height, std::vector<int>(width, 0));
  for (int i = 0; i < height; ++i) {
    const int freq = std::min(i, height - i);
    const bool keep = 2 * freq < center || unit(rng) < fraction;
    if (keep) std::fill(mask[i].begin(), mask[i].end(), 1);
  }
  return mask;
}

}  // namespace deal
