#pragma once

#include <complex>
#include <span>
#include <vector>

namespace deal {

using Complex = std::complex<double>;

/// 2-D discrete Fourier transforms on an h x w grid.
///
/// Real transforms use the half spectrum layout h x (w/2 + 1). All
/// transforms are unnormalized in the forward direction; `inverse_*`
/// divide by h*w so inverse(forward(x)) == x. Instances are cheap handles
/// over process-wide cached plans and may be used from several threads.
class Fft2d {
 public:
  Fft2d(int height, int width);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t real_size() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t half_size() const { return static_cast<std::size_t>(height_) * (width_ / 2 + 1); }

  void forward_real(std::span<const double> in, std::span<Complex> out) const;
  void inverse_real(std::span<const Complex> in, std::span<double> out) const;

  /// Full complex transforms over all h*w frequencies.
  void forward(std::span<const Complex> in, std::span<Complex> out) const;
  void inverse(std::span<const Complex> in, std::span<Complex> out) const;

 private:
  int height_;
  int width_;
  void* r2c_;
  void* c2r_;
  void* c2c_fwd_;
  void* c2c_bwd_;
};

}  // namespace deal
