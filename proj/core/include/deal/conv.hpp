#pragma once

#include <span>
#include <vector>

#include "deal/fft.hpp"
#include "deal/tensor.hpp"

namespace deal {

/// Bank of square 2-D kernels, weights laid out (out, in, size, size).
///
/// Applies a bias-free multi-channel circular cross-correlation
///   y_o(p) = sum_i sum_{u,v} w[o,i,u,v] x_i(p + (u - c, v - c)),  c = size / 2.
struct ConvStack {
  int out_channels = 0;
  int in_channels = 0;
  int size = 0;
  std::vector<double> weights;

  static ConvStack zeros(int out_channels, int in_channels, int size);

  std::size_t kernel_area() const { return static_cast<std::size_t>(size) * size; }
  std::span<double> kernel(int o, int i) {
    return std::span<double>(weights).subspan((static_cast<std::size_t>(o) * in_channels + i) *
                                                  kernel_area(),
                                              kernel_area());
  }
  std::span<const double> kernel(int o, int i) const {
    return std::span<const double>(weights).subspan(
        (static_cast<std::size_t>(o) * in_channels + i) * kernel_area(), kernel_area());
  }

  Tensor apply(const Tensor& x) const;
  Tensor adjoint(const Tensor& g) const;

  /// grad[o,i,u,v] += sum_p upstream_o(p) input_i(p + (u - c, v - c)), the
  /// gradient of <upstream, apply(input)> with respect to the weights.
  void accumulate_gradient(const Tensor& upstream, const Tensor& input,
                           std::span<double> grad) const;

  /// Frequency response on an h x w grid in half-spectrum layout:
  /// entry [(o * in + i) * half + f].
  std::vector<Complex> transfer(int h, int w) const;

  bool operator==(const ConvStack&) const = default;
};

namespace detail {
/// dst(p) += a * src(p + (dy, dx)) on a circular h x w plane.
void add_shifted(std::span<double> dst, std::span<const double> src, int h, int w, int dy, int dx,
                 double a);
/// sum_p a(p) b(p + (dy, dx)) on a circular h x w plane.
double dot_shifted(std::span<const double> a, std::span<const double> b, int h, int w, int dy,
                   int dx);
}  // namespace detail

}  // namespace deal
