#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "deal/conv.hpp"
#include "deal/fft.hpp"
#include "deal/tensor.hpp"

namespace deal {

/// Gradient buffers aligned with MultiConv::layers.
struct MultiConvGrad {
  std::array<std::vector<double>, 3> layers;
};

/// Three stacked bias-free convolutions with no nonlinearity in between,
/// followed by a global scale:  W = scale * L3 L2 L1.
///
/// Channel progression N_in -> 4 N_in -> 8 N_in -> N_C. The scale is what
/// spectral normalization adjusts; kernel directions are left alone.
struct MultiConv {
  std::array<ConvStack, 3> layers;
  double scale = 1.0;
  /// Whether project() removes the mean of every first-layer kernel slice,
  /// which puts constant images in ker(W).
  bool zero_mean = true;

  /// Gaussian-initialized block (He-style fan-in scaling), projected and
  /// normalized on the default grid.
  static MultiConv random(int in_channels, int out_channels, int kernel_size, std::uint64_t seed,
                          bool zero_mean = true);

  int in_channels() const { return layers[0].in_channels; }
  int out_channels() const { return layers[2].out_channels; }
  int kernel_size() const { return layers[0].size; }
  int receptive_field() const { return 3 * (kernel_size() - 1) + 1; }

  /// Direct spatial evaluation (reference route).
  Tensor forward(const Tensor& x) const;
  Tensor adjoint(const Tensor& u) const;

  /// grad += d/dlayers <upstream, forward(input)> with the scale held fixed.
  void accumulate_gradient(const Tensor& input, const Tensor& upstream, MultiConvGrad& grad) const;
  MultiConvGrad zero_gradient() const;

  /// Zero-mean projection of the first layer (no-op when zero_mean is off).
  void project();

  bool operator==(const MultiConv&) const = default;
};

/// Grid used for spectral normalization. Its frequencies contain those of
/// every divisor grid, so ||W|| <= 1 also holds on 8x8, 16x16, 32x32.
inline constexpr int kNormalizationGrid = 64;

/// FFT evaluation of a MultiConv on a fixed h x w grid.
class MultiConvPlan {
 public:
  MultiConvPlan(const MultiConv& block, int height, int width);

  int height() const { return fft_.height(); }
  int width() const { return fft_.width(); }
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

  Tensor forward(const Tensor& x) const;
  Tensor adjoint(const Tensor& u) const;
  /// W^T W x
  Tensor gram(const Tensor& x) const;

  /// Composite response, entry [(c * in + i) * half + f].
  std::span<const Complex> transfer() const { return transfer_; }
  /// max_f sigma_max(T(f)): the exact operator norm on this grid.
  double exact_norm() const;

 private:
  void check(const Tensor& t, int channels, const char* what) const;

  Fft2d fft_;
  int in_;
  int out_;
  std::vector<Complex> transfer_;
};

/// ||W||_2 on a grid x grid image by power iteration on W^T W.
double mc_spectral_norm(const MultiConv& block, int grid, double tol, int max_iter,
                        std::vector<double>* warm_start = nullptr);

/// Returns a copy whose scale makes ||W||_2 = 1 on `grid` (within tol).
MultiConv mc_normalize(const MultiConv& block, double tol, int grid = kNormalizationGrid,
                       int max_iter = 2000, std::vector<double>* warm_start = nullptr);

/// Impulse responses of the composite block: kernels(c * N_in + i) is the
/// receptive_field x receptive_field convolution kernel from input channel
/// i to output channel c (centered).
Tensor mc_effective_kernels(const MultiConv& block);

/// Impulse response of W^T W and its DFT eigenvalues on an h x w grid.
struct GramSpectrum {
  /// W^T W applied to a unit impulse at the origin of each input channel:
  /// shape (N_in * N_in) x h x w, plane (j * N_in + i) = channel i of the
  /// response to an impulse in channel j.
  Tensor impulse;
  /// All N_in * h * w eigenvalues of W^T W, sorted ascending.
  std::vector<double> eigenvalues;
  /// For N_in == 1: eigenvalue per frequency in row-major grid order.
  std::vector<double> eigenvalue_map;
};
GramSpectrum mc_gram_spectrum(const MultiConv& block, int height, int width);

}  // namespace deal
