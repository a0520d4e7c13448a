#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "deal/conv.hpp"
#include "deal/multiconv.hpp"
#include "deal/spline.hpp"
#include "deal/tensor.hpp"

namespace deal {

/// Noise levels are quoted on the 0-255 scale; images live in [0, 1].
inline constexpr double kIntensityScale = 255.0;

/// The attention network
///   M(x) = phi^sigma( W_mix2( phi2( W_mix1( phi1( W_mask x ))))),
///   phi^sigma_c(t) = clamp(phi3(alpha_c(sigma) t), eps_m, 1).
struct MaskNet {
  MultiConv w_mask;
  ConvStack mix1;
  ConvStack mix2;
  LinearSpline phi1;
  LinearSpline phi2;
  LinearSpline phi3;
  /// s_c, one per feature channel.
  std::vector<LinearSpline> scale_splines;
  double eps_m = 1e-3;

  /// Initialization: phi1 = phi2 = |x|, phi3 = exp(-x^2) on [0, 3] with 31
  /// knots; s_c = 3 on [-1, 51] with 14 knots; mixing layers start near the
  /// identity.
  static MaskNet initialize(int in_channels, int num_filters, int kernel_size, std::uint64_t seed,
                            double eps_m = 1e-3, bool zero_mean = true);

  int channels() const { return w_mask.out_channels(); }
  /// Projects every constrained component onto its feasible set.
  void project();

  bool operator==(const MaskNet&) const = default;
};

/// alpha_c = exp(s_c(sigma)) / (sigma + 1e-5).
std::vector<double> alpha_scaling(std::span<const LinearSpline> s, double sigma);
/// alpha_c = exp(s_c(spline_arg)) / (noise_level + 1e-5); mask_compute
/// passes sigma and sigma / 255.
std::vector<double> alpha_scaling(std::span<const LinearSpline> s, double spline_arg,
                                  double noise_level);

/// clamp(phi3(alpha * t), eps_m, 1) elementwise.
std::vector<double> phi_sigma(const LinearSpline& phi3, double alpha, std::span<const double> t,
                              double eps_m);

/// Intermediate activations kept for the backward pass.
struct MaskTrace {
  Tensor input;
  Tensor a0;  // W_mask x
  Tensor a1;  // W_mix1 phi1(a0)
  Tensor t;   // W_mix2 phi2(a1)
  std::vector<double> alpha;
  double sigma = 0.0;
};

/// Computes M(x) for noise level sigma (0-255 scale). `w_mask_plan`, when
/// given, must be built from p.w_mask on x's grid. `trace` receives the
/// intermediates needed by mask_backward.
Mask mask_compute(const MaskNet& p, const Tensor& x, double sigma,
                  const MultiConvPlan* w_mask_plan = nullptr, MaskTrace* trace = nullptr);

struct MaskNetGrad {
  MultiConvGrad w_mask;
  std::vector<double> mix1;
  std::vector<double> mix2;
  std::vector<double> phi1;
  std::vector<double> phi2;
  std::vector<double> phi3;
  std::vector<std::vector<double>> scale_splines;

  static MaskNetGrad zeros(const MaskNet& p);
};

/// Accumulates d<upstream, M(x)>/dparams into grad and returns
/// d<upstream, M(x)>/dx (empty tensor when want_input_gradient is false).
Tensor mask_backward(const MaskNet& p, const MaskTrace& trace, const Tensor& upstream,
                     MaskNetGrad& grad, bool want_input_gradient,
                     const MultiConvPlan* w_mask_plan = nullptr);

/// Upper bound on the Lipschitz constant of x -> M(x) on h x w images:
/// ||W_mask|| max|phi1'| ||W_mix1|| max|phi2'| ||W_mix2|| max_c alpha_c max|phi3'|.
double mask_lipschitz_bound(const MaskNet& p, double sigma, int height, int width);

}  // namespace deal
