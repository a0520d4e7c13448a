#include "deal/maskgen.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "deal/errors.hpp"
#include "deal/linop.hpp"

namespace deal {
namespace {

constexpr double kAlphaOffset = 1e-5;

ConvStack near_identity_mix(int channels, std::mt19937_64& rng) {
  ConvStack s = ConvStack::zeros(channels, channels, 3);
  std::normal_distribution<double> normal(0.0, 0.01);
  for (double& w : s.weights) w = normal(rng);
  for (int c = 0; c < channels; ++c) s.kernel(c, c)[4] += 1.0;
  return s;
}

void apply_spline(const LinearSpline& s, std::span<const double> in, std::span<double> out) {
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = s(in[i]);
}

// Backward through an elementwise spline: returns d/dinput and accumulates
// d/dvalues.
Tensor spline_backward(const LinearSpline& s, const Tensor& input, const Tensor& upstream,
                       std::vector<double>& value_grad) {
  Tensor out(input.shape());
  auto x = input.data();
  auto g = upstream.data();
  auto d = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (g[i] == 0.0) continue;
    d[i] = g[i] * s.slope(x[i]);
    const auto k = s.knot_weights(x[i]);
    value_grad[k.lo] += g[i] * k.w_lo;
    value_grad[k.lo + 1] += g[i] * k.w_hi;
  }
  return out;
}

double conv_norm(const ConvStack& s, int h, int w) {
  const Shape in{s.in_channels, h, w};
  const Shape out{s.out_channels, h, w};
  VectorMap fwd = [&](std::span<const double> x) {
    return s.apply(Tensor(in, std::vector<double>(x.begin(), x.end()))).vector();
  };
  VectorMap adj = [&](std::span<const double> u) {
    return s.adjoint(Tensor(out, std::vector<double>(u.begin(), u.end()))).vector();
  };
  return estimate_spectral_norm(fwd, adj, in.size(), 1e-8, 5000);
}

}  // namespace

MaskNet MaskNet::initialize(int in_channels, int num_filters, int kernel_size, std::uint64_t seed,
                            double eps_m, bool zero_mean) {
  if (!(eps_m > 0.0 && eps_m < 1.0)) throw std::invalid_argument("eps_m must lie in (0, 1)");
  MaskNet p;
  p.w_mask = MultiConv::random(in_channels, num_filters, kernel_size, seed, zero_mean);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  p.mix1 = near_identity_mix(num_filters, rng);
  p.mix2 = near_identity_mix(num_filters, rng);
  auto abs_fn = [](double x) { return std::abs(x); };
  p.phi1 = LinearSpline::sample(0.0, 3.0, 31, abs_fn, true, Monotonicity::nondecreasing);
  p.phi2 = LinearSpline::sample(0.0, 3.0, 31, abs_fn, true, Monotonicity::nondecreasing);
  p.phi3 = LinearSpline::sample(0.0, 3.0, 31, [](double x) { return std::exp(-x * x); }, true,
                                Monotonicity::nonincreasing);
  p.scale_splines.assign(num_filters, LinearSpline(-1.0, 51.0, std::vector<double>(14, 3.0)));
  p.eps_m = eps_m;
  return p;
}

void MaskNet::project() {
  w_mask.project();
  phi1.project();
  phi2.project();
  phi3.project();
}

std::vector<double> alpha_scaling(std::span<const LinearSpline> s, double sigma) {
  return alpha_scaling(s, sigma, sigma);
}

std::vector<double> alpha_scaling(std::span<const LinearSpline> s, double spline_arg,
                                  double noise_level) {
  if (noise_level < 0) throw std::invalid_argument("alpha_scaling: sigma must be >= 0");
  std::vector<double> alpha(s.size());
  for (std::size_t c = 0; c < s.size(); ++c)
    alpha[c] = std::exp(s[c](spline_arg)) / (noise_level + kAlphaOffset);
  return alpha;
}

std::vector<double> phi_sigma(const LinearSpline& phi3, double alpha, std::span<const double> t,
                              double eps_m) {
  if (!(alpha > 0)) throw std::invalid_argument("phi_sigma: alpha must be positive");
  std::vector<double> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i)
    out[i] = std::clamp(phi3(alpha * t[i]), eps_m, 1.0);
  return out;
}

Mask mask_compute(const MaskNet& p, const Tensor& x, double sigma,
                  const MultiConvPlan* w_mask_plan, MaskTrace* trace) {
  if (x.channels() != p.w_mask.in_channels())
    throw ShapeError("mask_compute expects " + std::to_string(p.w_mask.in_channels()) +
                     " channels, got " + std::to_string(x.channels()));
  if (sigma < 0) throw std::invalid_argument("mask_compute: sigma must be >= 0");

  Tensor a0 = w_mask_plan ? w_mask_plan->forward(x) : p.w_mask.forward(x);
  Tensor b0(a0.shape());
  apply_spline(p.phi1, a0.data(), b0.data());
  Tensor a1 = p.mix1.apply(b0);
  Tensor b1(a1.shape());
  apply_spline(p.phi2, a1.data(), b1.data());
  Tensor t = p.mix2.apply(b1);

  const auto alpha = alpha_scaling(p.scale_splines, sigma, sigma / kIntensityScale);
  Mask m(t.shape());
  for (int c = 0; c < t.channels(); ++c) {
    auto tc = t.plane(c);
    auto mc = m.plane(c);
    for (std::size_t i = 0; i < tc.size(); ++i)
      mc[i] = std::clamp(p.phi3(alpha[c] * tc[i]), p.eps_m, 1.0);
  }
  if (trace != nullptr) {
    trace->input = x;
    trace->a0 = std::move(a0);
    trace->a1 = std::move(a1);
    trace->t = std::move(t);
    trace->alpha = alpha;
    trace->sigma = sigma;
  }
  return m;
}

MaskNetGrad MaskNetGrad::zeros(const MaskNet& p) {
  MaskNetGrad g;
  g.w_mask = p.w_mask.zero_gradient();
  g.mix1.assign(p.mix1.weights.size(), 0.0);
  g.mix2.assign(p.mix2.weights.size(), 0.0);
  g.phi1.assign(p.phi1.num_knots(), 0.0);
  g.phi2.assign(p.phi2.num_knots(), 0.0);
  g.phi3.assign(p.phi3.num_knots(), 0.0);
  g.scale_splines.resize(p.scale_splines.size());
  for (std::size_t c = 0; c < p.scale_splines.size(); ++c)
    g.scale_splines[c].assign(p.scale_splines[c].num_knots(), 0.0);
  return g;
}

Tensor mask_backward(const MaskNet& p, const MaskTrace& trace, const Tensor& upstream,
                     MaskNetGrad& grad, bool want_input_gradient,
                     const MultiConvPlan* w_mask_plan) {
  require_shape(upstream, trace.t.shape(), "mask_backward upstream");
  const Tensor& t = trace.t;

  // Clamp and phi3 (clamp passes gradient on the closed interval, like
  // torch.clamp).
  Tensor dt(t.shape());
  for (int c = 0; c < t.channels(); ++c) {
    const double alpha = trace.alpha[c];
    auto tc = t.plane(c);
    auto gc = upstream.plane(c);
    auto dc = dt.plane(c);
    double dalpha = 0.0;
    for (std::size_t i = 0; i < tc.size(); ++i) {
      if (gc[i] == 0.0) continue;
      const double u = alpha * tc[i];
      const double v = p.phi3(u);
      if (v < p.eps_m || v > 1.0) continue;
      const auto k = p.phi3.knot_weights(u);
      grad.phi3[k.lo] += gc[i] * k.w_lo;
      grad.phi3[k.lo + 1] += gc[i] * k.w_hi;
      const double du = gc[i] * p.phi3.slope(u);
      dc[i] = du * alpha;
      dalpha += du * tc[i];
    }
    // d alpha / d s_c values = alpha * knot weights of s_c at sigma.
    const auto k = p.scale_splines[c].knot_weights(trace.sigma);
    grad.scale_splines[c][k.lo] += dalpha * alpha * k.w_lo;
    grad.scale_splines[c][k.lo + 1] += dalpha * alpha * k.w_hi;
  }

  Tensor b1(trace.a1.shape());
  apply_spline(p.phi2, trace.a1.data(), b1.data());
  p.mix2.accumulate_gradient(dt, b1, grad.mix2);
  const Tensor db1 = p.mix2.adjoint(dt);
  const Tensor da1 = spline_backward(p.phi2, trace.a1, db1, grad.phi2);

  Tensor b0(trace.a0.shape());
  apply_spline(p.phi1, trace.a0.data(), b0.data());
  p.mix1.accumulate_gradient(da1, b0, grad.mix1);
  const Tensor db0 = p.mix1.adjoint(da1);
  const Tensor da0 = spline_backward(p.phi1, trace.a0, db0, grad.phi1);

  p.w_mask.accumulate_gradient(trace.input, da0, grad.w_mask);
  if (!want_input_gradient) return {};
  return w_mask_plan ? w_mask_plan->adjoint(da0) : p.w_mask.adjoint(da0);
}

double mask_lipschitz_bound(const MaskNet& p, double sigma, int height, int width) {
  const MultiConvPlan plan(p.w_mask, height, width);
  const auto alpha = alpha_scaling(p.scale_splines, sigma, sigma / kIntensityScale);
  const double alpha_max = *std::max_element(alpha.begin(), alpha.end());
  return plan.exact_norm() * p.phi1.max_abs_slope() * conv_norm(p.mix1, height, width) *
         p.phi2.max_abs_slope() * conv_norm(p.mix2, height, width) * alpha_max *
         p.phi3.max_abs_slope();
}

}  // namespace deal
