#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "deal/errors.hpp"
#include "deal/maskgen.hpp"
#include "deal/synthetic.hpp"
#include "oracles.hpp"

using namespace deal;

namespace {

std::vector<LinearSpline> constant_scales(int n, double value) {
  return std::vector<LinearSpline>(n, LinearSpline(-1.0, 51.0, std::vector<double>(14, value)));
}

// A mask network with every component randomized away from its
// initialization and its splines kept feasible.
MaskNet perturbed_net(std::uint64_t seed) {
  MaskNet p = MaskNet::initialize(1, 3, 3, seed);
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> n(0.0, 0.05);
  for (auto* s : {&p.phi1, &p.phi2, &p.phi3})
    for (double& v : s->values()) v += n(rng);
  p.phi3.values()[0] = 0.98;
  p.project();
  for (auto& s : p.scale_splines)
    for (double& v : s.values()) v = -2.0 + n(rng);
  for (double& v : p.mix1.weights) v += n(rng);
  return p;
}

double mask_objective(const MaskNet& p, const Tensor& x, const Tensor& up, double sigma) {
  return dot(mask_compute(p, x, sigma), up);
}

}  // namespace

TEST(AlphaScaling, InitializedValueAtSigmaFive) {
  const auto s = constant_scales(2, 3.0);
  const auto a = alpha_scaling(s, 5.0);
  EXPECT_NEAR(a[0], std::exp(3.0) / 5.00001, 1e-12);
  EXPECT_NEAR(a[1], 4.01710, 1e-5);
}

TEST(AlphaScaling, ZeroSplineZeroSigma) {
  EXPECT_NEAR(alpha_scaling(constant_scales(1, 0.0), 0.0)[0], 1e5, 1e-6);
}

TEST(AlphaScaling, SplineArgumentSeparateFromNoiseLevel) {
  std::vector<LinearSpline> s{LinearSpline::sample(-1.0, 51.0, 14, [](double x) { return x / 10; })};
  const double a = alpha_scaling(s, 25.0, 25.0 / 255.0)[0];
  EXPECT_NEAR(a, std::exp(s[0](25.0)) / (25.0 / 255.0 + 1e-5), 1e-9);
}

TEST(PhiSigma, ClampBehaviour) {
  const MaskNet p = MaskNet::initialize(1, 2, 3, 0);
  const std::vector<double> t{0.0, 2.0, 1e6, -1e6};
  const auto v = phi_sigma(p.phi3, 1.0, t, 1e-3);
  EXPECT_EQ(v[0], 1.0);
  EXPECT_NEAR(v[1], std::exp(-4.0), 1e-15);
  EXPECT_EQ(v[2], 1e-3);
  EXPECT_EQ(v[3], 1e-3);
  EXPECT_NEAR(phi_sigma(p.phi3, 4.0, std::vector<double>{0.5}, 1e-3)[0], std::exp(-4.0), 1e-15);
}

TEST(MaskCompute, ZeroImageGivesUnitMask) {
  const MaskNet p = MaskNet::initialize(1, 4, 3, 1);
  const Mask m = mask_compute(p, Tensor(Shape{1, 8, 8}), 25.0);
  EXPECT_EQ(m.shape(), (Shape{4, 8, 8}));
  for (double v : m.data()) EXPECT_EQ(v, 1.0);
}

TEST(MaskCompute, RangeForAnyInput) {
  for (std::uint64_t s = 0; s < 6; ++s) {
    const MaskNet p = perturbed_net(s);
    const Tensor x = oracle::random_tensor(Shape{1, 8, 8}, s, 3.0);
    for (double sigma : {0.0, 5.0, 25.0, 50.0}) {
      const Mask m = mask_compute(p, x, sigma);
      for (double v : m.data()) {
        EXPECT_GE(v, p.eps_m);
        EXPECT_LE(v, 1.0);
      }
    }
  }
}

TEST(MaskCompute, StepEdgeAttenuatedFlatRegionsOpen) {
  const MaskNet p = MaskNet::initialize(1, 8, 9, 2);
  const Image x = step_image(64, 64);
  const Mask m = mask_compute(p, x, 25.0);
  auto mean_at = [&](int i, int j) {
    double s = 0.0;
    for (int c = 0; c < m.channels(); ++c) s += m.at(c, i, j);
    return s / m.channels();
  };
  // Edges at columns 32 (step) and 0 (wraparound); the receptive field
  // reaches 12 pixels.
  for (int i = 0; i < 64; ++i) {
    EXPECT_LT(mean_at(i, 32), 0.999);
    EXPECT_LT(mean_at(i, 31), 0.999);
    EXPECT_NEAR(mean_at(i, 16), 1.0, 1e-6);
    EXPECT_NEAR(mean_at(i, 48), 1.0, 1e-6);
    EXPECT_LT(mean_at(i, 32), mean_at(i, 16));
  }
}

TEST(MaskCompute, PlanRouteMatchesDirect) {
  const MaskNet p = perturbed_net(3);
  const Tensor x = oracle::random_tensor(Shape{1, 8, 8}, 9);
  const MultiConvPlan plan(p.w_mask, 8, 8);
  EXPECT_LT(oracle::rel_diff(mask_compute(p, x, 20.0, &plan), mask_compute(p, x, 20.0)), 1e-12);
}

TEST(MaskCompute, ShapeMismatchThrows) {
  const MaskNet p = MaskNet::initialize(1, 4, 3, 1);
  EXPECT_THROW(mask_compute(p, Tensor(Shape{3, 8, 8}), 25.0), ShapeError);
}

TEST(MaskBackward, MatchesFiniteDifferences) {
  const MaskNet p = perturbed_net(4);
  const double sigma = 20.0;
  const Tensor x = oracle::random_tensor(Shape{1, 8, 8}, 11);
  const Tensor up = oracle::random_tensor(Shape{3, 8, 8}, 12);
  MaskTrace trace;
  mask_compute(p, x, sigma, nullptr, &trace);
  MaskNetGrad g = MaskNetGrad::zeros(p);
  const Tensor gx = mask_backward(p, trace, up, g, true);

  const double h = 1e-6;
  const Tensor dir = oracle::random_tensor(x.shape(), 13);
  Tensor xp = x;
  Tensor xm = x;
  axpy(h, dir, xp);
  axpy(-h, dir, xm);
  const double fd_x = (mask_objective(p, xp, up, sigma) - mask_objective(p, xm, up, sigma)) / (2 * h);
  EXPECT_NEAR(dot(gx, dir), fd_x, 1e-5 * std::max(1.0, std::abs(fd_x)));

  auto check = [&](auto&& field, const std::vector<double>& grad, const char* what) {
    double worst = 0.0;
    double scale = 1e-8;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      MaskNet a = p;
      MaskNet b = p;
      field(a)[i] += h;
      field(b)[i] -= h;
      const double fd = (mask_objective(a, x, up, sigma) - mask_objective(b, x, up, sigma)) / (2 * h);
      worst = std::max(worst, std::abs(fd - grad[i]));
      scale = std::max(scale, std::abs(fd));
    }
    EXPECT_LE(worst, 1e-5 * scale) << what;
  };
  check([](MaskNet& q) { return q.mix1.weights.data(); }, g.mix1, "mix1");
  check([](MaskNet& q) { return q.mix2.weights.data(); }, g.mix2, "mix2");
  check([](MaskNet& q) { return q.phi1.values().data(); }, g.phi1, "phi1");
  check([](MaskNet& q) { return q.phi2.values().data(); }, g.phi2, "phi2");
  check([](MaskNet& q) { return q.phi3.values().data(); }, g.phi3, "phi3");
  for (int l = 0; l < 3; ++l)
    check([l](MaskNet& q) { return q.w_mask.layers[l].weights.data(); }, g.w_mask.layers[l],
          "w_mask");
  for (int c = 0; c < 3; ++c)
    check([c](MaskNet& q) { return q.scale_splines[c].values().data(); }, g.scale_splines[c],
          "scale");
}

TEST(MaskLipschitz, BoundDominatesObservedRatios) {
  const MaskNet p = perturbed_net(5);
  const double bound = mask_lipschitz_bound(p, 15.0, 8, 8);
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 30; ++s) {
    const Tensor a = oracle::random_tensor(Shape{1, 8, 8}, 100 + s, 0.3);
    Tensor b = a;
    axpy(1e-3, oracle::random_tensor(a.shape(), 200 + s), b);
    const double ratio =
        norm(mask_compute(p, a, 15.0) - mask_compute(p, b, 15.0)) / norm(a - b);
    worst = std::max(worst, ratio);
  }
  EXPECT_GT(worst, 0.0);
  EXPECT_LE(worst, bound);
}
