#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "deal/maskgen.hpp"
#include "deal/spline.hpp"
#include "oracles.hpp"

using namespace deal;

namespace {

LinearSpline random_spline(std::uint64_t seed, bool symmetric = false,
                           Monotonicity mono = Monotonicity::none) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> v(11);
  for (double& x : v) x = normal(rng);
  return LinearSpline(symmetric ? 0.0 : -2.0, 3.0, v, symmetric, mono);
}

// Points at least 1e-3 away from every knot.
std::vector<double> off_knot_points(const LinearSpline& s, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-6.0, 6.0);
  std::vector<double> xs;
  while (static_cast<int>(xs.size()) < n) {
    const double x = u(rng);
    const double pos = ((s.symmetric() ? std::abs(x) : x) - s.knot_min()) / s.spacing();
    if (std::abs(pos - std::round(pos)) * s.spacing() > 1e-3 && std::abs(x) > 1e-3) xs.push_back(x);
  }
  return xs;
}

}  // namespace

TEST(SplineEval, AbsoluteValueInit) {
  const MaskNet p = MaskNet::initialize(1, 2, 3, 0);
  EXPECT_NEAR(p.phi1(1.5), 1.5, 1e-15);
  EXPECT_NEAR(p.phi2(-1.5), 1.5, 1e-15);
  EXPECT_NEAR(p.phi1(0.5), 0.5, 1e-15);
  EXPECT_EQ(p.phi1.num_knots(), 31);
  EXPECT_DOUBLE_EQ(p.phi1.knot_max(), 3.0);
}

TEST(SplineEval, GaussianInitAtKnot) {
  const MaskNet p = MaskNet::initialize(1, 2, 3, 0);
  EXPECT_NEAR(p.phi3(2.0), std::exp(-4.0), 1e-15);
  EXPECT_NEAR(p.phi3(2.0), 0.018316, 1e-6);
  EXPECT_NEAR(p.phi3(-2.0), std::exp(-4.0), 1e-15);
}

TEST(SplineEval, KnotInterpolationExact) {
  const LinearSpline s = random_spline(3);
  for (int i = 0; i < s.num_knots(); ++i) EXPECT_EQ(s(s.knot(i)), s.values()[i]);
}

TEST(SplineEval, LinearBetweenAndBeyondKnots) {
  const LinearSpline s(0.0, 2.0, {1.0, 3.0, 2.0});
  EXPECT_DOUBLE_EQ(s(0.25), 1.5);
  EXPECT_DOUBLE_EQ(s(1.5), 2.5);
  EXPECT_DOUBLE_EQ(s(3.0), 1.0);
  EXPECT_DOUBLE_EQ(s(-1.0), -1.0);
}

TEST(SplineEval, SymmetricEvaluation) {
  const LinearSpline s = random_spline(5, true);
  for (double x : {0.3, 1.7, 2.9, 4.5}) EXPECT_EQ(s(x), s(-x));
}

TEST(SplineEval, VectorEvalMatchesScalar) {
  const LinearSpline s = random_spline(6);
  const std::vector<double> xs = off_knot_points(s, 50, 1);
  const auto ys = s.eval(xs);
  for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_EQ(ys[i], s(xs[i]));
}

TEST(SplineSlope, AbsoluteValueSigns) {
  const LinearSpline s = LinearSpline::sample(0.0, 3.0, 31, [](double x) { return x; }, true);
  EXPECT_DOUBLE_EQ(s.slope(0.5), 1.0);
  EXPECT_DOUBLE_EQ(s.slope(-0.5), -1.0);
}

TEST(SplineSlope, RightSegmentAtKnot) {
  const LinearSpline s(0.0, 2.0, {0.0, 1.0, 4.0});
  EXPECT_DOUBLE_EQ(s.slope(1.0), 3.0);
  EXPECT_DOUBLE_EQ(s.slope(0.0), 1.0);
}

TEST(SplineSlope, MatchesCentralDifferences) {
  for (bool sym : {false, true}) {
    const LinearSpline s = random_spline(9, sym);
    for (double x : off_knot_points(s, 1000, 2)) {
      const double fd = (s(x + 1e-5) - s(x - 1e-5)) / 2e-5;
      EXPECT_NEAR(s.slope(x), fd, 1e-6) << x;
    }
  }
}

TEST(SplineSlope, KnotWeightsReproduceValue) {
  const LinearSpline s = random_spline(10);
  for (double x : off_knot_points(s, 200, 3)) {
    const auto kw = s.knot_weights(x);
    EXPECT_NEAR(kw.w_lo + kw.w_hi, 1.0, 1e-14);
    EXPECT_NEAR(kw.w_lo * s.values()[kw.lo] + kw.w_hi * s.values()[kw.lo + 1], s(x), 1e-12);
  }
}

TEST(SplineSlope, MaxAbsSlopeBoundsAllSlopes) {
  const LinearSpline s = random_spline(11);
  double seen = 0.0;
  for (double x : off_knot_points(s, 500, 4)) seen = std::max(seen, std::abs(s.slope(x)));
  EXPECT_LE(seen, s.max_abs_slope() + 1e-14);
}

TEST(SplineProject, FeasibleUnchanged) {
  const LinearSpline s(0.0, 2.0, {0.0, 1.0, 2.0}, false, Monotonicity::nondecreasing);
  EXPECT_TRUE(s.feasible());
  EXPECT_EQ(s.projected(), s);
}

TEST(SplineProject, MatchesEnumeratedEnvelope) {
  const LinearSpline s(0.0, 2.0, {0.0, 2.0, 1.0}, false, Monotonicity::nondecreasing);
  EXPECT_FALSE(s.feasible());
  const LinearSpline p = s.projected();
  const auto ref = oracle::monotone_envelope({0.0, 2.0, 1.0}, true);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(p.values()[i], ref[i]);
  EXPECT_TRUE(p.feasible());
  EXPECT_EQ(p.projected(), p);
}

TEST(SplineProject, EnumerationSweep) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> level(0, 4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(4);
    for (double& x : v) x = level(rng);
    for (bool inc : {true, false}) {
      const LinearSpline s(0.0, 3.0, v, false,
                           inc ? Monotonicity::nondecreasing : Monotonicity::nonincreasing);
      const LinearSpline p = s.projected();
      const auto ref = oracle::monotone_envelope(v, inc);
      for (int i = 0; i < 4; ++i) EXPECT_EQ(p.values()[i], ref[i]);
      EXPECT_EQ(p.projected(), p);
    }
  }
}

TEST(SplineProject, NoneLeavesValuesAlone) {
  const LinearSpline s = random_spline(13);
  EXPECT_EQ(s.projected(), s);
}

TEST(SplineProject, MonotoneEvaluationOnPositiveAxis) {
  for (auto mono : {Monotonicity::nondecreasing, Monotonicity::nonincreasing}) {
    const LinearSpline s = random_spline(14, true, mono).projected();
    double prev = s(0.0);
    for (double x = 0.01; x < 6.0; x += 0.01) {
      const double v = s(x);
      if (mono == Monotonicity::nondecreasing) {
        EXPECT_GE(v, prev - 1e-15);
      } else {
        EXPECT_LE(v, prev + 1e-15);
      }
      prev = v;
    }
  }
}

TEST(SplineTv2, AffineIsZero) {
  EXPECT_EQ(LinearSpline(0.0, 3.0, {0.0, 1.0, 2.0, 3.0}).tv2(), 0.0);
}

TEST(SplineTv2, HatIsTwo) {
  EXPECT_DOUBLE_EQ(LinearSpline(0.0, 2.0, {0.0, 1.0, 0.0}).tv2(), 2.0);
}

TEST(SplineTv2, AbsoluteValueKinkAtOrigin) {
  const MaskNet p = MaskNet::initialize(1, 2, 3, 0);
  // Slope 1 on both sides of the reflection: the jump in slope is 2.
  EXPECT_NEAR(p.phi1.tv2(), 2.0, 1e-12);
}

TEST(SplineTv2, MatchesOracleAndIsHomogeneous) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const LinearSpline s = random_spline(seed, seed % 2 == 0);
    EXPECT_NEAR(s.tv2(), oracle::tv2(s), 1e-12);
    EXPECT_GE(s.tv2(), 0.0);
    LinearSpline t = s;
    for (double& v : t.values()) v *= 3.5;
    EXPECT_NEAR(t.tv2(), 3.5 * s.tv2(), 1e-12);
  }
}

TEST(SplineTv2, GradientMatchesFiniteDifferences) {
  const LinearSpline s = random_spline(21, true);
  const auto g = s.tv2_gradient();
  for (int i = 0; i < s.num_knots(); ++i) {
    LinearSpline a = s;
    LinearSpline b = s;
    a.values()[i] += 1e-7;
    b.values()[i] -= 1e-7;
    EXPECT_NEAR(g[i], (a.tv2() - b.tv2()) / 2e-7, 1e-6);
  }
}
