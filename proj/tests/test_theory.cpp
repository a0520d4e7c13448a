#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "deal/maskgen.hpp"
#include "deal/multiconv.hpp"
#include "deal/solver.hpp"
#include "deal/synthetic.hpp"
#include "deal/theory.hpp"
#include "oracles.hpp"

using namespace deal;

namespace {

const Shape kGrid{1, 8, 8};

OperatorSpec downsample2() {
  OperatorSpec s;
  s.kind = OperatorKind::conv_downsample;
  s.kernel = gaussian_kernel(3, 0.8);
  s.stride = 2;
  return s;
}

double dense_min_eig(const Eigen::MatrixXd& a) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a, Eigen::EigenvaluesOnly).eigenvalues()(0);
}

Eigen::MatrixXd oracle_system(const OperatorSpec& spec, const MultiConv& w, const Mask* m, double c) {
  const Eigen::MatrixXd hd = oracle::dense(
      [&](const Tensor& x) {
        return spec.kind == OperatorKind::identity ? x
                                                   : oracle::conv_downsample(x, spec.kernel, spec.stride);
      },
      kGrid);
  const Eigen::MatrixXd wd =
      oracle::dense([&](const Tensor& x) { return oracle::multiconv(w, x); }, kGrid);
  Eigen::VectorXd m2 = Eigen::VectorXd::Ones(wd.rows());
  if (m != nullptr) m2 = oracle::to_eigen(*m).array().square();
  return hd.transpose() * hd + c * wd.transpose() * m2.asDiagonal() * wd;
}

}  // namespace

TEST(DenseMaterialize, IdentityMap) {
  const VectorMap id = [](std::span<const double> x) { return std::vector<double>(x.begin(), x.end()); };
  EXPECT_EQ(dense_materialize(id, 4), Eigen::MatrixXd::Identity(4, 4));
  EXPECT_THROW(dense_materialize(id, 5, 4), std::length_error);
}

TEST(DenseMaterialize, NormalMatrixWithoutRegularizer) {
  const DealModel model = oracle::small_model(4, 3, 1);
  const auto id = make_operator(OperatorSpec{}, kGrid);
  EXPECT_EQ(dense_normal_matrix(id, model.w, nullptr, 0.0), Eigen::MatrixXd::Identity(64, 64));
}

TEST(DenseMaterialize, GramMatchesCirculantFromEffectiveKernels) {
  const DealModel model = oracle::small_model(3, 3, 2);
  const Tensor k = mc_effective_kernels(model.w);
  const int r = k.height();
  Eigen::MatrixXd wd = Eigen::MatrixXd::Zero(3 * 64, 64);
  for (int c = 0; c < 3; ++c)
    for (int p = 0; p < 64; ++p)
      for (int u = 0; u < r; ++u)
        for (int v = 0; v < r; ++v) {
          const int qi = ((p / 8 - (u - r / 2)) % 8 + 8) % 8;
          const int qj = ((p % 8 - (v - r / 2)) % 8 + 8) % 8;
          wd(c * 64 + p, qi * 8 + qj) += k.at(c, u, v);
        }
  const auto id = make_operator(OperatorSpec{}, kGrid);
  const Eigen::MatrixXd a = dense_normal_matrix(id, model.w, nullptr, 1.0);
  const Eigen::MatrixXd wtw = a - Eigen::MatrixXd::Identity(64, 64);
  EXPECT_LT((wtw - wd.transpose() * wd).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(LambdaEps, IdentityOperator) {
  const DealModel model = oracle::small_model(4, 3, 3);
  const auto id = make_operator(OperatorSpec{}, kGrid);
  const double le = lambda_eps(id, model.w, 0.5);
  EXPECT_GE(le, 1.0 - 1e-12);
  // Constants lie in ker(W), so the smallest eigenvalue is exactly 1.
  EXPECT_NEAR(le, 1.0, 1e-12);
}

TEST(LambdaEps, DownsampleMatchesDenseEigensolver) {
  const DealModel model = oracle::small_model(4, 3, 4);
  const OperatorSpec spec = downsample2();
  const auto h = make_operator(spec, kGrid);
  const double c = floor_coefficient(2.0, 0.05);
  EXPECT_DOUBLE_EQ(c, 2.0 * 0.05 * 0.05);
  const double ref = dense_min_eig(oracle_system(spec, model.w, nullptr, c));
  EXPECT_NEAR(lambda_eps(h, model.w, c), ref, 1e-10);
  EXPECT_GT(ref, 0.0);
}

TEST(Prop1, IdentityAlwaysPositiveDefinite) {
  const DealModel model = oracle::small_model(4, 3, 5);
  const auto id = make_operator(OperatorSpec{}, kGrid);
  const Mask m = mask_compute(model.mask, oracle::random_tensor(kGrid, 1), 25.0);
  const Prop1Result r = check_prop1(id, model.w, m, 7.0);
  EXPECT_TRUE(r.is_pd);
  EXPECT_GE(r.min_eig, 1.0 - 1e-12);
}

TEST(Prop1, ZeroOperatorWithZeroMeanFiltersIsSingular) {
  const DealModel model = oracle::small_model(4, 3, 6);
  OperatorSpec zero;
  zero.kind = OperatorKind::conv_downsample;
  zero.kernel = {{0.0}};
  const auto h = make_operator(zero, kGrid);
  const Mask m = mask_compute(model.mask, oracle::random_tensor(kGrid, 2), 25.0);
  const Prop1Result r = check_prop1(h, model.w, m, 3.0);
  EXPECT_FALSE(r.is_pd);
  EXPECT_NEAR(r.min_eig, 0.0, 1e-12);
}

TEST(Prop1, DownsampleVerdictMatchesDense) {
  const DealModel model = oracle::small_model(4, 3, 7);
  const OperatorSpec spec = downsample2();
  const auto h = make_operator(spec, kGrid);
  const Mask m = mask_compute(model.mask, oracle::random_tensor(kGrid, 3), 25.0);
  const Prop1Result r = check_prop1(h, model.w, m, 3.0);
  const double ref = dense_min_eig(oracle_system(spec, model.w, &m, 3.0));
  EXPECT_NEAR(r.min_eig, ref, 1e-10);
  EXPECT_EQ(r.is_pd, ref > 1e-12);
  EXPECT_TRUE(r.is_pd);
}

TEST(Lemma2, EqualDataGivesZero) {
  const DealModel model = oracle::small_model(4, 3, 8);
  const auto id = make_operator(OperatorSpec{}, kGrid);
  const DealSolver solver(model, id);
  const Tensor y = oracle::random_tensor(kGrid, 1);
  const BoundCheck b = check_lemma2(solver, oracle::random_tensor(kGrid, 2), y, y, 25.0, 3.0, 1.0, 1.0);
  EXPECT_EQ(b.lhs, 0.0);
  EXPECT_TRUE(b.holds(0.0));
}

TEST(Lemma2, ZeroLambdaIdentityIsTight) {
  const DealModel model = oracle::small_model(4, 3, 8);
  const auto id = make_operator(OperatorSpec{}, kGrid);
  const DealSolver solver(model, id);
  const Tensor y1 = oracle::random_tensor(kGrid, 1);
  const Tensor y2 = oracle::random_tensor(kGrid, 2);
  const double le = lambda_eps(id, model.w, floor_coefficient(0.0, model.eps_m()));
  const BoundCheck b =
      check_lemma2(solver, oracle::random_tensor(kGrid, 3), y1, y2, 25.0, 0.0, le, operator_norm(id));
  EXPECT_NEAR(b.lhs, norm(y1 - y2), 1e-10);
  EXPECT_NEAR(b.bound, norm(y1 - y2), 1e-10);
}

TEST(Lemma2, HundredRandomPairs) {
  const DealModel model = oracle::small_model(4, 3, 9);
  const auto h = make_operator(downsample2(), kGrid);
  const DealSolver solver(model, h);
  const double lambda = 5.0;
  const double le = lambda_eps(h, model.w, floor_coefficient(lambda, model.eps_m()));
  const double hn = operator_norm(h);
  std::mt19937_64 rng(10);
  for (int t = 0; t < 100; ++t) {
    const Tensor y1 = oracle::random_tensor(h.output_shape(), rng());
    const Tensor y2 = oracle::random_tensor(h.output_shape(), rng());
    const Tensor x = oracle::random_tensor(kGrid, rng());
    EXPECT_TRUE(check_lemma2(solver, x, y1, y2, 25.0, lambda, le, hn).holds(0.0));
  }
}

TEST(Contraction, ZeroLambdaOrFrozenMaskGivesZero) {
  const DealModel model = oracle::small_model(4, 3, 11);
  const auto id = make_operator(OperatorSpec{}, kGrid);
  const DealSolver solver(model, id);
  const Tensor y = oracle::random_tensor(kGrid, 1);
  EXPECT_EQ(estimate_contraction(solver, y, 25.0, 0.0, 5.0, 10, 1), 0.0);
  EXPECT_EQ(estimate_contraction(solver, y, 25.0, 4.0, 5.0, 10, 1, true), 0.0);
  EXPECT_GT(estimate_contraction(solver, y, 25.0, 4.0, 5.0, 10, 1), 0.0);
}

TEST(PathContraction, GeometricSequenceGivesItsRatio) {
  std::vector<Image> it;
  for (int k = 0; k < 8; ++k) it.emplace_back(kGrid, std::pow(0.5, k));
  EXPECT_NEAR(path_contraction(it, 0.0), 0.5, 1e-15);
  it.emplace_back(kGrid, 5.0);
  EXPECT_GT(path_contraction(it, 0.0), 1.0);
  const std::vector<Image> flat(3, Image(kGrid, 1.0));
  EXPECT_EQ(path_contraction(flat, 0.0), 0.0);
  EXPECT_EQ(path_contraction(it, 100.0), 0.0);
}

TEST(RangeRatio, SkipsInitialIterate) {
  const std::vector<Image> it{Image(kGrid, 10.0), Image(kGrid, 0.125)};
  EXPECT_DOUBLE_EQ(range_ratio(it, 1.0), 1.0);
}

TEST(Theorem4, EqualDataHasNoStabilityGap) {
  const DealModel model = oracle::small_model(4, 3, 12);
  const auto id = make_operator(OperatorSpec{}, kGrid);
  const DealSolver solver(model, id);
  const Tensor y = piecewise_constant(1, 8, 8, 2);
  const Theorem4Verdict v = check_theorem4(solver, y, y, 25.0, 0.05, 0.5, 1.0, 1.0);
  EXPECT_TRUE(v.applicable);
  EXPECT_EQ(v.stability_lhs, 0.0);
  EXPECT_TRUE(v.stability_holds);
}

TEST(Theorem4, NotApplicableWithoutContraction) {
  const DealModel model = oracle::small_model(4, 3, 12);
  const auto id = make_operator(OperatorSpec{}, kGrid);
  const DealSolver solver(model, id);
  const Tensor y = piecewise_constant(1, 8, 8, 2);
  EXPECT_FALSE(check_theorem4(solver, y, y, 25.0, 1.0, 1.2, 1.0, 1.0).applicable);
}

TEST(TheoryReport, RandomModelPassesEveryCheck) {
  const DealModel model = oracle::small_model(4, 3, 13);
  const auto h = make_operator(downsample2(), kGrid);
  const Measurement y = h.apply(piecewise_constant(1, 8, 8, 3));
  TheoryOptions opt;
  opt.contraction_trials = 20;
  const TheoryReport r = theory_report(model, h, y, 25.0, 0.3, opt);
  EXPECT_GT(r.lambda_eps, 0.0);
  EXPECT_TRUE(r.prop1_pd);
  EXPECT_TRUE(r.lemma2_holds);
  EXPECT_TRUE(r.range_holds);
  EXPECT_LE(r.range_worst_ratio, 1.0);
  EXPECT_TRUE(r.q_within_theorem3);
  EXPECT_LE(r.q_hat, r.theorem3_bound);
  if (r.q_hat < 1.0) {
    EXPECT_TRUE(r.theorem4.applicable);
    EXPECT_TRUE(r.theorem4.envelope_holds);
    EXPECT_TRUE(r.theorem4.stability_holds);
  }
  const auto j = nlohmann::json::parse(r.to_json());
  for (const char* key : {"sigma", "lambda", "lambda_eps", "q_hat", "prop1", "lemma2", "range",
                          "theorem4"})
    EXPECT_TRUE(j.contains(key)) << key;
}
