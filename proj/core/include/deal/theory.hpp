#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "deal/linop.hpp"
#include "deal/model.hpp"
#include "deal/solver.hpp"

namespace deal {

/// Largest dimension materialized densely.
inline constexpr std::size_t kDenseCap = 4096;

/// Column j is apply(e_j). Throws std::length_error above `cap`.
Eigen::MatrixXd dense_materialize(const VectorMap& apply, std::size_t dim,
                                  std::size_t cap = kDenseCap);

/// H^T H + c W^T diag(m^2) W, densely (m = 1 when mask is null).
Eigen::MatrixXd dense_normal_matrix(const ForwardOperator& h, const MultiConv& w, const Mask* mask,
                                    double c);

/// lambda_min(H^T H + c W^T W) by dense symmetric eigensolve.
double lambda_eps(const ForwardOperator& h, const MultiConv& w, double c);

/// The floor coefficient c for lambda_eps: every mask value is at least
/// eps_m, so A_k >= H^T H + lambda eps_m^2 W^T W.
double floor_coefficient(double lambda, double eps_m);

struct Prop1Result {
  bool is_pd = false;
  double min_eig = 0.0;
};
/// Smallest eigenvalue of A = H^T H + lambda W^T diag(m^2) W.
Prop1Result check_prop1(const ForwardOperator& h, const MultiConv& w, const Mask& mask,
                        double lambda);

/// T(z, y) from a zero initial iterate with a tight CG tolerance.
Image apply_t(const DealSolver& solver, const Measurement& y, const Image& z, double sigma,
              double lambda, bool freeze_mask = false);

struct BoundCheck {
  double lhs = 0.0;
  double bound = 0.0;
  bool holds(double rel_tol) const { return lhs <= bound * (1.0 + rel_tol); }
};

/// ||T(x, y1) - T(x, y2)|| against (||H|| / lambda_eps) ||y1 - y2||.
BoundCheck check_lemma2(const DealSolver& solver, const Image& x, const Measurement& y1,
                        const Measurement& y2, double sigma, double lambda, double lambda_eps,
                        double h_norm);

/// max ||T(x1, y) - T(x2, y)|| / ||x1 - x2|| over random pairs in the ball
/// of the given radius; half the pairs are close together. Pairs cycle
/// through nested balls shrinking by factors of ten down to the scale of
/// ||H^T y||.
double estimate_contraction(const DealSolver& solver, const Measurement& y, double sigma,
                            double lambda, double radius, int trials, std::uint64_t seed,
                            bool freeze_mask = false);

/// Largest ||x_{k+1} - x_k|| / ||x_k - x_{k-1}|| along an iteration, skipping
/// steps no longer than min_step. Each ratio is a lower bound on q.
double path_contraction(const std::vector<Image>& iterates, double min_step);

/// Largest ||x_k|| / radius over k >= 1.
double range_ratio(const std::vector<Image>& iterates, double radius);

struct Theorem4Verdict {
  bool applicable = false;
  bool envelope_holds = false;
  bool stability_holds = false;
  /// max_k ||x_k - x_hat|| / (q^(k-1) ||x_1 - x_0|| + slack)
  double envelope_ratio = 0.0;
  double stability_lhs = 0.0;
  double stability_bound = 0.0;
};

/// Runs the fixed-point iteration from zero for y1 and y2 with tight
/// tolerances and tests ||x_k - x_hat|| <= q^(k-1) ||x_1 - x_0|| and
/// ||x_hat - z_hat|| <= ||H|| / ((1 - q) lambda_eps) ||y1 - y2||, both
/// with relative tolerance tol. Not applicable when q_hat >= 1.
Theorem4Verdict check_theorem4(const DealSolver& solver, const Measurement& y1,
                               const Measurement& y2, double sigma, double lambda, double q_hat,
                               double lambda_eps, double h_norm, double tol = 1e-3,
                               int max_outer = 1000);

struct TheoryOptions {
  int contraction_trials = 40;
  int lemma2_pairs = 100;
  double perturbation = 1e-2;
  double tol = 1e-3;
  std::uint64_t seed = 0;
};

struct TheoryReport {
  double sigma = 0.0;
  double lambda = 0.0;
  double lambda_eps = 0.0;
  double h_norm = 0.0;
  double lip_data = 0.0;
  double lip_mask_L = 0.0;
  double theorem3_bound = 0.0;
  double q_hat = 0.0;
  double radius_r = 0.0;
  bool prop1_pd = false;
  double prop1_min_eig = 0.0;
  double lemma2_worst_ratio = 0.0;
  bool lemma2_holds = false;
  double range_worst_ratio = 0.0;
  bool range_holds = false;
  bool q_within_theorem3 = false;
  Theorem4Verdict theorem4;

  std::string to_json() const;
};

/// Full numerical check of the convergence theory for one model, operator
/// and measurement on a grid small enough for dense eigensolves.
TheoryReport theory_report(const DealModel& model, const ForwardOperator& h, const Measurement& y,
                           double sigma, double lambda, const TheoryOptions& options = {});

}  // namespace deal
