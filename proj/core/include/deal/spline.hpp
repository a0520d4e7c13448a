#pragma once

#include <functional>
#include <span>
#include <vector>

namespace deal {

enum class Monotonicity { none, nondecreasing, nonincreasing };

/// Linear spline on equispaced knots with linear extension outside
/// [knot_min, knot_max] (slope of the boundary segment).
///
/// A symmetric spline is evaluated at |x|; its knots then usually start at
/// 0. Monotonicity is a constraint on the knot values, enforced by
/// project(); it is not checked on every mutation.
class LinearSpline {
 public:
  LinearSpline() = default;
  LinearSpline(double knot_min, double knot_max, std::vector<double> values, bool symmetric = false,
               Monotonicity monotonicity = Monotonicity::none);

  /// Spline whose knot values sample f.
  static LinearSpline sample(double knot_min, double knot_max, int num_knots,
                             const std::function<double(double)>& f, bool symmetric = false,
                             Monotonicity monotonicity = Monotonicity::none);

  double knot_min() const { return knot_min_; }
  double knot_max() const { return knot_max_; }
  int num_knots() const { return static_cast<int>(values_.size()); }
  double spacing() const { return spacing_; }
  double knot(int i) const { return knot_min_ + i * spacing_; }
  bool symmetric() const { return symmetric_; }
  Monotonicity monotonicity() const { return monotonicity_; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  double operator()(double x) const;
  std::vector<double> eval(std::span<const double> x) const;

  /// Derivative in x. At a knot the right segment is used; for symmetric
  /// splines the sign of x is applied (x = 0 counts as positive).
  double slope(double x) const;

  /// Output = w_lo * values[lo] + w_hi * values[lo + 1]; the weights sum to
  /// one (they extrapolate outside the knot range).
  struct KnotWeights {
    int lo;
    double w_lo;
    double w_hi;
  };
  KnotWeights knot_weights(double x) const;

  /// Largest |slope| over all segments (and therefore over the real line).
  double max_abs_slope() const;

  bool feasible() const;
  /// Cumulative max (nondecreasing) or min (nonincreasing) over the knot
  /// values. Idempotent; leaves feasible splines unchanged.
  LinearSpline projected() const;
  void project();

  /// Second-order total variation sum_i |v[i+1] - 2 v[i] + v[i-1]| / spacing.
  /// Symmetric splines also count the kink at the reflection point.
  double tv2() const;
  /// A subgradient of tv2() with respect to the knot values (sign(0) = 0).
  std::vector<double> tv2_gradient() const;

  bool operator==(const LinearSpline&) const = default;

 private:
  double position(double x) const;

  double knot_min_ = 0.0;
  double knot_max_ = 1.0;
  double spacing_ = 1.0;
  std::vector<double> values_;
  bool symmetric_ = false;
  Monotonicity monotonicity_ = Monotonicity::none;
};

}  // namespace deal
