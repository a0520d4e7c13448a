#include "deal/spline.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace deal {
namespace {

double sign(double v) { return (v > 0) - (v < 0); }

}  // namespace

LinearSpline::LinearSpline(double knot_min, double knot_max, std::vector<double> values,
                           bool symmetric, Monotonicity monotonicity)
    : knot_min_(knot_min),
      knot_max_(knot_max),
      values_(std::move(values)),
      symmetric_(symmetric),
      monotonicity_(monotonicity) {
  if (!(knot_max > knot_min)) throw std::invalid_argument("spline knot_max must exceed knot_min");
  if (values_.size() < 2)
    throw std::invalid_argument("spline needs at least 2 knots, got " +
                                std::to_string(values_.size()));
  spacing_ = (knot_max - knot_min) / static_cast<double>(values_.size() - 1);
}

LinearSpline LinearSpline::sample(double knot_min, double knot_max, int num_knots,
                                  const std::function<double(double)>& f, bool symmetric,
                                  Monotonicity monotonicity) {
  if (num_knots < 2) throw std::invalid_argument("spline needs at least 2 knots");
  std::vector<double> v(num_knots);
  const double h = (knot_max - knot_min) / (num_knots - 1);
  for (int i = 0; i < num_knots; ++i) v[i] = f(knot_min + i * h);
  return LinearSpline(knot_min, knot_max, std::move(v), symmetric, monotonicity);
}

double LinearSpline::position(double x) const {
  double u = ((symmetric_ ? std::abs(x) : x) - knot_min_) / spacing_;
  // Snap to the knot so knot evaluations are exact.
  const double r = std::round(u);
  if (std::abs(u - r) < 1e-9) u = r;
  return u;
}

LinearSpline::KnotWeights LinearSpline::knot_weights(double x) const {
  const double u = position(x);
  const int last = num_knots() - 2;
  int lo = static_cast<int>(std::floor(u));
  if (lo < 0) lo = 0;
  if (lo > last) lo = last;
  const double t = u - lo;
  return {lo, 1.0 - t, t};
}

double LinearSpline::operator()(double x) const {
  const KnotWeights k = knot_weights(x);
  if (k.w_hi == 0.0) return values_[k.lo];
  if (k.w_lo == 0.0) return values_[k.lo + 1];
  return values_[k.lo] + k.w_hi * (values_[k.lo + 1] - values_[k.lo]);
}

std::vector<double> LinearSpline::eval(std::span<const double> x) const {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (*this)(x[i]);
  return out;
}

double LinearSpline::slope(double x) const {
  const KnotWeights k = knot_weights(x);
  const double s = (values_[k.lo + 1] - values_[k.lo]) / spacing_;
  if (!symmetric_) return s;
  return x < 0 ? -s : s;
}

double LinearSpline::max_abs_slope() const {
  double m = 0.0;
  for (int i = 0; i + 1 < num_knots(); ++i)
    m = std::max(m, std::abs(values_[i + 1] - values_[i]) / spacing_);
  return m;
}

bool LinearSpline::feasible() const {
  for (int i = 0; i + 1 < num_knots(); ++i) {
    if (monotonicity_ == Monotonicity::nondecreasing && values_[i + 1] < values_[i]) return false;
    if (monotonicity_ == Monotonicity::nonincreasing && values_[i + 1] > values_[i]) return false;
  }
  return true;
}

LinearSpline LinearSpline::projected() const {
  LinearSpline out = *this;
  out.project();
  return out;
}

void LinearSpline::project() {
  for (int i = 1; i < num_knots(); ++i) {
    if (monotonicity_ == Monotonicity::nondecreasing)
      values_[i] = std::max(values_[i], values_[i - 1]);
    else if (monotonicity_ == Monotonicity::nonincreasing)
      values_[i] = std::min(values_[i], values_[i - 1]);
  }
}

double LinearSpline::tv2() const {
  double total = 0.0;
  for (int i = 1; i + 1 < num_knots(); ++i)
    total += std::abs(values_[i + 1] - 2.0 * values_[i] + values_[i - 1]);
  // Reflection at 0: the mirrored neighbour of v[1] is v[1] itself.
  if (symmetric_ && knot_min_ == 0.0) total += std::abs(2.0 * (values_[1] - values_[0]));
  return total / spacing_;
}

std::vector<double> LinearSpline::tv2_gradient() const {
  std::vector<double> g(values_.size(), 0.0);
  for (int i = 1; i + 1 < num_knots(); ++i) {
    const double s = sign(values_[i + 1] - 2.0 * values_[i] + values_[i - 1]) / spacing_;
    g[i + 1] += s;
    g[i] -= 2.0 * s;
    g[i - 1] += s;
  }
  if (symmetric_ && knot_min_ == 0.0) {
    const double s = 2.0 * sign(values_[1] - values_[0]) / spacing_;
    g[1] += s;
    g[0] -= s;
  }
  return g;
}

}  // namespace deal
