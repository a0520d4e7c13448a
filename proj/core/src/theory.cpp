#include "deal/theory.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "deal/errors.hpp"

namespace deal {
namespace {

constexpr double kTightRelResidual = 1e-13;
constexpr int kTightMaxIter = 20000;

CgOptions tight_options(const Tensor& b) {
  const double scale = std::max(norm(b), 1e-300);
  return {std::pow(kTightRelResidual * scale, 2), kTightMaxIter};
}

double min_eigenvalue(const Eigen::MatrixXd& a) {
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

Image random_in_ball(std::mt19937_64& rng, const Shape& shape, double radius) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Image x(shape);
  for (double& v : x.data()) v = normal(rng);
  const double n = norm(x);
  x *= radius * uniform(rng) / std::max(n, 1e-300);
  return x;
}

}  // namespace

Eigen::MatrixXd dense_materialize(const VectorMap& apply, std::size_t dim, std::size_t cap) {
  if (dim > cap)
    throw std::length_error("dense_materialize: dimension " + std::to_string(dim) +
                            " exceeds the cap of " + std::to_string(cap));
  Eigen::MatrixXd a(dim, dim);
  std::vector<double> e(dim, 0.0);
  for (std::size_t j = 0; j < dim; ++j) {
    e[j] = 1.0;
    const std::vector<double> col = apply(e);
    if (col.size() != dim) throw ShapeError("dense_materialize: map changes the dimension");
    for (std::size_t i = 0; i < dim; ++i) a(i, j) = col[i];
    e[j] = 0.0;
  }
  return a;
}

Eigen::MatrixXd dense_normal_matrix(const ForwardOperator& h, const MultiConv& w, const Mask* mask,
                                    double c) {
  const Shape& in = h.input_shape();
  const Mask ones(Shape{w.out_channels(), in.height, in.width}, 1.0);
  const Mask& m = mask ? *mask : ones;
  return dense_materialize(
      [&](std::span<const double> x) {
        return normal_apply(h, w, m, c, Image(in, std::vector<double>(x.begin(), x.end())))
            .vector();
      },
      in.size());
}

double lambda_eps(const ForwardOperator& h, const MultiConv& w, double c) {
  return min_eigenvalue(dense_normal_matrix(h, w, nullptr, c));
}

double floor_coefficient(double lambda, double eps_m) { return lambda * eps_m * eps_m; }

Prop1Result check_prop1(const ForwardOperator& h, const MultiConv& w, const Mask& mask,
                        double lambda) {
  Prop1Result r;
  r.min_eig = min_eigenvalue(dense_normal_matrix(h, w, &mask, lambda));
  r.is_pd = r.min_eig > 1e-12;
  return r;
}

Image apply_t(const DealSolver& solver, const Measurement& y, const Image& z, double sigma,
              double lambda, bool freeze_mask) {
  const Mask m = solver.mask_at(z, sigma, freeze_mask);
  const Image b = solver.op().adjoint(y);
  Image x(b.shape());
  solver.solve(m, lambda, b, x, tight_options(b));
  return x;
}

BoundCheck check_lemma2(const DealSolver& solver, const Image& x, const Measurement& y1,
                        const Measurement& y2, double sigma, double lambda, double lambda_eps,
                        double h_norm) {
  BoundCheck r;
  r.lhs = norm(apply_t(solver, y1, x, sigma, lambda) - apply_t(solver, y2, x, sigma, lambda));
  r.bound = h_norm / lambda_eps * norm(y1 - y2);
  return r;
}

double estimate_contraction(const DealSolver& solver, const Measurement& y, double sigma,
                            double lambda, double radius, int trials, std::uint64_t seed,
                            bool freeze_mask) {
  if (trials < 1) throw std::invalid_argument("estimate_contraction: trials must be >= 1");
  std::mt19937_64 rng(seed);
  const Shape& shape = solver.op().input_shape();
  const double data_scale = norm(solver.op().adjoint(y));
  std::vector<double> scales{radius};
  while (scales.back() / 10.0 > 0.1 * data_scale) scales.push_back(scales.back() / 10.0);
  double q = 0.0;
  for (int t = 0; t < trials; ++t) {
    const double scale = scales[static_cast<std::size_t>(t / 2) % scales.size()];
    const Image x1 = random_in_ball(rng, shape, scale);
    Image x2 = t % 2 == 0 ? random_in_ball(rng, shape, scale)
                          : x1 + random_in_ball(rng, shape, 1e-3 * scale);
    const double dx = norm(x1 - x2);
    if (dx == 0.0) continue;
    const double dt = norm(apply_t(solver, y, x1, sigma, lambda, freeze_mask) -
                           apply_t(solver, y, x2, sigma, lambda, freeze_mask));
    if (!std::isfinite(dt)) throw SolverError("estimate_contraction: non-finite update", 0);
    q = std::max(q, dt / dx);
  }
  return q;
}

double path_contraction(const std::vector<Image>& iterates, double min_step) {
  double q = 0.0;
  for (std::size_t k = 1; k + 1 < iterates.size(); ++k) {
    const double prev = norm(iterates[k] - iterates[k - 1]);
    if (prev <= min_step) continue;
    q = std::max(q, norm(iterates[k + 1] - iterates[k]) / prev);
  }
  return q;
}

double range_ratio(const std::vector<Image>& iterates, double radius) {
  double worst = 0.0;
  for (std::size_t k = 1; k < iterates.size(); ++k)
    worst = std::max(worst, norm(iterates[k]) / radius);
  return worst;
}

namespace {

struct FixedPointRun {
  std::vector<Image> iterates;
  double slack = 0.0;
};

FixedPointRun run_tight(const DealSolver& solver, const Measurement& y, double sigma,
                        double lambda, double q, int max_outer) {
  SolveConfig cfg;
  cfg.eps_in = std::pow(kTightRelResidual * std::max(norm(solver.op().adjoint(y)), 1e-300), 2);
  cfg.k_in = kTightMaxIter;
  cfg.eps_out = 1e-12;
  cfg.k_out = max_outer;
  cfg.keep_iterates = true;
  cfg.lambda_override = lambda;
  SolveReport report;
  solver.reconstruct(y, sigma, cfg, report);
  FixedPointRun run;
  run.iterates = std::move(report.iterates);
  const std::size_t n = run.iterates.size();
  // Distance from the last iterate to the true fixed point.
  run.slack = q / (1.0 - q) * norm(run.iterates[n - 1] - run.iterates[n - 2]);
  return run;
}

}  // namespace

Theorem4Verdict check_theorem4(const DealSolver& solver, const Measurement& y1,
                               const Measurement& y2, double sigma, double lambda, double q_hat,
                               double lambda_eps, double h_norm, double tol, int max_outer) {
  Theorem4Verdict v;
  if (!(q_hat < 1.0)) return v;
  v.applicable = true;

  const FixedPointRun a = run_tight(solver, y1, sigma, lambda, q_hat, max_outer);
  const Image& x_hat = a.iterates.back();
  const double step0 = norm(a.iterates[1] - a.iterates[0]);
  v.envelope_ratio = 0.0;
  for (std::size_t k = 1; k < a.iterates.size(); ++k) {
    const double allowed =
        std::pow(q_hat, static_cast<double>(k - 1)) * step0 * (1.0 + tol) + a.slack;
    const double err = norm(a.iterates[k] - x_hat);
    v.envelope_ratio = std::max(v.envelope_ratio, allowed > 0.0 ? err / allowed : 0.0);
  }
  v.envelope_holds = v.envelope_ratio <= 1.0;

  const FixedPointRun b = run_tight(solver, y2, sigma, lambda, q_hat, max_outer);
  v.stability_lhs = norm(x_hat - b.iterates.back());
  v.stability_bound = h_norm / ((1.0 - q_hat) * lambda_eps) * norm(y1 - y2);
  v.stability_holds = v.stability_lhs <= v.stability_bound * (1.0 + tol) + a.slack + b.slack;
  return v;
}

std::string TheoryReport::to_json() const {
  nlohmann::ordered_json j;
  j["sigma"] = sigma;
  j["lambda"] = lambda;
  j["lambda_eps"] = lambda_eps;
  j["h_norm"] = h_norm;
  j["lip_data"] = lip_data;
  j["lip_mask_L"] = lip_mask_L;
  j["theorem3_bound"] = theorem3_bound;
  j["q_hat"] = q_hat;
  j["radius_r"] = radius_r;
  j["prop1"] = {{"min_eig", prop1_min_eig}, {"pass", prop1_pd}};
  j["lemma2"] = {{"worst_ratio", lemma2_worst_ratio}, {"pass", lemma2_holds}};
  j["range"] = {{"worst_ratio", range_worst_ratio}, {"pass", range_holds}};
  j["q_within_theorem3_bound"] = q_within_theorem3;
  j["theorem4"] = {{"applicable", theorem4.applicable},
                   {"envelope_ratio", theorem4.envelope_ratio},
                   {"envelope_pass", theorem4.envelope_holds},
                   {"stability_lhs", theorem4.stability_lhs},
                   {"stability_bound", theorem4.stability_bound},
                   {"stability_pass", theorem4.stability_holds}};
  return j.dump(2);
}

TheoryReport theory_report(const DealModel& model, const ForwardOperator& h, const Measurement& y,
                           double sigma, double lambda, const TheoryOptions& options) {
  const DealSolver solver(model, h);
  const Shape& shape = h.input_shape();
  TheoryReport r;
  r.sigma = sigma;
  r.lambda = lambda;
  r.lambda_eps = lambda_eps(h, model.w, floor_coefficient(lambda, model.eps_m()));
  r.h_norm = operator_norm(h);
  r.lip_data = r.h_norm / r.lambda_eps;
  r.lip_mask_L = mask_lipschitz_bound(model.mask, sigma, shape.height, shape.width);
  const double hty = norm(h.adjoint(y));
  r.radius_r = hty / r.lambda_eps;
  // M^2 is 2L-Lipschitz because M <= 1, and A depends on it through lambda.
  r.theorem3_bound = lambda * 2.0 * r.lip_mask_L * hty / (r.lambda_eps * r.lambda_eps);

  const Image x_zero(shape);
  const Mask m0 = solver.mask_at(x_zero, sigma);
  const Prop1Result p1 = check_prop1(h, model.w, m0, lambda);
  r.prop1_pd = p1.is_pd;
  r.prop1_min_eig = p1.min_eig;

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal;
  r.lemma2_holds = true;
  for (int t = 0; t < options.lemma2_pairs; ++t) {
    const Image x = random_in_ball(rng, shape, r.radius_r);
    Measurement y1 = y;
    Measurement y2 = y;
    for (double& v : y1.data()) v += options.perturbation * normal(rng);
    for (double& v : y2.data()) v += options.perturbation * normal(rng);
    const BoundCheck c = check_lemma2(solver, x, y1, y2, sigma, lambda, r.lambda_eps, r.h_norm);
    if (c.bound > 0.0) r.lemma2_worst_ratio = std::max(r.lemma2_worst_ratio, c.lhs / c.bound);
    r.lemma2_holds = r.lemma2_holds && c.holds(1e-6);
  }

  SolveConfig cfg;
  cfg.lambda_override = lambda;
  cfg.keep_iterates = true;
  cfg.eps_in = std::pow(kTightRelResidual * std::max(hty, 1e-300), 2);
  cfg.k_in = kTightMaxIter;
  SolveReport report;
  solver.reconstruct(y, sigma, cfg, report);
  r.range_worst_ratio = range_ratio(report.iterates, r.radius_r);
  r.range_holds = r.range_worst_ratio <= 1.0 + 1e-6;

  r.q_hat = std::max(estimate_contraction(solver, y, sigma, lambda, r.radius_r,
                                          options.contraction_trials, options.seed + 1),
                     path_contraction(report.iterates, 1e-8 * hty));
  r.q_within_theorem3 = r.q_hat <= r.theorem3_bound * (1.0 + 1e-9);

  Measurement y2 = y;
  for (double& v : y2.data()) v += options.perturbation * normal(rng);
  r.theorem4 = check_theorem4(solver, y, y2, sigma, lambda, r.q_hat, r.lambda_eps, r.h_norm,
                              options.tol);
  return r;
}

}  // namespace deal
