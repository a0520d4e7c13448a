#include "deal/solver.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "deal/errors.hpp"
#include "deal/parallel.hpp"

namespace deal {

namespace {

constexpr int kMaxRestarts = 4;

}  // namespace

CgStats cg_solve(const TensorMap& apply, const Tensor& b, Tensor& x, const CgOptions& options,
                 std::size_t sample) {
  require_shape(x, b.shape(), "cg_solve initial iterate");
  if (!(options.eps > 0.0)) throw std::invalid_argument("cg_solve: eps must be positive");
  if (options.max_iter < 1) throw std::invalid_argument("cg_solve: max_iter must be >= 1");

  CgStats stats;
  Tensor r = b - apply(x);
  double rr = dot(r, r);
  if (options.record_history) stats.residual_history.push_back(std::sqrt(rr));
  if (!std::isfinite(rr))
    throw SolverError("cg: non-finite residual in sample " + std::to_string(sample), sample);
  Tensor p = r;
  for (int restart = 0;; ++restart) {
    while (rr > options.eps && stats.iterations < options.max_iter) {
      const Tensor ap = apply(p);
      const double pap = dot(p, ap);
      if (!std::isfinite(pap) || pap <= 0.0)
        throw SolverError("cg: operator is not positive definite in sample " +
                              std::to_string(sample) + " (p'Ap = " + std::to_string(pap) + ")",
                          sample);
      const double alpha = rr / pap;
      axpy(alpha, p, x);
      axpy(-alpha, ap, r);
      const double rr_next = dot(r, r);
      if (!std::isfinite(rr_next))
        throw SolverError("cg: non-finite residual in sample " + std::to_string(sample), sample);
      ++stats.iterations;
      if (options.record_history) stats.residual_history.push_back(std::sqrt(rr_next));
      const double beta = rr_next / rr;
      rr = rr_next;
      p *= beta;
      p += r;
    }
    if (rr > options.eps || stats.iterations == 0 || restart == kMaxRestarts) break;
    // The recursive residual drifts from b - A x; restart from the true one.
    r = b - apply(x);
    rr = dot(r, r);
    if (rr <= options.eps || stats.iterations >= options.max_iter) break;
    p = r;
  }
  stats.residual = std::sqrt(rr);
  stats.converged = rr <= options.eps;
  return stats;
}

std::vector<CgStats> cg_solve_batch(const std::function<Tensor(std::size_t, const Tensor&)>& apply,
                                    std::span<const Tensor> b, std::span<Tensor> x,
                                    const CgOptions& options) {
  if (b.size() != x.size()) throw ShapeError("cg_solve_batch: batch sizes differ");
  std::vector<CgStats> stats(b.size());
  parallel_for(b.size(), [&](std::size_t i) {
    stats[i] = cg_solve([&](const Tensor& v) { return apply(i, v); }, b[i], x[i], options, i);
  });
  return stats;
}

namespace {

void check_lambda(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("lambda must be finite and >= 0");
}

void check_mask(const Mask& m, const Shape& image, int channels) {
  require_shape(m, Shape{channels, image.height, image.width}, "mask");
}

}  // namespace

Image normal_apply(const ForwardOperator& h, const MultiConv& w, const Mask& m, double lambda,
                   const Image& x) {
  check_lambda(lambda);
  require_shape(x, h.input_shape(), "normal_apply input");
  check_mask(m, x.shape(), w.out_channels());
  Image out = h.gram(x);
  if (lambda == 0.0) return out;
  Features wx = w.forward(x);
  auto f = wx.data();
  auto ms = m.data();
  for (std::size_t i = 0; i < f.size(); ++i) f[i] *= ms[i] * ms[i];
  axpy(lambda, w.adjoint(wx), out);
  return out;
}

NormalOperator::NormalOperator(const ForwardOperator& h, const MultiConvPlan& plan, Mask mask,
                               double lambda)
    : h_(&h), plan_(&plan), lambda_(lambda) {
  check_lambda(lambda);
  const Shape& in = h.input_shape();
  if (plan.in_channels() != in.channels || plan.height() != in.height || plan.width() != in.width)
    throw ShapeError("NormalOperator: filter plan does not match the image grid");
  if (!mask.empty()) {
    check_mask(mask, in, plan.out_channels());
    mask_sq_.resize(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) mask_sq_[i] = mask[i] * mask[i];
  }
}

Image NormalOperator::apply(const Image& x) const {
  Image out = h_->gram(x);
  if (lambda_ == 0.0) return out;
  Features wx = plan_->forward(x);
  if (!mask_sq_.empty()) {
    auto f = wx.data();
    for (std::size_t i = 0; i < f.size(); ++i) f[i] *= mask_sq_[i];
  }
  axpy(lambda_, plan_->adjoint(wx), out);
  return out;
}

void SolveConfig::validate() const {
  if (k_in < 1 || k_out < 1) throw std::invalid_argument("iteration caps must be >= 1");
  if (!(eps_in > 0.0) || !(eps_out > 0.0))
    throw std::invalid_argument("stop tolerances must be positive");
  if (lambda_override && !(*lambda_override >= 0.0))
    throw std::invalid_argument("lambda override must be >= 0");
  if (sigma_override && !(*sigma_override >= 0.0))
    throw std::invalid_argument("sigma override must be >= 0");
}

DealSolver::DealSolver(const DealModel& model, const ForwardOperator& h)
    : model_(&model),
      h_(&h),
      w_plan_(model.w, h.input_shape().height, h.input_shape().width),
      mask_plan_(model.mask.w_mask, h.input_shape().height, h.input_shape().width) {
  if (model.in_channels() != h.input_shape().channels)
    throw ShapeError("model expects " + std::to_string(model.in_channels()) +
                     " channels, operator input has " + std::to_string(h.input_shape().channels));
}

Mask DealSolver::mask_at(const Image& z, double sigma, bool freeze) const {
  if (freeze) {
    const Shape& s = h_->input_shape();
    return Mask(Shape{model_->num_filters(), s.height, s.width}, 1.0);
  }
  return mask_compute(model_->mask, z, sigma, &mask_plan_);
}

CgStats DealSolver::solve(const Mask& mask, double lambda, const Image& b, Image& x,
                          const CgOptions& options) const {
  const NormalOperator a(*h_, w_plan_, mask, lambda);
  return cg_solve([&](const Tensor& v) { return a.apply(v); }, b, x, options);
}

StepResult DealSolver::step(const Measurement& y, const Image& z, double sigma, double lambda,
                            const SolveConfig& config) const {
  require_shape(y, h_->output_shape(), "measurement");
  require_shape(z, h_->input_shape(), "current iterate");
  StepResult r;
  r.mask = mask_at(z, sigma, config.freeze_mask);
  r.x = z;
  r.stats = solve(r.mask, lambda, h_->adjoint(y), r.x, CgOptions{config.eps_in, config.k_in});
  return r;
}

Image DealSolver::reconstruct(const Measurement& y, double sigma, const SolveConfig& config,
                              SolveReport& report, const Image* ground_truth,
                              const std::function<void(int, const Image&)>& on_iterate) const {
  config.validate();
  require_shape(y, h_->output_shape(), "measurement");
  if (ground_truth != nullptr) require_shape(*ground_truth, h_->input_shape(), "ground truth");
  const auto start = std::chrono::steady_clock::now();

  report = SolveReport{};
  report.sigma = config.sigma_override.value_or(sigma);
  report.lambda = config.lambda_override.value_or(model_->lambda_for(report.sigma));

  Image x;
  switch (config.x0_mode) {
    case InitMode::zero: x = Image(h_->input_shape()); break;
    case InitMode::adjoint: x = h_->adjoint(y); break;
    case InitMode::given:
      require_shape(config.x0, h_->input_shape(), "initial iterate");
      x = config.x0;
      break;
  }
  if (config.keep_iterates) report.iterates.push_back(x);

  for (int k = 1; k <= config.k_out; ++k) {
    StepResult s;
    try {
      s = step(y, x, report.sigma, report.lambda, config);
    } catch (const SolverError& e) {
      throw SolverError("outer iteration " + std::to_string(k) + ": " + e.what(), e.sample());
    }
    IterationRecord rec;
    rec.k = k;
    rec.rel_change = norm(s.x - x) / std::max(norm(x), 1e-12);
    rec.cg_iters = s.stats.iterations;
    rec.cg_residual = s.stats.residual;
    rec.psnr = ground_truth ? psnr(s.x, *ground_truth) : std::numeric_limits<double>::quiet_NaN();
    report.records.push_back(rec);
    report.outer_iterations = k;
    x = std::move(s.x);
    if (config.keep_iterates) report.iterates.push_back(x);
    if (on_iterate) on_iterate(k, x);
    if (rec.rel_change <= config.eps_out) {
      report.converged = true;
      break;
    }
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return x;
}

StepResult deal_step(const DealModel& model, const ForwardOperator& h, const Measurement& y,
                     const Image& z, double sigma, double lambda, const SolveConfig& config) {
  check_lambda(lambda);
  return DealSolver(model, h).step(y, z, sigma, lambda, config);
}

Image deal_reconstruct(const DealModel& model, const ForwardOperator& h, const Measurement& y,
                       double sigma, const SolveConfig& config, SolveReport& report,
                       const Image* ground_truth) {
  return DealSolver(model, h).reconstruct(y, sigma, config, report, ground_truth);
}

Image equivalent_row(const DealModel& model, const ForwardOperator& h, const Mask& mask,
                     double lambda, std::size_t n, const CgOptions& options) {
  if (h.kind() != OperatorKind::identity)
    throw std::invalid_argument("equivalent_row supports the identity operator only");
  if (n >= h.input_dim()) throw std::out_of_range("equivalent_row: pixel index out of range");
  const DealSolver solver(model, h);
  Image e(h.input_shape());
  e[n] = 1.0;
  Image v(h.input_shape());
  solver.solve(mask, lambda, e, v, options);
  return v;
}

}  // namespace deal
