#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "deal/linop.hpp"
#include "deal/model.hpp"
#include "deal/multiconv.hpp"
#include "deal/tensor.hpp"

namespace deal {

struct CgOptions {
  /// Stop once ||A x - b||^2 <= eps.
  double eps = 1e-8;
  int max_iter = 1000;
  bool record_history = false;
};

struct CgStats {
  int iterations = 0;
  /// Final unsquared residual norm ||A x - b||.
  double residual = 0.0;
  bool converged = false;
  /// Residual norms, starting with the initial one (when requested).
  std::vector<double> residual_history;
};

using TensorMap = std::function<Tensor(const Tensor&)>;

/// Conjugate gradients for a symmetric positive-definite `apply`, starting
/// from x. Throws SolverError carrying `sample` on non-finite values or a
/// non-positive curvature.
CgStats cg_solve(const TensorMap& apply, const Tensor& b, Tensor& x, const CgOptions& options,
                 std::size_t sample = 0);

/// Independent CG solves for each sample, run in parallel; each sample
/// stops on its own. `apply(i, x)` applies the system of sample i.
std::vector<CgStats> cg_solve_batch(const std::function<Tensor(std::size_t, const Tensor&)>& apply,
                                    std::span<const Tensor> b, std::span<Tensor> x,
                                    const CgOptions& options);

/// H^T H x + lambda W^T (m^2 (W x)) on the direct spatial route.
Image normal_apply(const ForwardOperator& h, const MultiConv& w, const Mask& m, double lambda,
                   const Image& x);

/// A = H^T H + lambda W^T diag(m^2) W with W evaluated by FFT.
class NormalOperator {
 public:
  /// `plan` must outlive the operator. An empty mask stands for m = 1.
  NormalOperator(const ForwardOperator& h, const MultiConvPlan& plan, Mask mask, double lambda);

  Image apply(const Image& x) const;
  Image operator()(const Image& x) const { return apply(x); }
  double lambda() const { return lambda_; }

 private:
  const ForwardOperator* h_;
  const MultiConvPlan* plan_;
  std::vector<double> mask_sq_;
  double lambda_;
};

enum class InitMode { zero, adjoint, given };

struct SolveConfig {
  int k_in = 1000;
  int k_out = 1000;
  double eps_in = 1e-8;
  double eps_out = 1e-5;
  InitMode x0_mode = InitMode::zero;
  /// Initial iterate for InitMode::given.
  Image x0;
  std::optional<double> lambda_override;
  std::optional<double> sigma_override;
  /// Diagnostic mode: m = 1 at every step.
  bool freeze_mask = false;
  /// Keep every iterate x_0, x_1, ... in the report.
  bool keep_iterates = false;

  /// Throws std::invalid_argument when caps or tolerances are out of range.
  void validate() const;
};

struct IterationRecord {
  int k = 0;
  double rel_change = 0.0;
  int cg_iters = 0;
  double cg_residual = 0.0;
  /// NaN without ground truth.
  double psnr = 0.0;
};

struct SolveReport {
  std::vector<IterationRecord> records;
  bool converged = false;
  int outer_iterations = 0;
  double wall_seconds = 0.0;
  double sigma = 0.0;
  double lambda = 0.0;
  std::vector<Image> iterates;
};

struct StepResult {
  Image x;
  Mask mask;
  CgStats stats;
};

/// Precomputed FFT plans for one model on one image grid.
class DealSolver {
 public:
  DealSolver(const DealModel& model, const ForwardOperator& h);

  const DealModel& model() const { return *model_; }
  const ForwardOperator& op() const { return *h_; }
  const MultiConvPlan& w_plan() const { return w_plan_; }
  const MultiConvPlan& mask_plan() const { return mask_plan_; }

  /// Mask at z (or m = 1 when frozen).
  Mask mask_at(const Image& z, double sigma, bool freeze = false) const;

  /// T(z, y): solves A(z) x = H^T y by CG warm-started at z.
  StepResult step(const Measurement& y, const Image& z, double sigma, double lambda,
                  const SolveConfig& config) const;

  /// Solves A x = b for a given mask, warm-started at x.
  CgStats solve(const Mask& mask, double lambda, const Image& b, Image& x,
                const CgOptions& options) const;

  /// Iterates x_{k+1} = T(x_k, y) until the relative change drops to
  /// eps_out or k_out steps are taken. `on_iterate(k, x_k)` is called after
  /// every step.
  Image reconstruct(const Measurement& y, double sigma, const SolveConfig& config,
                    SolveReport& report, const Image* ground_truth = nullptr,
                    const std::function<void(int, const Image&)>& on_iterate = {}) const;

 private:
  const DealModel* model_;
  const ForwardOperator* h_;
  MultiConvPlan w_plan_;
  MultiConvPlan mask_plan_;
};

/// One refinement step T(z, y) with lambda given explicitly.
StepResult deal_step(const DealModel& model, const ForwardOperator& h, const Measurement& y,
                     const Image& z, double sigma, double lambda, const SolveConfig& config);

/// The full fixed-point iteration from the configured x0. lambda is
/// kappa(sigma) unless overridden.
Image deal_reconstruct(const DealModel& model, const ForwardOperator& h, const Measurement& y,
                       double sigma, const SolveConfig& config, SolveReport& report,
                       const Image* ground_truth = nullptr);

/// Row n of A^{-1} for H = identity, so that x[n] = <row, y> when x solves
/// A x = y with the given mask.
Image equivalent_row(const DealModel& model, const ForwardOperator& h, const Mask& mask,
                     double lambda, std::size_t n, const CgOptions& options = {1e-24, 5000});

}  // namespace deal
