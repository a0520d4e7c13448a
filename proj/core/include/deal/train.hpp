#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "deal/maskgen.hpp"
#include "deal/model.hpp"
#include "deal/solver.hpp"
#include "deal/tensor.hpp"

namespace deal {

/// y = x + (sigma_n / 255) n with n ~ N(0, I) drawn from mt19937_64(seed).
Measurement add_noise(const Image& x, double sigma_n, std::uint64_t seed);

/// Gradient arrays aligned one-to-one with DealModel::parameters().
struct GradientBundle {
  std::vector<std::string> names;
  std::vector<std::vector<double>> arrays;

  static GradientBundle zeros(const DealModel& model);
  /// Packs block gradients into the model's parameter order.
  static GradientBundle pack(const DealModel& model, const MultiConvGrad& w,
                             const MaskNetGrad& mask, const std::vector<double>& kappa);

  GradientBundle& operator+=(const GradientBundle& other);
  GradientBundle& operator*=(double a);
  bool all_finite() const;
  /// Index of the array with the given name; throws std::out_of_range.
  std::size_t index(const std::string& name) const;
};

struct LossTerms {
  double term1 = 0.0;  // ||x_K - x||^2
  double term2 = 0.0;  // gamma / N_C ||M_K - M_{K-1}||^2
  double term3 = 0.0;  // gamma * sum of TV2 over all splines
  double total() const { return term1 + term2 + term3; }
};

/// Sum of tv2() over phi1, phi2, phi3, every s_c and kappa.
double total_tv2(const DealModel& model);
/// gamma * d total_tv2 / d params.
GradientBundle tv2_gradient(const DealModel& model, double gamma);

LossTerms loss_eval(const Image& x_k, const Image& x_clean, const Mask& m_k, const Mask& m_prev,
                    const DealModel& model, double gamma);

/// The single tracked update x = T(z, y) and what the backward pass needs.
struct TrackedStep {
  Image z;
  Image x;
  Mask m_z;
  MaskTrace trace_z;
  Mask m_x;
  MaskTrace trace_x;
  double sigma = 0.0;
  double lambda = 0.0;
  CgStats stats;
};

/// Runs T(z, y) with traces kept for backpropagation.
TrackedStep tracked_step(const DealSolver& solver, const Measurement& y, const Image& z,
                         double sigma, const CgOptions& options);

/// Jacobian-free implicit backward: solves A u = upstream at the tracked
/// step and returns d<upstream, x>/dparams = -u^T (dA/dparams) x, with the
/// mask input z held fixed.
GradientBundle implicit_backward(const DealSolver& solver, const TrackedStep& step,
                                 const Image& upstream, const CgOptions& options);

/// Terms one and two of the loss for one sample, scaled by `weight`, and
/// their gradient (M_{K-1} = step.m_z is a constant). Term three is not
/// included.
struct SampleGradient {
  LossTerms loss;
  GradientBundle grad;
};
SampleGradient sample_gradient(const DealSolver& solver, const TrackedStep& step,
                               const Image& clean, double gamma, double weight,
                               const CgOptions& options);

/// Adam with bias correction.
class Adam {
 public:
  explicit Adam(const DealModel& model, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  /// Updates every learnable array of `model` in place.
  void step(DealModel& model, const GradientBundle& grad, double lr);
  int steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct TrainPhase {
  int steps = 0;
  double lr_start = 0.0;
  double lr_end = 0.0;
};

/// Cosine annealing within the phase containing `step` (0-based).
double learning_rate(const std::vector<TrainPhase>& phases, int step);

struct TrainLogRow {
  int step = 0;
  double loss = 0.0;
  double term1 = 0.0;
  double term2 = 0.0;
  double term3 = 0.0;
  /// NaN on steps without validation.
  double psnr_val = 0.0;
};

struct TrainConfig {
  double sigma_min = 0.0;
  double sigma_max = 50.0;
  int k_out_min = 15;
  int k_out_max = 60;
  int patch_size = 32;
  int batch_size = 4;
  double gamma = 1e-4;
  std::vector<TrainPhase> phases{{500, 5e-4, 4e-4}};
  int k_in = 50;
  double eps_in = 1e-4;
  double eps_out = 1e-4;
  int validate_every = 100;
  double validation_sigma = 25.0;
  std::uint64_t seed = 0;

  int total_steps() const;
  void validate() const;
};

struct TrainResult {
  DealModel best;
  DealModel last;
  std::vector<TrainLogRow> log;
  double best_psnr = 0.0;
  int best_step = 0;
};

/// Mean PSNR of the reconstructions of noisy copies of `images` at sigma.
double validation_psnr(const DealModel& model, const std::vector<Image>& images, double sigma,
                       std::uint64_t seed, const SolveConfig& config);

/// Desk-scale training loop. Throws std::runtime_error naming the step on
/// a non-finite loss. `on_step` sees every log row as it is produced.
TrainResult train(DealModel model, const std::vector<Image>& dataset,
                  const std::vector<Image>& validation, const TrainConfig& config,
                  const std::function<void(const TrainLogRow&)>& on_step = {});

/// Loss of one tracked step for a denoising instance with z and M_{K-1}
/// fixed, solved densely. Used as the finite-difference oracle.
struct FdInstance {
  Image clean;
  Measurement y;
  Image z;
  double sigma = 25.0;
  double gamma = 1e-4;
};
double fd_loss(const DealModel& model, const FdInstance& instance, const Mask& m_prev);

struct FdFamilyError {
  std::string family;
  std::size_t count = 0;
  double max_abs_fd = 0.0;
  double max_abs_diff = 0.0;
  /// max_abs_diff / max_abs_fd
  double rel_error = 0.0;
};

/// Central differences over every learnable scalar against the analytic
/// gradient (implicit backward, mask term and TV2), grouped by family.
std::vector<FdFamilyError> finite_diff_check(const DealModel& model, const FdInstance& instance,
                                             double eps);

/// Parameter family of a parameter name (e.g. "mask.scale.3" -> "mask.scale").
std::string parameter_family(const std::string& name);

}  // namespace deal
