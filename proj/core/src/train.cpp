#include "deal/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

#include "deal/errors.hpp"
#include "deal/linop.hpp"
#include "deal/parallel.hpp"

namespace deal {

Measurement add_noise(const Image& x, double sigma_n, std::uint64_t seed) {
  if (!(sigma_n >= 0.0)) throw std::invalid_argument("add_noise: sigma_n must be >= 0");
  Measurement y = x;
  if (sigma_n == 0.0) return y;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const double s = sigma_n / kIntensityScale;
  for (double& v : y.data()) v += s * normal(rng);
  return y;
}

GradientBundle GradientBundle::zeros(const DealModel& model) {
  DealModel copy = model;
  GradientBundle g;
  for (const auto& p : copy.parameters()) {
    g.names.push_back(p.name);
    g.arrays.emplace_back(p.values.size(), 0.0);
  }
  return g;
}

GradientBundle GradientBundle::pack(const DealModel& model, const MultiConvGrad& w,
                                    const MaskNetGrad& mask, const std::vector<double>& kappa) {
  GradientBundle g = zeros(model);
  auto put = [&](const std::string& name, const std::vector<double>& v) {
    if (v.empty()) return;
    auto& dst = g.arrays[g.index(name)];
    if (dst.size() != v.size()) throw ShapeError("gradient size mismatch for " + name);
    dst = v;
  };
  for (int l = 0; l < 3; ++l) {
    put("w.conv" + std::to_string(l + 1), w.layers[l]);
    put("mask.w_mask.conv" + std::to_string(l + 1), mask.w_mask.layers[l]);
  }
  put("mask.mix1", mask.mix1);
  put("mask.mix2", mask.mix2);
  put("mask.phi1", mask.phi1);
  put("mask.phi2", mask.phi2);
  put("mask.phi3", mask.phi3);
  for (std::size_t c = 0; c < mask.scale_splines.size(); ++c)
    put("mask.scale." + std::to_string(c), mask.scale_splines[c]);
  put("kappa", kappa);
  return g;
}

GradientBundle& GradientBundle::operator+=(const GradientBundle& other) {
  if (other.arrays.size() != arrays.size()) throw ShapeError("gradient bundles differ in layout");
  for (std::size_t k = 0; k < arrays.size(); ++k) {
    if (other.arrays[k].size() != arrays[k].size())
      throw ShapeError("gradient size mismatch for " + names[k]);
    for (std::size_t i = 0; i < arrays[k].size(); ++i) arrays[k][i] += other.arrays[k][i];
  }
  return *this;
}

GradientBundle& GradientBundle::operator*=(double a) {
  for (auto& arr : arrays)
    for (double& v : arr) v *= a;
  return *this;
}

bool GradientBundle::all_finite() const {
  for (const auto& arr : arrays)
    if (!deal::all_finite(arr)) return false;
  return true;
}

std::size_t GradientBundle::index(const std::string& name) const {
  for (std::size_t k = 0; k < names.size(); ++k)
    if (names[k] == name) return k;
  throw std::out_of_range("no parameter named " + name);
}

double total_tv2(const DealModel& model) {
  double total = model.mask.phi1.tv2() + model.mask.phi2.tv2() + model.mask.phi3.tv2() +
                 model.kappa.tv2();
  for (const auto& s : model.mask.scale_splines) total += s.tv2();
  return total;
}

GradientBundle tv2_gradient(const DealModel& model, double gamma) {
  MaskNetGrad mg;
  mg.phi1 = model.mask.phi1.tv2_gradient();
  mg.phi2 = model.mask.phi2.tv2_gradient();
  mg.phi3 = model.mask.phi3.tv2_gradient();
  for (const auto& s : model.mask.scale_splines) mg.scale_splines.push_back(s.tv2_gradient());
  GradientBundle g = GradientBundle::pack(model, MultiConvGrad{}, mg, model.kappa.tv2_gradient());
  g *= gamma;
  return g;
}

LossTerms loss_eval(const Image& x_k, const Image& x_clean, const Mask& m_k, const Mask& m_prev,
                    const DealModel& model, double gamma) {
  require_shape(x_k, x_clean.shape(), "loss_eval clean image");
  require_shape(m_k, m_prev.shape(), "loss_eval previous mask");
  LossTerms t;
  const Tensor e = x_k - x_clean;
  t.term1 = dot(e, e);
  const Tensor dm = m_k - m_prev;
  t.term2 = gamma / model.num_filters() * dot(dm, dm);
  t.term3 = gamma * total_tv2(model);
  return t;
}

TrackedStep tracked_step(const DealSolver& solver, const Measurement& y, const Image& z,
                         double sigma, const CgOptions& options) {
  const DealModel& model = solver.model();
  TrackedStep s;
  s.z = z;
  s.sigma = sigma;
  s.lambda = model.lambda_for(sigma);
  s.m_z = mask_compute(model.mask, z, sigma, &solver.mask_plan(), &s.trace_z);
  s.x = z;
  s.stats = solver.solve(s.m_z, s.lambda, solver.op().adjoint(y), s.x, options);
  s.m_x = mask_compute(model.mask, s.x, sigma, &solver.mask_plan(), &s.trace_x);
  return s;
}

GradientBundle implicit_backward(const DealSolver& solver, const TrackedStep& step,
                                 const Image& upstream, const CgOptions& options) {
  const DealModel& model = solver.model();
  Image u(upstream.shape());
  solver.solve(step.m_z, step.lambda, upstream, u, options);

  // x depends on the parameters only through A, so d<g, x> = -u^T dA x with
  // u^T A x containing lambda <W u, m^2 (W x)>.
  const Features wu = solver.w_plan().forward(u);
  const Features wx = solver.w_plan().forward(step.x);
  Features m2wu = wu;
  Features m2wx = wx;
  Mask mask_up(step.m_z.shape());
  double phi = 0.0;
  for (std::size_t i = 0; i < wu.size(); ++i) {
    const double m = step.m_z[i];
    m2wu[i] *= m * m;
    m2wx[i] *= m * m;
    phi += m * m * wu[i] * wx[i];
    mask_up[i] = -step.lambda * 2.0 * m * wu[i] * wx[i];
  }

  MultiConvGrad wg = model.w.zero_gradient();
  if (step.lambda != 0.0) {
    model.w.accumulate_gradient(u, m2wx, wg);
    model.w.accumulate_gradient(step.x, m2wu, wg);
    for (auto& layer : wg.layers)
      for (double& v : layer) v *= -step.lambda;
  }

  MaskNetGrad mg = MaskNetGrad::zeros(model.mask);
  if (step.lambda != 0.0) mask_backward(model.mask, step.trace_z, mask_up, mg, false);

  std::vector<double> kg(model.kappa.num_knots(), 0.0);
  if (model.kappa(step.sigma) >= kKappaFloor) {
    const auto k = model.kappa.knot_weights(step.sigma);
    kg[k.lo] = -phi * k.w_lo;
    kg[k.lo + 1] = -phi * k.w_hi;
  }
  return GradientBundle::pack(model, wg, mg, kg);
}

SampleGradient sample_gradient(const DealSolver& solver, const TrackedStep& step,
                               const Image& clean, double gamma, double weight,
                               const CgOptions& options) {
  const DealModel& model = solver.model();
  SampleGradient out;
  const LossTerms t = loss_eval(step.x, clean, step.m_x, step.m_z, model, gamma);
  out.loss.term1 = weight * t.term1;
  out.loss.term2 = weight * t.term2;

  Image g = step.x - clean;
  g *= 2.0 * weight;
  Mask mask_up = step.m_x - step.m_z;
  mask_up *= 2.0 * gamma / model.num_filters() * weight;
  MaskNetGrad mg = MaskNetGrad::zeros(model.mask);
  g += mask_backward(model.mask, step.trace_x, mask_up, mg, true, &solver.mask_plan());

  out.grad = implicit_backward(solver, step, g, options);
  out.grad += GradientBundle::pack(model, MultiConvGrad{}, mg, {});
  return out;
}

Adam::Adam(const DealModel& model, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  const GradientBundle z = GradientBundle::zeros(model);
  m_ = z.arrays;
  v_ = z.arrays;
}

void Adam::step(DealModel& model, const GradientBundle& grad, double lr) {
  auto params = model.parameters();
  if (params.size() != grad.arrays.size()) throw ShapeError("Adam: gradient layout mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k].learnable) continue;
    auto& m = m_[k];
    auto& v = v_[k];
    const auto& g = grad.arrays[k];
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      params[k].values[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

double learning_rate(const std::vector<TrainPhase>& phases, int step) {
  int start = 0;
  for (const auto& p : phases) {
    if (step < start + p.steps) {
      const double t = static_cast<double>(step - start) / p.steps;
      return p.lr_end + 0.5 * (p.lr_start - p.lr_end) * (1.0 + std::cos(std::numbers::pi * t));
    }
    start += p.steps;
  }
  return phases.empty() ? 0.0 : phases.back().lr_end;
}

int TrainConfig::total_steps() const {
  int n = 0;
  for (const auto& p : phases) n += p.steps;
  return n;
}

void TrainConfig::validate() const {
  if (!(sigma_min >= 0.0) || sigma_max < sigma_min)
    throw std::invalid_argument("train: empty or negative sigma range");
  if (k_out_min < 1 || k_out_max < k_out_min)
    throw std::invalid_argument("train: invalid outer iteration range");
  if (patch_size < 1 || batch_size < 1) throw std::invalid_argument("train: invalid batch shape");
  if (!(gamma >= 0.0)) throw std::invalid_argument("train: gamma must be >= 0");
  if (k_in < 1 || !(eps_in > 0.0) || !(eps_out > 0.0))
    throw std::invalid_argument("train: invalid solver settings");
  for (const auto& p : phases)
    if (p.steps < 0 || p.lr_start < 0.0 || p.lr_end < 0.0)
      throw std::invalid_argument("train: invalid phase");
}

namespace {

Image crop(const Image& img, int top, int left, int size) {
  Image out(Shape{img.channels(), size, size});
  for (int c = 0; c < img.channels(); ++c)
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j) out.at(c, i, j) = img.at(c, top + i, left + j);
  return out;
}

SolveConfig training_solve(const TrainConfig& c, int k_out) {
  SolveConfig s;
  s.k_in = c.k_in;
  s.eps_in = c.eps_in;
  s.eps_out = c.eps_out;
  s.k_out = k_out;
  return s;
}

}  // namespace

double validation_psnr(const DealModel& model, const std::vector<Image>& images, double sigma,
                       std::uint64_t seed, const SolveConfig& config) {
  if (images.empty()) throw std::invalid_argument("validation_psnr: no images");
  std::vector<double> values(images.size());
  parallel_for(images.size(), [&](std::size_t i) {
    const ForwardOperator h = make_operator(OperatorSpec{}, images[i].shape());
    const Measurement y = add_noise(images[i], sigma, seed + i);
    SolveReport report;
    const Image x = deal_reconstruct(model, h, y, sigma, config, report);
    values[i] = psnr(x, images[i]);
  });
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

TrainResult train(DealModel model, const std::vector<Image>& dataset,
                  const std::vector<Image>& validation, const TrainConfig& config,
                  const std::function<void(const TrainLogRow&)>& on_step) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  for (const auto& img : dataset) {
    if (img.channels() != model.in_channels())
      throw ShapeError("train: image channel count does not match the model");
    if (img.height() < config.patch_size || img.width() < config.patch_size)
      throw ShapeError("train: image smaller than the patch size");
  }

  std::mt19937_64 rng(config.seed);
  Adam adam(model);
  std::vector<double> warm_w, warm_mask;
  const Shape patch{model.in_channels(), config.patch_size, config.patch_size};
  const ForwardOperator identity = make_operator(OperatorSpec{}, patch);
  const SolveConfig val_solve = training_solve(config, config.k_out_max);
  const CgOptions cg{config.eps_in, config.k_in};

  TrainResult result;
  result.best = model;
  result.best_psnr = -std::numeric_limits<double>::infinity();
  const int total = config.total_steps();
  const int b = config.batch_size;

  for (int step = 0; step < total; ++step) {
    struct Sample {
      Image clean;
      double sigma;
      int k_out;
      std::uint64_t noise_seed;
      SampleGradient grad;
    };
    std::vector<Sample> batch(b);
    for (auto& s : batch) {
      const auto& img =
          dataset[std::uniform_int_distribution<std::size_t>(0, dataset.size() - 1)(rng)];
      const int top = std::uniform_int_distribution<int>(0, img.height() - config.patch_size)(rng);
      const int left = std::uniform_int_distribution<int>(0, img.width() - config.patch_size)(rng);
      s.clean = crop(img, top, left, config.patch_size);
      s.sigma = std::uniform_real_distribution<double>(config.sigma_min, config.sigma_max)(rng);
      s.k_out = std::uniform_int_distribution<int>(config.k_out_min, config.k_out_max)(rng);
      s.noise_seed = rng();
    }

    const DealSolver solver(model, identity);
    parallel_for(batch.size(), [&](std::size_t i) {
      Sample& s = batch[i];
      const Measurement y = add_noise(s.clean, s.sigma, s.noise_seed);
      try {
        Image z(patch);
        if (s.k_out > 1) {
          SolveReport report;
          z = solver.reconstruct(y, s.sigma, training_solve(config, s.k_out - 1), report);
        }
        const TrackedStep t = tracked_step(solver, y, z, s.sigma, cg);
        s.grad = sample_gradient(solver, t, s.clean, config.gamma, 1.0 / b, cg);
      } catch (const SolverError& e) {
        throw SolverError("step " + std::to_string(step + 1) + ", sample " + std::to_string(i) +
                              ": " + e.what(),
                          i);
      }
    });

    GradientBundle grad = tv2_gradient(model, config.gamma);
    TrainLogRow row;
    row.step = step + 1;
    row.term3 = config.gamma * total_tv2(model);
    for (const auto& s : batch) {
      row.term1 += s.grad.loss.term1;
      row.term2 += s.grad.loss.term2;
      grad += s.grad.grad;
    }
    row.loss = row.term1 + row.term2 + row.term3;
    row.psnr_val = std::numeric_limits<double>::quiet_NaN();
    if (!std::isfinite(row.loss) || !grad.all_finite())
      throw std::runtime_error("non-finite loss at step " + std::to_string(step + 1));

    adam.step(model, grad, learning_rate(config.phases, step));
    model.project_constraints(1e-4, 30, &warm_w, &warm_mask);

    const bool last = step + 1 == total;
    if (!validation.empty() && config.validate_every > 0 &&
        ((step + 1) % config.validate_every == 0 || last)) {
      row.psnr_val = validation_psnr(model, validation, config.validation_sigma,
                                     config.seed ^ 0xa11ce, val_solve);
      if (row.psnr_val > result.best_psnr) {
        result.best_psnr = row.psnr_val;
        result.best_step = step + 1;
        result.best = model;
      }
    }
    result.log.push_back(row);
    if (on_step) on_step(row);
  }
  if (validation.empty() || total == 0) result.best = model;
  result.last = std::move(model);
  return result;
}

namespace {

// Dense matrix of a shift-invariant W on the grid of `shape`, built from
// the impulse response of each input channel.
Eigen::MatrixXd dense_filter_matrix(const MultiConv& w, const Shape& shape) {
  const int h = shape.height;
  const int wd = shape.width;
  const std::size_t plane = shape.plane();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(w.out_channels() * plane),
                    static_cast<Eigen::Index>(shape.size()));
  for (int i = 0; i < shape.channels; ++i) {
    Image e(shape);
    e.at(i, 0, 0) = 1.0;
    const Features r = w.forward(e);
    for (int p = 0; p < h; ++p)
      for (int q = 0; q < wd; ++q) {
        const Eigen::Index col = static_cast<Eigen::Index>(i * plane + p * wd + q);
        for (int c = 0; c < w.out_channels(); ++c)
          for (int a = 0; a < h; ++a)
            for (int bb = 0; bb < wd; ++bb)
              m(static_cast<Eigen::Index>(c * plane + a * wd + bb), col) =
                  r.at(c, (a - p + h) % h, (bb - q + wd) % wd);
      }
  }
  return m;
}

}  // namespace

double fd_loss(const DealModel& model, const FdInstance& inst, const Mask& m_prev) {
  const Shape& shape = inst.z.shape();
  const Mask m_z = mask_compute(model.mask, inst.z, inst.sigma);
  const double lambda = model.lambda_for(inst.sigma);
  const Eigen::MatrixXd wd = dense_filter_matrix(model.w, shape);
  const Eigen::VectorXd m2 =
      Eigen::Map<const Eigen::VectorXd>(m_z.data().data(), static_cast<Eigen::Index>(m_z.size()))
          .array()
          .square();
  const auto n = static_cast<Eigen::Index>(shape.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
  a.noalias() += lambda * wd.transpose() * m2.asDiagonal() * wd;
  const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(inst.y.data().data(), n);
  const Eigen::VectorXd xv = a.ldlt().solve(b);
  Image x(shape, std::vector<double>(xv.data(), xv.data() + n));
  const Mask m_x = mask_compute(model.mask, x, inst.sigma);
  return loss_eval(x, inst.clean, m_x, m_prev, model, inst.gamma).total();
}

std::string parameter_family(const std::string& name) {
  if (name.rfind("w.conv", 0) == 0) return "w";
  if (name.rfind("mask.w_mask.conv", 0) == 0) return "mask.w_mask";
  if (name.rfind("mask.mix", 0) == 0) return "mask.mix";
  if (name.rfind("mask.scale.", 0) == 0) return "mask.scale";
  return name;
}

std::vector<FdFamilyError> finite_diff_check(const DealModel& model, const FdInstance& inst,
                                             double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3))
    throw std::invalid_argument("finite_diff_check: eps must lie in [1e-7, 1e-3]");
  const ForwardOperator h = make_operator(OperatorSpec{}, inst.z.shape());
  const DealSolver solver(model, h);
  const double scale = std::max(norm(inst.y), 1e-300);
  const CgOptions tight{std::pow(1e-14 * scale, 2), 10000};
  const TrackedStep step = tracked_step(solver, inst.y, inst.z, inst.sigma, tight);
  GradientBundle analytic =
      sample_gradient(solver, step, inst.clean, inst.gamma, 1.0, tight).grad;
  analytic += tv2_gradient(model, inst.gamma);

  DealModel probe = model;
  auto params = probe.parameters();
  std::vector<FdFamilyError> out;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k].learnable) continue;
    const std::string family = parameter_family(params[k].name);
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const FdFamilyError& e) { return e.family == family; });
    if (it == out.end()) {
      out.push_back({family});
      it = out.end() - 1;
    }
    for (std::size_t i = 0; i < params[k].values.size(); ++i) {
      double& v = params[k].values[i];
      const double saved = v;
      v = saved + eps;
      const double up = fd_loss(probe, inst, step.m_z);
      v = saved - eps;
      const double down = fd_loss(probe, inst, step.m_z);
      v = saved;
      const double fd = (up - down) / (2.0 * eps);
      it->count += 1;
      it->max_abs_fd = std::max(it->max_abs_fd, std::abs(fd));
      it->max_abs_diff = std::max(it->max_abs_diff, std::abs(fd - analytic.arrays[k][i]));
    }
  }
  for (auto& e : out) e.rel_error = e.max_abs_fd > 0.0 ? e.max_abs_diff / e.max_abs_fd : e.max_abs_diff;
  return out;
}

}  // namespace deal
