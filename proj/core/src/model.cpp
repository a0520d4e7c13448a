#include "deal/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace deal {
namespace {

std::vector<int> conv_shape(const ConvStack& s) {
  return {s.out_channels, s.in_channels, s.size, s.size};
}

void add_block(std::vector<ParameterView>& out, const std::string& prefix, MultiConv& block) {
  for (int l = 0; l < 3; ++l)
    out.push_back({prefix + ".conv" + std::to_string(l + 1), conv_shape(block.layers[l]),
                   block.layers[l].weights});
  out.push_back({prefix + ".scale", {1}, std::span<double>(&block.scale, 1), false});
}

void add_spline(std::vector<ParameterView>& out, const std::string& name, LinearSpline& s) {
  out.push_back({name, {s.num_knots()}, s.values()});
}

}  // namespace

DealModel DealModel::initialize(const ModelConfig& c) {
  if (c.in_channels < 1 || c.num_filters < 1 || c.kernel_size < 1 || c.kernel_size % 2 == 0)
    throw std::invalid_argument("model config: channels >= 1 and an odd kernel size required");
  DealModel m;
  m.w = MultiConv::random(c.in_channels, c.num_filters, c.kernel_size, c.seed, c.zero_mean);
  m.mask = MaskNet::initialize(c.in_channels, c.num_filters, c.kernel_size, c.seed + 1, c.eps_m,
                               c.zero_mean);
  m.kappa = LinearSpline::sample(-1.0, 51.0, 52,
                                 [](double x) { return std::max(x, kKappaFloor); });
  return m;
}

DealModel DealModel::architecture(const ModelConfig& c) {
  if (c.in_channels < 1 || c.num_filters < 1 || c.kernel_size < 1 || c.kernel_size % 2 == 0)
    throw std::invalid_argument("model config: channels >= 1 and an odd kernel size required");
  const int widths[4] = {c.in_channels, 4 * c.in_channels, 8 * c.in_channels, c.num_filters};
  DealModel m;
  for (MultiConv* b : {&m.w, &m.mask.w_mask}) {
    for (int l = 0; l < 3; ++l) b->layers[l] = ConvStack::zeros(widths[l + 1], widths[l], c.kernel_size);
    b->zero_mean = c.zero_mean;
  }
  const MaskNet splines = MaskNet::initialize(1, 1, 3, 0, c.eps_m, c.zero_mean);
  m.mask.mix1 = ConvStack::zeros(c.num_filters, c.num_filters, 3);
  m.mask.mix2 = ConvStack::zeros(c.num_filters, c.num_filters, 3);
  m.mask.phi1 = splines.phi1;
  m.mask.phi2 = splines.phi2;
  m.mask.phi3 = splines.phi3;
  m.mask.scale_splines.assign(c.num_filters, splines.scale_splines.front());
  m.mask.eps_m = c.eps_m;
  m.kappa = LinearSpline::sample(-1.0, 51.0, 52,
                                 [](double x) { return std::max(x, kKappaFloor); });
  return m;
}

ModelConfig DealModel::config() const {
  ModelConfig c;
  c.in_channels = in_channels();
  c.num_filters = num_filters();
  c.kernel_size = w.kernel_size();
  c.eps_m = eps_m();
  c.zero_mean = w.zero_mean;
  return c;
}

double DealModel::lambda_for(double sigma) const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma))
    throw std::invalid_argument("sigma must be finite and >= 0");
  return std::max(kappa(sigma), kKappaFloor);
}

std::vector<ParameterView> DealModel::parameters() {
  std::vector<ParameterView> out;
  add_block(out, "w", w);
  add_block(out, "mask.w_mask", mask.w_mask);
  out.push_back({"mask.mix1", conv_shape(mask.mix1), mask.mix1.weights});
  out.push_back({"mask.mix2", conv_shape(mask.mix2), mask.mix2.weights});
  add_spline(out, "mask.phi1", mask.phi1);
  add_spline(out, "mask.phi2", mask.phi2);
  add_spline(out, "mask.phi3", mask.phi3);
  for (std::size_t c = 0; c < mask.scale_splines.size(); ++c)
    add_spline(out, "mask.scale." + std::to_string(c), mask.scale_splines[c]);
  add_spline(out, "kappa", kappa);
  return out;
}

std::vector<std::vector<double>> DealModel::parameter_values() const {
  DealModel copy = *this;
  std::vector<std::vector<double>> out;
  for (const auto& p : copy.parameters()) out.emplace_back(p.values.begin(), p.values.end());
  return out;
}

void DealModel::project_constraints(double norm_tol, int max_iter, std::vector<double>* warm_w,
                                    std::vector<double>* warm_mask) {
  w.project();
  w = mc_normalize(w, norm_tol, kNormalizationGrid, max_iter, warm_w);
  mask.project();
  mask.w_mask = mc_normalize(mask.w_mask, norm_tol, kNormalizationGrid, max_iter, warm_mask);
  for (double& v : kappa.values()) v = std::max(v, kKappaFloor);
}

bool DealModel::feasible(double norm_tol) const {
  for (const auto* s : {&mask.phi1, &mask.phi2, &mask.phi3})
    if (!s->feasible()) return false;
  for (double v : kappa.values())
    if (v < kKappaFloor) return false;
  for (const auto* b : {&w, &mask.w_mask}) {
    if (std::abs(mc_spectral_norm(*b, kNormalizationGrid, 1e-10, 5000) - 1.0) > norm_tol)
      return false;
  }
  return true;
}

}  // namespace deal
