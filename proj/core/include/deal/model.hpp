#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deal/maskgen.hpp"
#include "deal/multiconv.hpp"
#include "deal/spline.hpp"

namespace deal {

/// Lower bound enforced on the knot values of kappa.
inline constexpr double kKappaFloor = 1e-6;

struct ModelConfig {
  int in_channels = 1;
  int num_filters = 8;
  int kernel_size = 9;
  double eps_m = 1e-3;
  bool zero_mean = true;
  std::uint64_t seed = 0;
};

/// A named view of one parameter array.
struct ParameterView {
  std::string name;
  std::vector<int> shape;
  std::span<double> values;
  /// False for the spectral scales, which are set by normalization only.
  bool learnable = true;
};

/// Every parameter of a DEAL model: the filter block W, the mask network
/// and the spline kappa with lambda = kappa(sigma).
struct DealModel {
  MultiConv w;
  MaskNet mask;
  LinearSpline kappa;

  static DealModel initialize(const ModelConfig& config);
  /// Same layout as initialize() with all convolution weights zero and no
  /// normalization; the starting point for loading stored parameters.
  static DealModel architecture(const ModelConfig& config);
  ModelConfig config() const;

  int in_channels() const { return w.in_channels(); }
  int num_filters() const { return w.out_channels(); }
  double eps_m() const { return mask.eps_m; }

  /// kappa(sigma), floored at kKappaFloor.
  double lambda_for(double sigma) const;

  /// All arrays in a fixed order; learnable ones first within each block.
  std::vector<ParameterView> parameters();
  std::vector<std::vector<double>> parameter_values() const;

  /// Spline projections, zero-mean projection, spectral normalization of
  /// W and W_mask, and the kappa floor. The warm-start vectors, when given,
  /// carry the power iterations across calls.
  void project_constraints(double norm_tol = 1e-8, int max_iter = 2000,
                           std::vector<double>* warm_w = nullptr,
                           std::vector<double>* warm_mask = nullptr);
  /// True when every constraint holds (||W|| and ||W_mask|| within tol of 1).
  bool feasible(double norm_tol = 1e-3) const;

  bool operator==(const DealModel&) const = default;
};

}  // namespace deal
