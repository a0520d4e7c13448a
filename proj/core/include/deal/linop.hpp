#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deal/tensor.hpp"

namespace deal {

enum class OperatorKind { identity, conv_downsample, fourier_mask };

std::string_view to_string(OperatorKind kind);

/// Declarative description of a forward operator, as read from an operator
/// spec file.
struct OperatorSpec {
  OperatorKind kind = OperatorKind::identity;
  /// conv_downsample: 2-D blur kernel, rows first.
  std::vector<std::vector<double>> kernel;
  /// conv_downsample: keep every stride-th pixel in both directions.
  int stride = 1;
  /// fourier_mask: binary sampling pattern over the full frequency grid
  /// (height x width, DC at index [0][0]).
  std::vector<std::vector<int>> mask;
};

/// Parses {"kind": ..., "kernel": [[...]], "stride": s, "mask": [[...]]}.
OperatorSpec parse_operator_spec(std::string_view json_text);
OperatorSpec load_operator_spec(const std::filesystem::path& path);
std::string to_json(const OperatorSpec& spec);

/// The acquisition operator H with its exact adjoint.
///
/// All convolutions are circular. conv_downsample computes
///   y(p) = sum_{u,v} k[u][v] x(p - (u - kh/2, v - kw/2))
/// followed by keeping pixels (i*s, j*s). fourier_mask applies the unitary
/// 2-D DFT per channel and keeps the sampled frequencies; the measurement
/// stores real parts in plane 2c and imaginary parts in plane 2c+1, each of
/// shape 1 x K for K retained frequencies.
///
/// Immutable after construction; safe for concurrent use.
class ForwardOperator {
 public:
  OperatorKind kind() const { return kind_; }
  const Shape& input_shape() const { return input_; }
  const Shape& output_shape() const { return output_; }
  std::size_t input_dim() const { return input_.size(); }
  std::size_t output_dim() const { return output_.size(); }

  Measurement apply(const Image& x) const;
  Image adjoint(const Measurement& y) const;
  /// H^T H x
  Image gram(const Image& x) const { return adjoint(apply(x)); }

  int stride() const { return stride_; }
  /// Flat (row-major) indices of the retained frequencies.
  std::span<const std::size_t> sampled_frequencies() const { return sampled_; }

 private:
  friend ForwardOperator make_operator(const OperatorSpec& spec, const Shape& input);

  OperatorKind kind_ = OperatorKind::identity;
  Shape input_;
  Shape output_;
  std::vector<double> kernel_;
  int kernel_h_ = 0;
  int kernel_w_ = 0;
  int stride_ = 1;
  std::vector<std::size_t> sampled_;
};

/// Instantiates H for images of shape `input`. Throws ShapeError when the
/// kernel or mask does not fit the grid.
ForwardOperator make_operator(const OperatorSpec& spec, const Shape& input);

/// Normalized 2-D Gaussian blur kernel of odd size.
std::vector<std::vector<double>> gaussian_kernel(int size, double std_dev);

using VectorMap = std::function<std::vector<double>(std::span<const double>)>;

/// Largest singular value of a linear map by power iteration on its Gram
/// operator. Stops once the estimate changes by less than tol (relative)
/// or after max_iter iterations. When `start` is non-null it provides the
/// initial vector and receives the final one (warm restarts); otherwise a
/// fixed pseudo-random vector is used. Throws SolverError on non-finite
/// values.
double estimate_spectral_norm(const VectorMap& apply, const VectorMap& adjoint, std::size_t dim,
                              double tol, int max_iter, std::vector<double>* start = nullptr);

/// ||H||_2 via estimate_spectral_norm.
double operator_norm(const ForwardOperator& op, double tol = 1e-10, int max_iter = 2000);

}  // namespace deal
