#include "deal/linop.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "deal/errors.hpp"
#include "deal/fft.hpp"

namespace deal {
namespace {

using nlohmann::json;

int wrap(int i, int n) {
  i %= n;
  return i < 0 ? i + n : i;
}

// Circular convolution of one plane with the operator kernel.
void convolve_plane(std::span<const double> in, std::span<double> out, int h, int w,
                    std::span<const double> kernel, int kh, int kw) {
  const int cu = kh / 2;
  const int cv = kw / 2;
  std::fill(out.begin(), out.end(), 0.0);
  for (int u = 0; u < kh; ++u) {
    for (int v = 0; v < kw; ++v) {
      const double k = kernel[u * kw + v];
      if (k == 0.0) continue;
      const int dy = u - cu;
      const int dx = v - cv;
      for (int i = 0; i < h; ++i) {
        const int si = wrap(i - dy, h);
        for (int j = 0; j < w; ++j) out[i * w + j] += k * in[si * w + wrap(j - dx, w)];
      }
    }
  }
}

// Adjoint of convolve_plane: correlation with the same kernel.
void correlate_plane(std::span<const double> in, std::span<double> out, int h, int w,
                     std::span<const double> kernel, int kh, int kw) {
  const int cu = kh / 2;
  const int cv = kw / 2;
  std::fill(out.begin(), out.end(), 0.0);
  for (int u = 0; u < kh; ++u) {
    for (int v = 0; v < kw; ++v) {
      const double k = kernel[u * kw + v];
      if (k == 0.0) continue;
      const int dy = u - cu;
      const int dx = v - cv;
      for (int i = 0; i < h; ++i) {
        const int si = wrap(i + dy, h);
        for (int j = 0; j < w; ++j) out[i * w + j] += k * in[si * w + wrap(j + dx, w)];
      }
    }
  }
}

}  // namespace

std::string_view to_string(OperatorKind kind) {
  switch (kind) {
    case OperatorKind::identity:
      return "identity";
    case OperatorKind::conv_downsample:
      return "conv_downsample";
    case OperatorKind::fourier_mask:
      return "fourier_mask";
  }
  return "unknown";
}

OperatorSpec parse_operator_spec(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("operator spec is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("kind"))
    throw FormatError("operator spec must be an object with a \"kind\" field");

  OperatorSpec spec;
  const std::string kind = doc.at("kind").get<std::string>();
  try {
    if (kind == "identity") {
      spec.kind = OperatorKind::identity;
    } else if (kind == "conv_downsample") {
      spec.kind = OperatorKind::conv_downsample;
      spec.kernel = doc.at("kernel").get<std::vector<std::vector<double>>>();
      spec.stride = doc.value("stride", 1);
    } else if (kind == "fourier_mask") {
      spec.kind = OperatorKind::fourier_mask;
      spec.mask = doc.at("mask").get<std::vector<std::vector<int>>>();
    } else {
      throw FormatError("unknown operator kind \"" + kind + "\"");
    }
  } catch (const json::exception& e) {
    throw FormatError("operator spec field error: " + std::string(e.what()));
  }
  return spec;
}

OperatorSpec load_operator_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open operator spec " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_operator_spec(buf.str());
}

std::string to_json(const OperatorSpec& spec) {
  json doc;
  doc["kind"] = std::string(to_string(spec.kind));
  if (spec.kind == OperatorKind::conv_downsample) {
    doc["kernel"] = spec.kernel;
    doc["stride"] = spec.stride;
  } else if (spec.kind == OperatorKind::fourier_mask) {
    doc["mask"] = spec.mask;
  }
  return doc.dump();
}

ForwardOperator make_operator(const OperatorSpec& spec, const Shape& input) {
  if (input.channels <= 0 || input.height <= 0 || input.width <= 0)
    throw ShapeError("operator input shape must be positive, got " + to_string(input));

  ForwardOperator op;
  op.kind_ = spec.kind;
  op.input_ = input;

  switch (spec.kind) {
    case OperatorKind::identity:
      op.output_ = input;
      break;

    case OperatorKind::conv_downsample: {
      if (spec.kernel.empty() || spec.kernel.front().empty())
        throw ShapeError("conv_downsample kernel must be nonempty");
      if (spec.stride < 1) throw ShapeError("conv_downsample stride must be >= 1");
      op.kernel_h_ = static_cast<int>(spec.kernel.size());
      op.kernel_w_ = static_cast<int>(spec.kernel.front().size());
      for (const auto& row : spec.kernel)
        if (static_cast<int>(row.size()) != op.kernel_w_)
          throw ShapeError("conv_downsample kernel rows have different lengths");
      if (op.kernel_h_ > input.height || op.kernel_w_ > input.width)
        throw ShapeError("conv_downsample kernel " + std::to_string(op.kernel_h_) + "x" +
                         std::to_string(op.kernel_w_) + " exceeds image grid " +
                         to_string(input));
      for (const auto& row : spec.kernel) op.kernel_.insert(op.kernel_.end(), row.begin(), row.end());
      op.stride_ = spec.stride;
      op.output_ = {input.channels, (input.height + spec.stride - 1) / spec.stride,
                    (input.width + spec.stride - 1) / spec.stride};
      break;
    }

    case OperatorKind::fourier_mask: {
      if (static_cast<int>(spec.mask.size()) != input.height)
        throw ShapeError("fourier_mask has " + std::to_string(spec.mask.size()) +
                         " rows, image grid has " + std::to_string(input.height));
      for (int i = 0; i < input.height; ++i) {
        if (static_cast<int>(spec.mask[i].size()) != input.width)
          throw ShapeError("fourier_mask row " + std::to_string(i) + " has " +
                           std::to_string(spec.mask[i].size()) + " entries, image grid has " +
                           std::to_string(input.width));
        for (int j = 0; j < input.width; ++j) {
          const int m = spec.mask[i][j];
          if (m != 0 && m != 1) throw ShapeError("fourier_mask entries must be 0 or 1");
          if (m == 1) op.sampled_.push_back(static_cast<std::size_t>(i) * input.width + j);
        }
      }
      if (op.sampled_.empty()) throw ShapeError("fourier_mask samples no frequency");
      op.output_ = {2 * input.channels, 1, static_cast<int>(op.sampled_.size())};
      break;
    }
  }
  return op;
}

Measurement ForwardOperator::apply(const Image& x) const {
  require_shape(x, input_, "ForwardOperator::apply");
  switch (kind_) {
    case OperatorKind::identity:
      return x;

    case OperatorKind::conv_downsample: {
      Measurement y(output_);
      const int h = input_.height;
      const int w = input_.width;
      std::vector<double> blurred(input_.plane());
      for (int c = 0; c < input_.channels; ++c) {
        convolve_plane(x.plane(c), blurred, h, w, kernel_, kernel_h_, kernel_w_);
        auto out = y.plane(c);
        for (int i = 0; i < output_.height; ++i)
          for (int j = 0; j < output_.width; ++j)
            out[i * output_.width + j] = blurred[(i * stride_) * w + j * stride_];
      }
      return y;
    }

    case OperatorKind::fourier_mask: {
      Measurement y(output_);
      const Fft2d fft(input_.height, input_.width);
      const double scale = 1.0 / std::sqrt(static_cast<double>(input_.plane()));
      std::vector<Complex> spatial(input_.plane());
      std::vector<Complex> spectrum(input_.plane());
      for (int c = 0; c < input_.channels; ++c) {
        auto xc = x.plane(c);
        for (std::size_t i = 0; i < spatial.size(); ++i) spatial[i] = xc[i];
        fft.forward(spatial, spectrum);
        auto re = y.plane(2 * c);
        auto im = y.plane(2 * c + 1);
        for (std::size_t k = 0; k < sampled_.size(); ++k) {
          re[k] = spectrum[sampled_[k]].real() * scale;
          im[k] = spectrum[sampled_[k]].imag() * scale;
        }
      }
      return y;
    }
  }
  return x;
}

Image ForwardOperator::adjoint(const Measurement& y) const {
  require_shape(y, output_, "ForwardOperator::adjoint");
  switch (kind_) {
    case OperatorKind::identity:
      return y;

    case OperatorKind::conv_downsample: {
      Image x(input_);
      const int h = input_.height;
      const int w = input_.width;
      std::vector<double> upsampled(input_.plane());
      for (int c = 0; c < input_.channels; ++c) {
        std::fill(upsampled.begin(), upsampled.end(), 0.0);
        auto in = y.plane(c);
        for (int i = 0; i < output_.height; ++i)
          for (int j = 0; j < output_.width; ++j)
            upsampled[(i * stride_) * w + j * stride_] = in[i * output_.width + j];
        correlate_plane(upsampled, x.plane(c), h, w, kernel_, kernel_h_, kernel_w_);
      }
      return x;
    }

    case OperatorKind::fourier_mask: {
      Image x(input_);
      const Fft2d fft(input_.height, input_.width);
      // fft.inverse divides by h*w; the unitary adjoint needs 1/sqrt(h*w).
      const double scale = std::sqrt(static_cast<double>(input_.plane()));
      std::vector<Complex> spectrum(input_.plane());
      std::vector<Complex> spatial(input_.plane());
      for (int c = 0; c < input_.channels; ++c) {
        std::fill(spectrum.begin(), spectrum.end(), Complex{});
        auto re = y.plane(2 * c);
        auto im = y.plane(2 * c + 1);
        for (std::size_t k = 0; k < sampled_.size(); ++k) spectrum[sampled_[k]] = {re[k], im[k]};
        fft.inverse(spectrum, spatial);
        auto xc = x.plane(c);
        for (std::size_t i = 0; i < spatial.size(); ++i) xc[i] = spatial[i].real() * scale;
      }
      return x;
    }
  }
  return y;
}

std::vector<std::vector<double>> gaussian_kernel(int size, double std_dev) {
  if (size < 1 || size % 2 == 0) throw ShapeError("gaussian kernel size must be odd and positive");
  if (!(std_dev > 0)) throw std::invalid_argument("gaussian kernel std must be positive");
  std::vector<std::vector<double>> k(size, std::vector<double>(size));
  const int c = size / 2;
  double total = 0.0;
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      const double r2 = (i - c) * (i - c) + (j - c) * (j - c);
      k[i][j] = std::exp(-r2 / (2.0 * std_dev * std_dev));
      total += k[i][j];
    }
  for (auto& row : k)
    for (double& v : row) v /= total;
  return k;
}

double estimate_spectral_norm(const VectorMap& apply, const VectorMap& adjoint, std::size_t dim,
                              double tol, int max_iter, std::vector<double>* start) {
  if (!(tol > 0)) throw std::invalid_argument("estimate_spectral_norm: tol must be positive");
  if (max_iter < 1) throw std::invalid_argument("estimate_spectral_norm: max_iter must be >= 1");

  std::vector<double> v;
  if (start != nullptr && start->size() == dim && norm(*start) > 0) {
    v = *start;
  } else {
    std::mt19937_64 rng(0x5eed);
    std::normal_distribution<double> normal;
    v.resize(dim);
    for (double& e : v) e = normal(rng);
  }
  double nv = norm(v);
  for (double& e : v) e /= nv;

  double sigma = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    std::vector<double> av = apply(v);
    const double estimate = norm(av);
    std::vector<double> g = adjoint(av);
    if (!all_finite(g) || !std::isfinite(estimate))
      throw SolverError("power iteration produced non-finite values", 0);
    const double ng = norm(g);
    if (ng == 0.0) {
      sigma = 0.0;
      break;
    }
    for (std::size_t i = 0; i < dim; ++i) v[i] = g[i] / ng;
    const bool settled = it > 0 && std::abs(estimate - sigma) <= tol * estimate;
    sigma = estimate;
    if (settled) break;
  }
  if (start != nullptr) *start = v;
  return sigma;
}

double operator_norm(const ForwardOperator& op, double tol, int max_iter) {
  const Shape in = op.input_shape();
  const Shape out = op.output_shape();
  VectorMap fwd = [&](std::span<const double> x) {
    return op.apply(Tensor(in, std::vector<double>(x.begin(), x.end()))).vector();
  };
  VectorMap adj = [&](std::span<const double> y) {
    return op.adjoint(Tensor(out, std::vector<double>(y.begin(), y.end()))).vector();
  };
  return estimate_spectral_norm(fwd, adj, op.input_dim(), tol, max_iter);
}

}  // namespace deal
