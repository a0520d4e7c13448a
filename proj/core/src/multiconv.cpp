#include "deal/multiconv.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "deal/errors.hpp"
#include "deal/linop.hpp"

namespace deal {

MultiConv MultiConv::random(int in_channels, int out_channels, int kernel_size, std::uint64_t seed,
                            bool zero_mean) {
  if (in_channels < 1 || out_channels < 1 || kernel_size < 1 || kernel_size % 2 == 0)
    throw std::invalid_argument("MultiConv::random: invalid channel counts or kernel size");
  MultiConv block;
  block.zero_mean = zero_mean;
  const int widths[4] = {in_channels, 4 * in_channels, 8 * in_channels, out_channels};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (int l = 0; l < 3; ++l) {
    block.layers[l] = ConvStack::zeros(widths[l + 1], widths[l], kernel_size);
    const double std_dev = 1.0 / std::sqrt(static_cast<double>(widths[l]) * kernel_size * kernel_size);
    for (double& w : block.layers[l].weights) w = std_dev * normal(rng);
  }
  block.project();
  return mc_normalize(block, 1e-8);
}

Tensor MultiConv::forward(const Tensor& x) const {
  if (x.channels() != in_channels())
    throw ShapeError("MultiConv::forward expects " + std::to_string(in_channels()) +
                     " channels, got " + std::to_string(x.channels()));
  Tensor y = layers[2].apply(layers[1].apply(layers[0].apply(x)));
  return y *= scale;
}

Tensor MultiConv::adjoint(const Tensor& u) const {
  if (u.channels() != out_channels())
    throw ShapeError("MultiConv::adjoint expects " + std::to_string(out_channels()) +
                     " channels, got " + std::to_string(u.channels()));
  Tensor x = layers[0].adjoint(layers[1].adjoint(layers[2].adjoint(u)));
  return x *= scale;
}

MultiConvGrad MultiConv::zero_gradient() const {
  MultiConvGrad g;
  for (int l = 0; l < 3; ++l) g.layers[l].assign(layers[l].weights.size(), 0.0);
  return g;
}

void MultiConv::accumulate_gradient(const Tensor& input, const Tensor& upstream,
                                    MultiConvGrad& grad) const {
  const Tensor h1 = layers[0].apply(input);
  const Tensor h2 = layers[1].apply(h1);
  Tensor g3 = upstream;
  g3 *= scale;
  layers[2].accumulate_gradient(g3, h2, grad.layers[2]);
  const Tensor g2 = layers[2].adjoint(g3);
  layers[1].accumulate_gradient(g2, h1, grad.layers[1]);
  const Tensor g1 = layers[1].adjoint(g2);
  layers[0].accumulate_gradient(g1, input, grad.layers[0]);
}

void MultiConv::project() {
  if (!zero_mean) return;
  ConvStack& first = layers[0];
  for (int o = 0; o < first.out_channels; ++o)
    for (int i = 0; i < first.in_channels; ++i) {
      auto k = first.kernel(o, i);
      double mean = 0.0;
      double peak = 0.0;
      for (double v : k) {
        mean += v;
        peak = std::max(peak, std::abs(v));
      }
      mean /= static_cast<double>(k.size());
      // Kernels centered up to rounding stay untouched.
      if (std::abs(mean) <= 4.0 * std::numeric_limits<double>::epsilon() * peak) continue;
      for (double& v : k) v -= mean;
    }
}

MultiConvPlan::MultiConvPlan(const MultiConv& block, int height, int width)
    : fft_(height, width), in_(block.in_channels()), out_(block.out_channels()) {
  const std::size_t half = fft_.half_size();
  std::array<std::vector<Complex>, 3> t;
  for (int l = 0; l < 3; ++l) t[l] = block.layers[l].transfer(height, width);
  const int n0 = block.layers[0].in_channels;
  const int n1 = block.layers[0].out_channels;
  const int n2 = block.layers[1].out_channels;
  const int n3 = block.layers[2].out_channels;

  transfer_.assign(static_cast<std::size_t>(n3) * n0 * half, Complex{});
  std::vector<Complex> a(static_cast<std::size_t>(n1) * n0);
  std::vector<Complex> b(static_cast<std::size_t>(n2) * n0);
  for (std::size_t f = 0; f < half; ++f) {
    for (int p = 0; p < n1; ++p)
      for (int i = 0; i < n0; ++i) a[p * n0 + i] = t[0][(p * n0 + i) * half + f];
    for (int q = 0; q < n2; ++q)
      for (int i = 0; i < n0; ++i) {
        Complex s{};
        for (int p = 0; p < n1; ++p) s += t[1][(q * n1 + p) * half + f] * a[p * n0 + i];
        b[q * n0 + i] = s;
      }
    for (int c = 0; c < n3; ++c)
      for (int i = 0; i < n0; ++i) {
        Complex s{};
        for (int q = 0; q < n2; ++q) s += t[2][(c * n2 + q) * half + f] * b[q * n0 + i];
        transfer_[(c * n0 + i) * half + f] = block.scale * s;
      }
  }
}

void MultiConvPlan::check(const Tensor& t, int channels, const char* what) const {
  if (t.channels() != channels || t.height() != height() || t.width() != width())
    throw ShapeError(std::string(what) + ": expected " +
                     to_string(Shape{channels, height(), width()}) + ", got " +
                     to_string(t.shape()));
}

Tensor MultiConvPlan::forward(const Tensor& x) const {
  check(x, in_, "MultiConvPlan::forward");
  const std::size_t half = fft_.half_size();
  std::vector<Complex> xs(in_ * half);
  for (int i = 0; i < in_; ++i)
    fft_.forward_real(x.plane(i), std::span<Complex>(xs).subspan(i * half, half));
  Tensor y({out_, height(), width()});
  std::vector<Complex> acc(half);
  for (int c = 0; c < out_; ++c) {
    std::fill(acc.begin(), acc.end(), Complex{});
    for (int i = 0; i < in_; ++i) {
      const Complex* t = transfer_.data() + (c * in_ + i) * half;
      const Complex* v = xs.data() + i * half;
      for (std::size_t f = 0; f < half; ++f) acc[f] += t[f] * v[f];
    }
    fft_.inverse_real(acc, y.plane(c));
  }
  return y;
}

Tensor MultiConvPlan::adjoint(const Tensor& u) const {
  check(u, out_, "MultiConvPlan::adjoint");
  const std::size_t half = fft_.half_size();
  std::vector<Complex> acc(in_ * half, Complex{});
  std::vector<Complex> us(half);
  for (int c = 0; c < out_; ++c) {
    fft_.forward_real(u.plane(c), us);
    for (int i = 0; i < in_; ++i) {
      const Complex* t = transfer_.data() + (c * in_ + i) * half;
      Complex* a = acc.data() + i * half;
      for (std::size_t f = 0; f < half; ++f) a[f] += std::conj(t[f]) * us[f];
    }
  }
  Tensor x({in_, height(), width()});
  for (int i = 0; i < in_; ++i)
    fft_.inverse_real(std::span<const Complex>(acc).subspan(i * half, half), x.plane(i));
  return x;
}

Tensor MultiConvPlan::gram(const Tensor& x) const {
  check(x, in_, "MultiConvPlan::gram");
  const std::size_t half = fft_.half_size();
  std::vector<Complex> xs(in_ * half);
  for (int i = 0; i < in_; ++i)
    fft_.forward_real(x.plane(i), std::span<Complex>(xs).subspan(i * half, half));
  std::vector<Complex> out(in_ * half, Complex{});
  for (std::size_t f = 0; f < half; ++f)
    for (int c = 0; c < out_; ++c) {
      Complex wx{};
      for (int i = 0; i < in_; ++i) wx += transfer_[(c * in_ + i) * half + f] * xs[i * half + f];
      for (int j = 0; j < in_; ++j) out[j * half + f] += std::conj(transfer_[(c * in_ + j) * half + f]) * wx;
    }
  Tensor y({in_, height(), width()});
  for (int i = 0; i < in_; ++i)
    fft_.inverse_real(std::span<const Complex>(out).subspan(i * half, half), y.plane(i));
  return y;
}

double MultiConvPlan::exact_norm() const {
  const std::size_t half = fft_.half_size();
  double best = 0.0;
  Eigen::MatrixXcd g(in_, in_);
  for (std::size_t f = 0; f < half; ++f) {
    g.setZero();
    for (int c = 0; c < out_; ++c)
      for (int i = 0; i < in_; ++i)
        for (int j = 0; j < in_; ++j)
          g(i, j) += std::conj(transfer_[(c * in_ + i) * half + f]) * transfer_[(c * in_ + j) * half + f];
    double top;
    if (in_ == 1) {
      top = g(0, 0).real();
    } else {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(g, Eigen::EigenvaluesOnly);
      top = es.eigenvalues().maxCoeff();
    }
    best = std::max(best, top);
  }
  return std::sqrt(best);
}

double mc_spectral_norm(const MultiConv& block, int grid, double tol, int max_iter,
                        std::vector<double>* warm_start) {
  const MultiConvPlan plan(block, grid, grid);
  const Shape in{block.in_channels(), grid, grid};
  const Shape out{block.out_channels(), grid, grid};
  VectorMap fwd = [&](std::span<const double> x) {
    return plan.forward(Tensor(in, std::vector<double>(x.begin(), x.end()))).vector();
  };
  VectorMap adj = [&](std::span<const double> u) {
    return plan.adjoint(Tensor(out, std::vector<double>(u.begin(), u.end()))).vector();
  };
  return estimate_spectral_norm(fwd, adj, in.size(), tol, max_iter, warm_start);
}

MultiConv mc_normalize(const MultiConv& block, double tol, int grid, int max_iter,
                       std::vector<double>* warm_start) {
  const double sigma = mc_spectral_norm(block, grid, tol, max_iter, warm_start);
  if (!std::isfinite(sigma) || sigma <= 0.0)
    throw SolverError("spectral normalization failed: norm estimate " + std::to_string(sigma), 0);
  MultiConv out = block;
  out.scale = block.scale / sigma;
  return out;
}

namespace {

// Full linear composition of correlation kernels: a (o x m x sa^2) after
// b (m x i x sb^2) gives o x i x (sa + sb - 1)^2.
ConvStack compose(const ConvStack& a, const ConvStack& b) {
  ConvStack out = ConvStack::zeros(a.out_channels, b.in_channels, a.size + b.size - 1);
  for (int o = 0; o < a.out_channels; ++o)
    for (int i = 0; i < b.in_channels; ++i) {
      auto dst = out.kernel(o, i);
      for (int m = 0; m < a.in_channels; ++m) {
        auto ka = a.kernel(o, m);
        auto kb = b.kernel(m, i);
        for (int ua = 0; ua < a.size; ++ua)
          for (int va = 0; va < a.size; ++va) {
            const double wa = ka[ua * a.size + va];
            if (wa == 0.0) continue;
            for (int ub = 0; ub < b.size; ++ub)
              for (int vb = 0; vb < b.size; ++vb)
                dst[(ua + ub) * out.size + (va + vb)] += wa * kb[ub * b.size + vb];
          }
      }
    }
  return out;
}

}  // namespace

Tensor mc_effective_kernels(const MultiConv& block) {
  const ConvStack k = compose(block.layers[2], compose(block.layers[1], block.layers[0]));
  const int n = k.size;
  Tensor out({k.out_channels * k.in_channels, n, n});
  // Correlation kernel K(d) becomes the convolution kernel (impulse
  // response) h(q) = K(-q).
  for (int c = 0; c < k.out_channels; ++c)
    for (int i = 0; i < k.in_channels; ++i) {
      auto src = k.kernel(c, i);
      auto dst = out.plane(c * k.in_channels + i);
      for (int u = 0; u < n; ++u)
        for (int v = 0; v < n; ++v)
          dst[u * n + v] = block.scale * src[(n - 1 - u) * n + (n - 1 - v)];
    }
  return out;
}

GramSpectrum mc_gram_spectrum(const MultiConv& block, int height, int width) {
  const int nin = block.in_channels();
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  GramSpectrum result;
  result.impulse = Tensor({nin * nin, height, width});
  for (int j = 0; j < nin; ++j) {
    Tensor delta({nin, height, width});
    delta.at(j, 0, 0) = 1.0;
    const Tensor r = block.adjoint(block.forward(delta));
    for (int i = 0; i < nin; ++i) {
      auto src = r.plane(i);
      std::copy(src.begin(), src.end(), result.impulse.plane(j * nin + i).begin());
    }
  }

  // Block circulant: G_ij(f) is the DFT of the (i <- j) impulse response.
  const Fft2d fft(height, width);
  std::vector<std::vector<Complex>> spectra(nin * nin, std::vector<Complex>(plane));
  std::vector<Complex> buf(plane);
  for (int p = 0; p < nin * nin; ++p) {
    auto src = result.impulse.plane(p);
    for (std::size_t k = 0; k < plane; ++k) buf[k] = src[k];
    fft.forward(buf, spectra[p]);
  }
  result.eigenvalues.reserve(nin * plane);
  if (nin == 1) result.eigenvalue_map.resize(plane);
  Eigen::MatrixXcd g(nin, nin);
  for (std::size_t f = 0; f < plane; ++f) {
    for (int i = 0; i < nin; ++i)
      for (int j = 0; j < nin; ++j) g(i, j) = spectra[j * nin + i][f];
    if (nin == 1) {
      const double ev = g(0, 0).real();
      result.eigenvalues.push_back(ev);
      result.eigenvalue_map[f] = ev;
    } else {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(g, Eigen::EigenvaluesOnly);
      for (int i = 0; i < nin; ++i) result.eigenvalues.push_back(es.eigenvalues()(i));
    }
  }
  std::sort(result.eigenvalues.begin(), result.eigenvalues.end());
  return result;
}

}  // namespace deal
