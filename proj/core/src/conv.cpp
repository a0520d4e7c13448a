#include "deal/conv.hpp"

#include <cmath>
#include <numbers>

#include "deal/errors.hpp"

namespace deal {
namespace detail {
namespace {
int wrap(int i, int n) {
  i %= n;
  return i < 0 ? i + n : i;
}
}  // namespace

void add_shifted(std::span<double> dst, std::span<const double> src, int h, int w, int dy, int dx,
                 double a) {
  const int s = wrap(dx, w);
  for (int i = 0; i < h; ++i) {
    double* d = dst.data() + static_cast<std::size_t>(i) * w;
    const double* r = src.data() + static_cast<std::size_t>(wrap(i + dy, h)) * w;
    const int head = w - s;
    for (int j = 0; j < head; ++j) d[j] += a * r[j + s];
    for (int j = head; j < w; ++j) d[j] += a * r[j - head];
  }
}

double dot_shifted(std::span<const double> a, std::span<const double> b, int h, int w, int dy,
                   int dx) {
  const int s = wrap(dx, w);
  double total = 0.0;
  for (int i = 0; i < h; ++i) {
    const double* p = a.data() + static_cast<std::size_t>(i) * w;
    const double* r = b.data() + static_cast<std::size_t>(wrap(i + dy, h)) * w;
    const int head = w - s;
    for (int j = 0; j < head; ++j) total += p[j] * r[j + s];
    for (int j = head; j < w; ++j) total += p[j] * r[j - head];
  }
  return total;
}

}  // namespace detail

ConvStack ConvStack::zeros(int out_channels, int in_channels, int size) {
  ConvStack s;
  s.out_channels = out_channels;
  s.in_channels = in_channels;
  s.size = size;
  s.weights.assign(static_cast<std::size_t>(out_channels) * in_channels * size * size, 0.0);
  return s;
}

Tensor ConvStack::apply(const Tensor& x) const {
  if (x.channels() != in_channels)
    throw ShapeError("convolution expects " + std::to_string(in_channels) + " input channels, got " +
                     std::to_string(x.channels()));
  const int h = x.height();
  const int w = x.width();
  const int c = size / 2;
  Tensor y({out_channels, h, w});
  for (int o = 0; o < out_channels; ++o) {
    auto yo = y.plane(o);
    for (int i = 0; i < in_channels; ++i) {
      auto k = kernel(o, i);
      auto xi = x.plane(i);
      for (int u = 0; u < size; ++u)
        for (int v = 0; v < size; ++v) {
          const double a = k[u * size + v];
          if (a != 0.0) detail::add_shifted(yo, xi, h, w, u - c, v - c, a);
        }
    }
  }
  return y;
}

Tensor ConvStack::adjoint(const Tensor& g) const {
  if (g.channels() != out_channels)
    throw ShapeError("convolution adjoint expects " + std::to_string(out_channels) +
                     " channels, got " + std::to_string(g.channels()));
  const int h = g.height();
  const int w = g.width();
  const int c = size / 2;
  Tensor x({in_channels, h, w});
  for (int i = 0; i < in_channels; ++i) {
    auto xi = x.plane(i);
    for (int o = 0; o < out_channels; ++o) {
      auto k = kernel(o, i);
      auto go = g.plane(o);
      for (int u = 0; u < size; ++u)
        for (int v = 0; v < size; ++v) {
          const double a = k[u * size + v];
          if (a != 0.0) detail::add_shifted(xi, go, h, w, c - u, c - v, a);
        }
    }
  }
  return x;
}

void ConvStack::accumulate_gradient(const Tensor& upstream, const Tensor& input,
                                    std::span<double> grad) const {
  if (upstream.channels() != out_channels || input.channels() != in_channels ||
      upstream.height() != input.height() || upstream.width() != input.width())
    throw ShapeError("convolution gradient: upstream/input shapes do not match the kernel bank");
  if (grad.size() != weights.size()) throw ShapeError("convolution gradient buffer size mismatch");
  const int h = input.height();
  const int w = input.width();
  const int c = size / 2;
  for (int o = 0; o < out_channels; ++o)
    for (int i = 0; i < in_channels; ++i) {
      auto go = upstream.plane(o);
      auto xi = input.plane(i);
      double* gk = grad.data() + (static_cast<std::size_t>(o) * in_channels + i) * kernel_area();
      for (int u = 0; u < size; ++u)
        for (int v = 0; v < size; ++v)
          gk[u * size + v] += detail::dot_shifted(go, xi, h, w, u - c, v - c);
    }
}

std::vector<Complex> ConvStack::transfer(int h, int w) const {
  // Correlation with offset d has frequency response exp(+i w.d); place the
  // tap at -d and take the forward DFT.
  const Fft2d fft(h, w);
  const std::size_t half = fft.half_size();
  std::vector<Complex> out(static_cast<std::size_t>(out_channels) * in_channels * half);
  std::vector<double> embed(fft.real_size());
  const int c = size / 2;
  for (int o = 0; o < out_channels; ++o)
    for (int i = 0; i < in_channels; ++i) {
      std::fill(embed.begin(), embed.end(), 0.0);
      auto k = kernel(o, i);
      for (int u = 0; u < size; ++u)
        for (int v = 0; v < size; ++v) {
          int r = (-(u - c)) % h;
          if (r < 0) r += h;
          int s = (-(v - c)) % w;
          if (s < 0) s += w;
          embed[static_cast<std::size_t>(r) * w + s] += k[u * size + v];
        }
      fft.forward_real(embed, std::span<Complex>(out).subspan(
                                  (static_cast<std::size_t>(o) * in_channels + i) * half, half));
    }
  return out;
}

}  // namespace deal
