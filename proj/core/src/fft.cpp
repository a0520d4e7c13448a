#include "deal/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>

#include "deal/errors.hpp"

namespace deal {
namespace {

struct Plans {
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;
  fftw_plan c2c_fwd = nullptr;
  fftw_plan c2c_bwd = nullptr;
};

// The FFTW planner is not thread safe; execution with the new-array
// interface is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

const Plans& plans_for(int h, int w) {
  static std::map<std::pair<int, int>, Plans> cache;
  std::lock_guard lock(planner_mutex());
  auto it = cache.find({h, w});
  if (it != cache.end()) return it->second;

  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  std::vector<double> real(static_cast<std::size_t>(h) * w);
  std::vector<fftw_complex> half(static_cast<std::size_t>(h) * (w / 2 + 1));
  std::vector<fftw_complex> full_in(static_cast<std::size_t>(h) * w);
  std::vector<fftw_complex> full_out(static_cast<std::size_t>(h) * w);
  Plans p;
  p.r2c = fftw_plan_dft_r2c_2d(h, w, real.data(), half.data(), flags);
  p.c2r = fftw_plan_dft_c2r_2d(h, w, half.data(), real.data(), flags);
  p.c2c_fwd = fftw_plan_dft_2d(h, w, full_in.data(), full_out.data(), FFTW_FORWARD, flags);
  p.c2c_bwd = fftw_plan_dft_2d(h, w, full_in.data(), full_out.data(), FFTW_BACKWARD, flags);
  return cache.emplace(std::pair{h, w}, p).first->second;
}

fftw_complex* as_fftw(Complex* p) { return reinterpret_cast<fftw_complex*>(p); }

}  // namespace

Fft2d::Fft2d(int height, int width) : height_(height), width_(width) {
  if (height <= 0 || width <= 0) throw ShapeError("FFT grid must be positive");
  const Plans& p = plans_for(height, width);
  r2c_ = p.r2c;
  c2r_ = p.c2r;
  c2c_fwd_ = p.c2c_fwd;
  c2c_bwd_ = p.c2c_bwd;
}

void Fft2d::forward_real(std::span<const double> in, std::span<Complex> out) const {
  if (in.size() != real_size() || out.size() != half_size())
    throw ShapeError("forward_real: buffer size mismatch");
  // r2c does not modify its input.
  fftw_execute_dft_r2c(static_cast<fftw_plan>(r2c_), const_cast<double*>(in.data()),
                       as_fftw(out.data()));
}

void Fft2d::inverse_real(std::span<const Complex> in, std::span<double> out) const {
  if (in.size() != half_size() || out.size() != real_size())
    throw ShapeError("inverse_real: buffer size mismatch");
  // c2r destroys its input for multi-dimensional transforms.
  std::vector<Complex> scratch(in.begin(), in.end());
  fftw_execute_dft_c2r(static_cast<fftw_plan>(c2r_), as_fftw(scratch.data()), out.data());
  const double inv = 1.0 / static_cast<double>(real_size());
  for (double& v : out) v *= inv;
}

void Fft2d::forward(std::span<const Complex> in, std::span<Complex> out) const {
  if (in.size() != real_size() || out.size() != real_size())
    throw ShapeError("forward: buffer size mismatch");
  std::vector<Complex> scratch(in.begin(), in.end());
  fftw_execute_dft(static_cast<fftw_plan>(c2c_fwd_), as_fftw(scratch.data()), as_fftw(out.data()));
}

void Fft2d::inverse(std::span<const Complex> in, std::span<Complex> out) const {
  if (in.size() != real_size() || out.size() != real_size())
    throw ShapeError("inverse: buffer size mismatch");
  std::vector<Complex> scratch(in.begin(), in.end());
  fftw_execute_dft(static_cast<fftw_plan>(c2c_bwd_), as_fftw(scratch.data()), as_fftw(out.data()));
  const double inv = 1.0 / static_cast<double>(real_size());
  for (Complex& v : out) v *= inv;
}

}  // namespace deal
