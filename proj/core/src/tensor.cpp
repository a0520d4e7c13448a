#include "deal/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "deal/errors.hpp"

namespace deal {

std::string to_string(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" +
         std::to_string(s.width);
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.size(), fill) {
  if (shape.channels < 0 || shape.height < 0 || shape.width < 0)
    throw ShapeError("negative tensor dimension " + to_string(shape));
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.size())
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + to_string(shape_));
}

std::span<double> Tensor::plane(int c) {
  return std::span<double>(data_).subspan(c * shape_.plane(), shape_.plane());
}

std::span<const double> Tensor::plane(int c) const {
  return std::span<const double>(data_).subspan(c * shape_.plane(), shape_.plane());
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  require_shape(other, shape_, "tensor addition");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  require_shape(other, shape_, "tensor subtraction");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double a) {
  for (double& v : data_) v *= a;
  return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(double s, Tensor a) { return a *= s; }

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot product of vectors with different lengths");
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double dot(const Tensor& a, const Tensor& b) {
  require_shape(b, a.shape(), "dot product");
  return dot(a.data(), b.data());
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }
double norm(const Tensor& a) { return norm(a.data()); }

void axpy(double a, const Tensor& x, Tensor& y) {
  require_shape(x, y.shape(), "axpy");
  auto xs = x.data();
  auto ys = y.data();
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] += a * xs[i];
}

bool all_finite(std::span<const double> a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

double psnr(const Tensor& x, const Tensor& ref) {
  require_shape(x, ref.shape(), "psnr");
  if (x.empty()) throw ShapeError("psnr: empty image");
  double sse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sse += (x[i] - ref[i]) * (x[i] - ref[i]);
  const double mse = sse / static_cast<double>(x.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

void require_shape(const Tensor& t, const Shape& expected, std::string_view what) {
  if (t.shape() != expected)
    throw ShapeError(std::string(what) + ": expected shape " + to_string(expected) + ", got " +
                     to_string(t.shape()));
}

}  // namespace deal
