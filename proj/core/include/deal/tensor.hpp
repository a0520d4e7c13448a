#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace deal {

/// Channel-major shape of an image or feature map.
struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const { return plane() * channels; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

/// Dense real tensor of shape channels x height x width (row-major planes).
///
/// Used for images, measurements, filter responses and masks alike; the
/// aliases below only document intent.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  int channels() const { return shape_.channels; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& vector() const { return data_; }

  std::span<double> plane(int c);
  std::span<const double> plane(int c) const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(int c, int i, int j) {
    return data_[(static_cast<std::size_t>(c) * shape_.height + i) * shape_.width + j];
  }
  double at(int c, int i, int j) const {
    return data_[(static_cast<std::size_t>(c) * shape_.height + i) * shape_.width + j];
  }

  void fill(double v);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double a);

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

using Image = Tensor;
using Measurement = Tensor;
using Features = Tensor;
using Mask = Tensor;

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(double s, Tensor a);

double dot(std::span<const double> a, std::span<const double> b);
double dot(const Tensor& a, const Tensor& b);
double norm(std::span<const double> a);
double norm(const Tensor& a);
/// y += a * x
void axpy(double a, const Tensor& x, Tensor& y);
bool all_finite(std::span<const double> a);

/// Value returned by psnr() for identical images.
inline constexpr double kPsnrCap = 200.0;
/// 10 log10(1 / MSE) for intensities in [0, 1], capped at kPsnrCap.
double psnr(const Tensor& x, const Tensor& ref);

/// Throws ShapeError naming `what` when `t` does not have shape `expected`.
void require_shape(const Tensor& t, const Shape& expected, std::string_view what);

}  // namespace deal
