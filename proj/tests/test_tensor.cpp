#include <cmath>
#include <complex>
#include <vector>

#include <gtest/gtest.h>

#include "deal/errors.hpp"
#include "deal/fft.hpp"
#include "deal/parallel.hpp"
#include "deal/tensor.hpp"
#include "oracles.hpp"

using namespace deal;

TEST(Tensor, ArithmeticAndNorms) {
  const Tensor a(Shape{1, 2, 2}, {1, 2, 3, 4});
  const Tensor b(Shape{1, 2, 2}, {4, 3, 2, 1});
  EXPECT_EQ((a + b), Tensor(Shape{1, 2, 2}, 5.0));
  EXPECT_DOUBLE_EQ(dot(a, b), 20.0);
  EXPECT_DOUBLE_EQ(norm(a), std::sqrt(30.0));
  Tensor c = b;
  axpy(2.0, a, c);
  EXPECT_EQ(c, Tensor(Shape{1, 2, 2}, std::vector<double>{6, 7, 8, 9}));
  EXPECT_THROW(a + Tensor(Shape{1, 1, 4}), ShapeError);
  EXPECT_THROW(Tensor(Shape{1, 2, 2}, std::vector<double>{1.0}), ShapeError);
}

TEST(Psnr, IdenticalImagesGiveCap) {
  const Tensor a = oracle::random_tensor(Shape{1, 4, 4}, 1);
  EXPECT_EQ(psnr(a, a), kPsnrCap);
}

TEST(Psnr, MseOnePercentIsTwentyDecibels) {
  const Tensor ref(Shape{1, 4, 4}, 0.5);
  const Tensor x(Shape{1, 4, 4}, 0.6);
  EXPECT_NEAR(psnr(x, ref), 20.0, 1e-10);
}

TEST(Psnr, ShapeMismatchThrows) {
  EXPECT_THROW(psnr(Tensor(Shape{1, 4, 4}), Tensor(Shape{1, 4, 5})), ShapeError);
}

TEST(Fft, RealForwardMatchesNaiveDft) {
  for (auto [h, w] : {std::pair{8, 8}, std::pair{5, 6}, std::pair{7, 3}}) {
    const Fft2d fft(h, w);
    const Tensor x = oracle::random_tensor(Shape{1, h, w}, h * 31 + w);
    std::vector<Complex> half(fft.half_size());
    fft.forward_real(x.data(), half);
    const auto full = oracle::dft2(std::vector<Complex>(x.data().begin(), x.data().end()), h, w);
    for (int k = 0; k < h; ++k)
      for (int l = 0; l <= w / 2; ++l)
        EXPECT_LT(std::abs(half[k * (w / 2 + 1) + l] - full[k * w + l]), 1e-11);
  }
}

TEST(Fft, ComplexForwardMatchesNaiveDftAndInverts) {
  const int h = 6;
  const int w = 4;
  const Fft2d fft(h, w);
  std::vector<Complex> x(h * w);
  const Tensor re = oracle::random_tensor(Shape{1, h, w}, 1);
  const Tensor im = oracle::random_tensor(Shape{1, h, w}, 2);
  for (int i = 0; i < h * w; ++i) x[i] = {re[i], im[i]};
  std::vector<Complex> y(h * w);
  fft.forward(x, y);
  const auto ref = oracle::dft2(x, h, w);
  for (int i = 0; i < h * w; ++i) EXPECT_LT(std::abs(y[i] - ref[i]), 1e-11);
  std::vector<Complex> back(h * w);
  fft.inverse(y, back);
  for (int i = 0; i < h * w; ++i) EXPECT_LT(std::abs(back[i] - x[i]), 1e-13);
}

TEST(Fft, RealRoundTrip) {
  const Fft2d fft(9, 10);
  const Tensor x = oracle::random_tensor(Shape{1, 9, 10}, 5);
  std::vector<Complex> half(fft.half_size());
  fft.forward_real(x.data(), half);
  std::vector<double> back(x.size());
  fft.inverse_real(half, back);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(back[i], x[i], 1e-13);
}

TEST(Parallel, VisitsEveryIndexAndRethrows) {
  std::vector<int> hits(100, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(10,
                            [](std::size_t i) {
                              if (i == 7) throw std::runtime_error("boom");
                            }),
               std::runtime_error);
}
