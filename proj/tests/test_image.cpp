#include <gtest/gtest.h>

#include <cmath>

#include "deblur_forge/image.hpp"
#include "test_support.hpp"

using namespace dforge;
using dforge::testing::random_image;

TEST(Image, RejectsZeroDimensions) {
  EXPECT_THROW(Image(0, 3), std::invalid_argument);
  EXPECT_THROW(Image(2, 2, std::vector<double>(3)), std::invalid_argument);
}

TEST(Center, ConstantBecomesZero) {
  const Image c = center(Image(4, 4, 0.7));
  for (double v : c.pixels()) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(Center, ZeroMeanUnchanged) {
  Image img(2, 2, std::vector<double>{1.0, -1.0, 0.25, -0.25});
  EXPECT_EQ(center(img), img);
}

TEST(Center, TwoPixels) {
  const Image c = center(Image(1, 2, std::vector<double>{0.0, 1.0}));
  EXPECT_DOUBLE_EQ(c(0, 0), -0.5);
  EXPECT_DOUBLE_EQ(c(0, 1), 0.5);
}

TEST(FrobeniusNorm, Examples) {
  EXPECT_EQ(frobenius_norm(Image(3, 3)), 0.0);
  EXPECT_DOUBLE_EQ(frobenius_norm(Image(2, 2, std::vector<double>{3, 4, 0, 0})), 5.0);
  const Image img = random_image(8, 8, 1, -1.0, 1.0);
  double ss = 0.0;
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t c = 0; c < 8; ++c) ss += img(r, c) * img(r, c);
  EXPECT_NEAR(frobenius_norm(img), std::sqrt(ss), 1e-14);
}

TEST(SampleBicubic, ReproducesSamplesAtIntegers) {
  const Image img = random_image(7, 9, 2);
  EXPECT_EQ(sample_bicubic(img, 2.0, 3.0), img(2, 3));
  for (std::size_t r = 0; r < 7; ++r)
    for (std::size_t c = 0; c < 9; ++c)
      EXPECT_NEAR(sample_bicubic(img, double(r), double(c)), img(r, c), 1e-15);
}

TEST(SampleBicubic, ConstantEverywhere) {
  const Image img(6, 6, 0.37);
  for (double y : {-3.0, 0.0, 1.3, 2.71, 5.0, 9.5})
    for (double x : {-1.0, 0.4, 3.99, 5.0, 12.0}) EXPECT_NEAR(sample_bicubic(img, y, x), 0.37, 1e-14);
}

TEST(SampleBicubic, LinearRampAgainstHandWeights) {
  Image ramp(6, 8);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 8; ++c) ramp(r, c) = double(c);
  // Catmull-Rom taps at t = 0.5 for offsets -1, 0, 1, 2.
  const double t = 0.5;
  const double w[4] = {0.5 * (-t * t * t + 2 * t * t - t), 0.5 * (3 * t * t * t - 5 * t * t + 2),
                       0.5 * (-3 * t * t * t + 4 * t * t + t), 0.5 * (t * t * t - t * t)};
  const double oracle = w[0] * 1 + w[1] * 2 + w[2] * 3 + w[3] * 4;
  EXPECT_DOUBLE_EQ(oracle, 2.5);
  EXPECT_NEAR(sample_bicubic(ramp, 2.0, 2.5), oracle, 1e-14);
}

TEST(SampleBicubic, DerivativesMatchFiniteDifferences) {
  const Image img = random_image(10, 10, 3);
  const double h = 1e-6;
  for (auto [y, x] : {std::pair{3.3, 4.7}, {5.1, 2.2}, {6.6, 6.45}}) {
    const BicubicSample s = sample_bicubic_grad(img, y, x);
    EXPECT_NEAR(s.value, sample_bicubic(img, y, x), 1e-15);
    const double dy = (sample_bicubic(img, y + h, x) - sample_bicubic(img, y - h, x)) / (2 * h);
    const double dx = (sample_bicubic(img, y, x + h) - sample_bicubic(img, y, x - h)) / (2 * h);
    EXPECT_NEAR(s.d_dy, dy, 1e-7);
    EXPECT_NEAR(s.d_dx, dx, 1e-7);
  }
}

TEST(SampleBicubic, ClampedAxisHasZeroDerivative) {
  const Image img = random_image(6, 6, 4);
  const BicubicSample s = sample_bicubic_grad(img, -2.0, 2.5);
  EXPECT_EQ(s.d_dy, 0.0);
  EXPECT_NE(s.d_dx, 0.0);
}

TEST(ReflectPad, ZeroPadIsIdentity) {
  const Image img = random_image(5, 4, 5);
  EXPECT_EQ(reflect_pad(img, 0, 0, 0, 0), img);
}

TEST(ReflectPad, MirrorDefinition) {
  const Image img(1, 3, std::vector<double>{1.0, 2.0, 3.0});
  const Image out = reflect_pad(img, 0, 0, 2, 0);
  const std::vector<double> want{3.0, 2.0, 1.0, 2.0, 3.0};
  ASSERT_EQ(out.width(), 5u);
  for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(out(0, c), want[c]);
}

TEST(ReflectPad, InteriorAndIndexMapping) {
  const Image img = random_image(10, 10, 6);
  const Image out = reflect_pad(img, 3, 3, 3, 3);
  ASSERT_EQ(out.height(), 16u);
  EXPECT_EQ(crop(out, 3, 3, 10, 10), img);
  for (std::size_t r = 0; r < 16; ++r) {
    for (std::size_t c = 0; c < 16; ++c) {
      const int y = std::abs(int(r) - 3);
      const int x = std::abs(int(c) - 3);
      const int yy = y > 9 ? 18 - y : y;
      const int xx = x > 9 ? 18 - x : x;
      EXPECT_EQ(out(r, c), img(yy, xx));
    }
  }
}

TEST(ReflectPad, PadExceedsImage) {
  const Image img(4, 4);
  try {
    reflect_pad(img, 4, 0, 0, 0);
    FAIL() << "expected throw";
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "pad exceeds image");
  }
  EXPECT_THROW(reflect_pad(img, 0, 0, 0, 7), std::invalid_argument);
}

TEST(ReflectPad, PeriodicAgreesWhereStrictApplies) {
  const Image img = random_image(7, 5, 7);
  EXPECT_EQ(reflect_pad_periodic(img, 2, 6, 4, 1), reflect_pad(img, 2, 6, 4, 1));
  const Image big = reflect_pad_periodic(img, 20, 20, 20, 20);
  for (std::size_t r = 0; r < big.height(); ++r)
    for (std::size_t c = 0; c < big.width(); ++c)
      EXPECT_EQ(big(r, c), img(reflect_index(std::ptrdiff_t(r) - 20, 7), reflect_index(std::ptrdiff_t(c) - 20, 5)));
}

TEST(Crop, FullCropAndEmbedRoundTrip) {
  const Image img = random_image(6, 9, 8);
  EXPECT_EQ(crop(img, 0, 0, 6, 9), img);
  Image canvas(6, 9, -1.0);
  embed(canvas, crop(img, 2, 3, 3, 4), 2, 3);
  for (std::size_t r = 2; r < 5; ++r)
    for (std::size_t c = 3; c < 7; ++c) EXPECT_EQ(canvas(r, c), img(r, c));
  EXPECT_EQ(canvas(0, 0), -1.0);
}

TEST(Crop, AdjacentCropsTile) {
  const Image img = random_image(6, 10, 9);
  Image rebuilt(6, 10, std::nan(""));
  embed(rebuilt, crop(img, 0, 0, 6, 4), 0, 0);
  embed(rebuilt, crop(img, 0, 4, 6, 6), 0, 4);
  EXPECT_EQ(rebuilt, img);
}

TEST(Crop, OutOfBounds) {
  const Image img(4, 4);
  EXPECT_THROW(crop(img, 2, 0, 3, 1), std::out_of_range);
  EXPECT_THROW(crop(img, 0, 0, 0, 1), std::out_of_range);
}
