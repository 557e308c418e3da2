#include <gtest/gtest.h>
#include <png.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "deblur_forge/image_io.hpp"
#include "test_support.hpp"

using namespace dforge;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "deblur_forge_io_test";
  fs::create_directories(dir);
  return dir / name;
}

Image quantized(std::size_t h, std::size_t w, std::uint64_t seed, double levels) {
  Image img = dforge::testing::random_image(h, w, seed);
  for (double& v : img.pixels()) v = std::round(v * levels) / levels;
  return img;
}

}  // namespace

TEST(ImageIo, PngRoundTrip8Bit) {
  const Image img = quantized(13, 17, 1, 255.0);
  const fs::path p = scratch("rt8.png");
  save_image(img, p);
  EXPECT_EQ(load_image(p), img);
}

TEST(ImageIo, PngRoundTrip16Bit) {
  const Image img = quantized(9, 5, 2, 65535.0);
  const fs::path p = scratch("rt16.png");
  save_image(img, p, BitDepth::k16);
  EXPECT_EQ(load_image(p), img);
}

TEST(ImageIo, PgmRoundTrip) {
  const Image img8 = quantized(7, 11, 3, 255.0);
  save_image(img8, scratch("rt8.pgm"));
  EXPECT_EQ(load_image(scratch("rt8.pgm")), img8);
  const Image img16 = quantized(7, 11, 4, 65535.0);
  save_image(img16, scratch("rt16.pgm"), BitDepth::k16);
  EXPECT_EQ(load_image(scratch("rt16.pgm")), img16);
}

TEST(ImageIo, SaveClipsOutOfRange) {
  const fs::path p = scratch("clip.png");
  save_image(Image(1, 3, std::vector<double>{-0.5, 0.5, 1.7}), p);
  const Image back = load_image(p);
  EXPECT_EQ(back(0, 0), 0.0);
  EXPECT_EQ(back(0, 1), 128.0 / 255.0);
  EXPECT_EQ(back(0, 2), 1.0);
}

TEST(ImageIo, RgbPngUsesLumaWeights) {
  const std::size_t h = 4;
  const std::size_t w = 6;
  std::vector<unsigned char> rgb(h * w * 3);
  dforge::Xoshiro256 rng(5);
  for (auto& b : rgb) b = static_cast<unsigned char>(rng.below(256));
  png_image desc;
  std::memset(&desc, 0, sizeof desc);
  desc.version = PNG_IMAGE_VERSION;
  desc.width = w;
  desc.height = h;
  desc.format = PNG_FORMAT_RGB;
  const fs::path p = scratch("rgb.png");
  ASSERT_TRUE(png_image_write_to_file(&desc, p.c_str(), 0, rgb.data(), 0, nullptr));
  const Image img = load_image(p);
  ASSERT_EQ(img.height(), h);
  ASSERT_EQ(img.width(), w);
  for (std::size_t k = 0; k < h * w; ++k) {
    const double want =
        (0.299 * rgb[3 * k] + 0.587 * rgb[3 * k + 1] + 0.114 * rgb[3 * k + 2]) / 255.0;
    EXPECT_NEAR(img.pixels()[k], want, 1e-12);
  }
}

TEST(ImageIo, TruncatedPngIsAnError) {
  const fs::path p = scratch("whole.png");
  save_image(dforge::testing::random_image(32, 32, 6), p);
  std::ifstream in(p, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  const fs::path t = scratch("truncated.png");
  std::ofstream(t, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  EXPECT_THROW(load_image(t), ImageIoError);
}

TEST(ImageIo, TruncatedPgmIsAnError) {
  const fs::path t = scratch("truncated.pgm");
  std::ofstream(t, std::ios::binary) << "P5\n4 4\n255\nabc";
  EXPECT_THROW(load_image(t), ImageIoError);
}

TEST(ImageIo, UnsupportedAndMissing) {
  const fs::path t = scratch("text.png");
  std::ofstream(t) << "not an image";
  EXPECT_THROW(load_image(t), ImageIoError);
  EXPECT_THROW(load_image(scratch("does_not_exist.png")), ImageIoError);
  EXPECT_THROW(save_image(Image(2, 2), scratch("x.bmp")), ImageIoError);
}
