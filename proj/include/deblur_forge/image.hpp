#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace dforge {

/// Grayscale raster of real intensities, stored row-major.
///
/// Nominal range is [0, 1]; intermediate results (centered images,
/// residuals) may leave it. Values are clipped only when saved.
class Image {
 public:
  Image() = default;
  Image(std::size_t height, std::size_t width, double fill = 0.0);
  Image(std::size_t height, std::size_t width, std::vector<double> data);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t row, std::size_t col) { return data_[row * width_ + col]; }
  double operator()(std::size_t row, std::size_t col) const { return data_[row * width_ + col]; }

  std::span<double> pixels() { return data_; }
  std::span<const double> pixels() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * width_, width_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * width_, width_}; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  double mean() const;
  double sum() const;

  Image& operator+=(const Image& other);
  Image& operator-=(const Image& other);
  Image& operator+=(double value);
  Image& operator*=(double value);

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> data_;
};

Image operator+(Image lhs, const Image& rhs);
Image operator-(Image lhs, const Image& rhs);

/// Subtracts the mean intensity from every pixel.
Image center(const Image& img);

double frobenius_norm(const Image& img);

/// Largest absolute elementwise difference. Images must share a shape.
double max_abs_diff(const Image& a, const Image& b);

/// Catmull-Rom (a = -0.5) bicubic interpolation at continuous (y, x).
///
/// Coordinates are clamped to [0, h-1] x [0, w-1]; neighbour taps outside
/// the raster replicate the border pixel.
double sample_bicubic(const Image& img, double y, double x);

struct BicubicSample {
  double value = 0.0;
  double d_dy = 0.0;  // zero along an axis whose coordinate was clamped
  double d_dx = 0.0;
};

/// Bicubic sample with its spatial derivatives (right-derivative on cell
/// boundaries).
BicubicSample sample_bicubic_grad(const Image& img, double y, double x);

/// Mirror padding without repeating the edge pixel ([c b | a b c]).
/// Throws std::invalid_argument("pad exceeds image") when a pad amount is
/// not smaller than the matching dimension.
Image reflect_pad(const Image& img, std::size_t top, std::size_t bottom, std::size_t left,
                  std::size_t right);

/// Same mirror convention as reflect_pad, but folds repeatedly so any pad
/// amount is accepted (period 2(n-1); a length-1 axis is replicated).
Image reflect_pad_periodic(const Image& img, std::size_t top, std::size_t bottom,
                           std::size_t left, std::size_t right);

/// Index into [0, n) for an arbitrary integer under mirror reflection.
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n);

Image crop(const Image& img, std::size_t top, std::size_t left, std::size_t h, std::size_t w);

/// Writes `patch` into `dst` with its top-left corner at (top, left).
void embed(Image& dst, const Image& patch, std::size_t top, std::size_t left);

}  // namespace dforge
