#include "deblur_forge/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

namespace dforge {

Image::Image(std::size_t height, std::size_t width, double fill)
    : height_(height), width_(width), data_(height * width, fill) {
  if (height == 0 || width == 0) throw std::invalid_argument("image dimensions must be >= 1");
}

Image::Image(std::size_t height, std::size_t width, std::vector<double> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (height == 0 || width == 0) throw std::invalid_argument("image dimensions must be >= 1");
  if (data_.size() != height * width) {
    throw std::invalid_argument("image data length " + std::to_string(data_.size()) +
                                " does not match " + std::to_string(height) + "x" +
                                std::to_string(width));
  }
}

double Image::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

double Image::mean() const { return data_.empty() ? 0.0 : sum() / static_cast<double>(size()); }

Image& Image::operator+=(const Image& other) {
  if (!same_shape(other)) throw std::invalid_argument("image shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Image& Image::operator-=(const Image& other) {
  if (!same_shape(other)) throw std::invalid_argument("image shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Image& Image::operator+=(double value) {
  for (auto& v : data_) v += value;
  return *this;
}

Image& Image::operator*=(double value) {
  for (auto& v : data_) v *= value;
  return *this;
}

Image operator+(Image lhs, const Image& rhs) { return lhs += rhs; }
Image operator-(Image lhs, const Image& rhs) { return lhs -= rhs; }

Image center(const Image& img) {
  Image out = img;
  // Two-pass mean keeps the residual mean at rounding level.
  double m = out.mean();
  out += -m;
  m = out.mean();
  out += -m;
  return out;
}

double frobenius_norm(const Image& img) {
  double acc = 0.0;
  for (double v : img.pixels()) acc += v * v;
  return std::sqrt(acc);
}

double max_abs_diff(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("image shape mismatch");
  double worst = 0.0;
  auto pa = a.pixels();
  auto pb = b.pixels();
  for (std::size_t i = 0; i < pa.size(); ++i) worst = std::max(worst, std::abs(pa[i] - pb[i]));
  return worst;
}

namespace {

// Catmull-Rom weights for taps at offsets -1, 0, 1, 2 from floor(coord).
std::array<double, 4> cubic_weights(double t) {
  const double t2 = t * t;
  const double t3 = t2 * t;
  return {0.5 * (-t3 + 2.0 * t2 - t), 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
          0.5 * (-3.0 * t3 + 4.0 * t2 + t), 0.5 * (t3 - t2)};
}

std::array<double, 4> cubic_weight_derivs(double t) {
  const double t2 = t * t;
  return {0.5 * (-3.0 * t2 + 4.0 * t - 1.0), 0.5 * (9.0 * t2 - 10.0 * t),
          0.5 * (-9.0 * t2 + 8.0 * t + 1.0), 0.5 * (3.0 * t2 - 2.0 * t)};
}

struct AxisTaps {
  std::array<std::size_t, 4> idx;
  double t;
  bool clamped;
};

AxisTaps axis_taps(double coord, std::size_t n) {
  const double hi = static_cast<double>(n - 1);
  bool clamped = false;
  if (!(coord >= 0.0)) {
    coord = 0.0;
    clamped = true;
  } else if (coord > hi) {
    coord = hi;
    clamped = true;
  }
  const double base = std::floor(coord);
  AxisTaps taps{};
  taps.t = coord - base;
  taps.clamped = clamped;
  const auto b = static_cast<std::ptrdiff_t>(base);
  const auto last = static_cast<std::ptrdiff_t>(n) - 1;
  for (int k = 0; k < 4; ++k) {
    taps.idx[k] = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(b - 1 + k, 0, last));
  }
  return taps;
}

}  // namespace

double sample_bicubic(const Image& img, double y, double x) {
  const AxisTaps ty = axis_taps(y, img.height());
  const AxisTaps tx = axis_taps(x, img.width());
  const auto wy = cubic_weights(ty.t);
  const auto wx = cubic_weights(tx.t);
  double acc = 0.0;
  for (int a = 0; a < 4; ++a) {
    const auto r = img.row(ty.idx[a]);
    double row_acc = 0.0;
    for (int b = 0; b < 4; ++b) row_acc += wx[b] * r[tx.idx[b]];
    acc += wy[a] * row_acc;
  }
  return acc;
}

BicubicSample sample_bicubic_grad(const Image& img, double y, double x) {
  const AxisTaps ty = axis_taps(y, img.height());
  const AxisTaps tx = axis_taps(x, img.width());
  const auto wy = cubic_weights(ty.t);
  const auto wx = cubic_weights(tx.t);
  const auto dy = cubic_weight_derivs(ty.t);
  const auto dx = cubic_weight_derivs(tx.t);
  BicubicSample s;
  for (int a = 0; a < 4; ++a) {
    const auto r = img.row(ty.idx[a]);
    double v = 0.0;
    double vx = 0.0;
    for (int b = 0; b < 4; ++b) {
      const double p = r[tx.idx[b]];
      v += wx[b] * p;
      vx += dx[b] * p;
    }
    s.value += wy[a] * v;
    s.d_dy += dy[a] * v;
    s.d_dx += wy[a] * vx;
  }
  if (ty.clamped) s.d_dy = 0.0;
  if (tx.clamped) s.d_dx = 0.0;
  return s;
}

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  std::ptrdiff_t k = i % period;
  if (k < 0) k += period;
  if (k >= static_cast<std::ptrdiff_t>(n)) k = period - k;
  return static_cast<std::size_t>(k);
}

Image reflect_pad_periodic(const Image& img, std::size_t top, std::size_t bottom,
                           std::size_t left, std::size_t right) {
  const std::size_t h = img.height() + top + bottom;
  const std::size_t w = img.width() + left + right;
  std::vector<std::size_t> col_map(w);
  for (std::size_t c = 0; c < w; ++c) {
    col_map[c] = reflect_index(static_cast<std::ptrdiff_t>(c) - static_cast<std::ptrdiff_t>(left),
                               img.width());
  }
  Image out(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    const auto src = img.row(
        reflect_index(static_cast<std::ptrdiff_t>(r) - static_cast<std::ptrdiff_t>(top),
                      img.height()));
    auto dst = out.row(r);
    for (std::size_t c = 0; c < w; ++c) dst[c] = src[col_map[c]];
  }
  return out;
}

Image reflect_pad(const Image& img, std::size_t top, std::size_t bottom, std::size_t left,
                  std::size_t right) {
  if (top >= img.height() || bottom >= img.height() || left >= img.width() ||
      right >= img.width()) {
    throw std::invalid_argument("pad exceeds image");
  }
  return reflect_pad_periodic(img, top, bottom, left, right);
}

Image crop(const Image& img, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
  if (h == 0 || w == 0 || top + h > img.height() || left + w > img.width()) {
    throw std::out_of_range("crop rectangle (" + std::to_string(top) + "," + std::to_string(left) +
                            ") " + std::to_string(h) + "x" + std::to_string(w) +
                            " outside image " + std::to_string(img.height()) + "x" +
                            std::to_string(img.width()));
  }
  Image out(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    const auto src = img.row(top + r).subspan(left, w);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

void embed(Image& dst, const Image& patch, std::size_t top, std::size_t left) {
  if (top + patch.height() > dst.height() || left + patch.width() > dst.width()) {
    throw std::out_of_range("embed rectangle outside destination image");
  }
  for (std::size_t r = 0; r < patch.height(); ++r) {
    const auto src = patch.row(r);
    std::copy(src.begin(), src.end(), dst.row(top + r).begin() + static_cast<std::ptrdiff_t>(left));
  }
}

}  // namespace dforge
