#pragma once

#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "deblur_forge/fft.hpp"
#include "deblur_forge/image.hpp"

namespace dforge {

/// Square convolution kernel with odd side length.
class Kernel2D {
 public:
  explicit Kernel2D(Image weights);
  Kernel2D(std::size_t size, std::vector<double> weights);

  static Kernel2D delta(std::size_t size);
  /// Uniform kernel of total mass 1.
  static Kernel2D box(std::size_t size);
  /// Sampled isotropic Gaussian, normalised to mass 1.
  static Kernel2D gaussian(std::size_t size, double sigma);

  std::size_t size() const { return weights_.height(); }
  std::size_t radius() const { return size() / 2; }
  double operator()(std::size_t u, std::size_t v) const { return weights_(u, v); }
  const Image& weights() const { return weights_; }

  Kernel2D flipped() const;
  double sum() const { return weights_.sum(); }

 private:
  Image weights_;
};

enum class ConvMode {
  valid,  ///< (m-p+1) x (n-p+1): kernel fully inside the image
  same,   ///< m x n, zero outside the image
};

// True convolution (kernel flipped). In valid mode
//   out(i, j) = sum_{u,v} k(u, v) * img(i + p-1-u, j + p-1-v)
// and same mode is the valid result shifted by the kernel radius.
Image conv_naive(const Image& img, const Kernel2D& k, ConvMode mode);
Image conv_fft(const Image& img, const Kernel2D& k, ConvMode mode);

// Cross-correlation (kernel not flipped); the adjoint of conv in same mode.
Image correlate_naive(const Image& img, const Kernel2D& k, ConvMode mode);
Image correlate_fft(const Image& img, const Kernel2D& k, ConvMode mode);

/// Valid-mode convolution for rectangular kernels of any size not larger
/// than the image, via FFT.
Image convolve_valid_fft(const Image& img, const Image& kernel);

/// Spectrum of a fixed image on a zero-padded power-of-two grid, for
/// repeated valid-mode products against small operands.
class SpectralImage {
 public:
  /// `max_kernel_h/w` bound the operands later passed in; the grid is
  /// sized so no product wraps around.
  SpectralImage(const Image& img, std::size_t max_kernel_h, std::size_t max_kernel_w);

  std::size_t height() const { return img_h_; }
  std::size_t width() const { return img_w_; }

  /// Same result as convolve_valid_fft(img, kernel).
  Image convolve_valid(const Image& kernel) const;

  /// out(a, b) = sum_{i,j} t(i, j) * img(i + a, j + b), for a template `t`
  /// no larger than the image; output is (m-th+1) x (n-tw+1).
  Image correlate_valid(const Image& t) const;

 private:
  std::size_t img_h_;
  std::size_t img_w_;
  ComplexGrid spectrum_;
};

void write_kernel(std::ostream& out, const Kernel2D& k);
/// Reads the text format written by write_kernel: a line holding p, then
/// p rows of p reals.
Kernel2D read_kernel(std::istream& in);

}  // namespace dforge
