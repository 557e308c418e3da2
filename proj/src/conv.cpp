#include "deblur_forge/conv.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace dforge {

Kernel2D::Kernel2D(Image weights) : weights_(std::move(weights)) {
  if (weights_.height() != weights_.width() || weights_.height() % 2 == 0) {
    throw std::invalid_argument("kernel must be square with odd side, got " +
                                std::to_string(weights_.height()) + "x" +
                                std::to_string(weights_.width()));
  }
  for (double v : weights_.pixels()) {
    if (!std::isfinite(v)) throw std::invalid_argument("kernel weights must be finite");
  }
}

Kernel2D::Kernel2D(std::size_t size, std::vector<double> weights)
    : Kernel2D(Image(size, size, std::move(weights))) {}

Kernel2D Kernel2D::delta(std::size_t size) {
  Image w(size, size, 0.0);
  w(size / 2, size / 2) = 1.0;
  return Kernel2D(std::move(w));
}

Kernel2D Kernel2D::box(std::size_t size) {
  return Kernel2D(Image(size, size, 1.0 / static_cast<double>(size * size)));
}

Kernel2D Kernel2D::gaussian(std::size_t size, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian sigma must be positive");
  Image w(size, size);
  const double c = static_cast<double>(size / 2);
  for (std::size_t u = 0; u < size; ++u) {
    for (std::size_t v = 0; v < size; ++v) {
      const double dy = static_cast<double>(u) - c;
      const double dx = static_cast<double>(v) - c;
      w(u, v) = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
    }
  }
  w *= 1.0 / w.sum();
  return Kernel2D(std::move(w));
}

Kernel2D Kernel2D::flipped() const {
  const std::size_t p = size();
  Image w(p, p);
  for (std::size_t u = 0; u < p; ++u) {
    for (std::size_t v = 0; v < p; ++v) w(u, v) = weights_(p - 1 - u, p - 1 - v);
  }
  return Kernel2D(std::move(w));
}

namespace {

void check_valid_fit(const Image& img, std::size_t kh, std::size_t kw) {
  if (kh > img.height() || kw > img.width()) {
    throw std::invalid_argument("kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                                " larger than image " + std::to_string(img.height()) + "x" +
                                std::to_string(img.width()) + " in valid mode");
  }
}

// Full linear convolution of two real arrays, both transformed in a single
// complex FFT (a in the real part, b in the imaginary part).
Image full_conv_fft(const Image& a, const Image& b) {
  const std::size_t oh = a.height() + b.height() - 1;
  const std::size_t ow = a.width() + b.width() - 1;
  ComplexGrid z(next_pow2(oh), next_pow2(ow));
  for (std::size_t r = 0; r < a.height(); ++r) {
    for (std::size_t c = 0; c < a.width(); ++c) z(r, c).real(a(r, c));
  }
  for (std::size_t r = 0; r < b.height(); ++r) {
    for (std::size_t c = 0; c < b.width(); ++c) z(r, c).imag(b(r, c));
  }
  fft2d(z, false);
  ComplexGrid prod(z.height, z.width);
  for (std::size_t r = 0; r < z.height; ++r) {
    const std::size_t nr = (z.height - r) % z.height;
    for (std::size_t c = 0; c < z.width; ++c) {
      const std::size_t nc = (z.width - c) % z.width;
      const cplx zk = z(r, c);
      const cplx zn = std::conj(z(nr, nc));
      const cplx fa = 0.5 * (zk + zn);
      const cplx fb = cplx(0.0, -0.5) * (zk - zn);
      prod(r, c) = fa * fb;
    }
  }
  fft2d(prod, true);
  Image out(oh, ow);
  for (std::size_t r = 0; r < oh; ++r) {
    for (std::size_t c = 0; c < ow; ++c) out(r, c) = prod(r, c).real();
  }
  return out;
}

Image conv_fft_impl(const Image& img, const Image& k, ConvMode mode) {
  const std::size_t p = k.height();
  if (mode == ConvMode::valid) {
    check_valid_fit(img, k.height(), k.width());
    return crop(full_conv_fft(img, k), k.height() - 1, k.width() - 1,
                img.height() - k.height() + 1, img.width() - k.width() + 1);
  }
  return crop(full_conv_fft(img, k), p / 2, p / 2, img.height(), img.width());
}

}  // namespace

Image conv_naive(const Image& img, const Kernel2D& k, ConvMode mode) {
  const std::size_t p = k.size();
  const auto m = static_cast<std::ptrdiff_t>(img.height());
  const auto n = static_cast<std::ptrdiff_t>(img.width());
  // Offset of output pixel (0, 0) relative to the valid-mode origin.
  std::ptrdiff_t shift = 0;
  std::size_t oh = img.height();
  std::size_t ow = img.width();
  if (mode == ConvMode::valid) {
    check_valid_fit(img, p, p);
    oh = img.height() - p + 1;
    ow = img.width() - p + 1;
  } else {
    shift = -static_cast<std::ptrdiff_t>(k.radius());
  }
  const auto pm1 = static_cast<std::ptrdiff_t>(p) - 1;
  Image out(oh, ow);
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (std::size_t u = 0; u < p; ++u) {
        const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(i) + shift + pm1 - static_cast<std::ptrdiff_t>(u);
        if (y < 0 || y >= m) continue;
        for (std::size_t v = 0; v < p; ++v) {
          const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(j) + shift + pm1 - static_cast<std::ptrdiff_t>(v);
          if (x < 0 || x >= n) continue;
          acc += k(u, v) * img(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
        }
      }
      out(i, j) = acc;
    }
  }
  return out;
}

Image conv_fft(const Image& img, const Kernel2D& k, ConvMode mode) {
  return conv_fft_impl(img, k.weights(), mode);
}

Image correlate_naive(const Image& img, const Kernel2D& k, ConvMode mode) {
  return conv_naive(img, k.flipped(), mode);
}

Image correlate_fft(const Image& img, const Kernel2D& k, ConvMode mode) {
  return conv_fft_impl(img, k.flipped().weights(), mode);
}

Image convolve_valid_fft(const Image& img, const Image& kernel) {
  return conv_fft_impl(img, kernel, ConvMode::valid);
}

SpectralImage::SpectralImage(const Image& img, std::size_t max_kernel_h, std::size_t max_kernel_w)
    : img_h_(img.height()),
      img_w_(img.width()),
      spectrum_(next_pow2(img.height() + max_kernel_h - 1),
                next_pow2(img.width() + max_kernel_w - 1)) {
  for (std::size_t r = 0; r < img_h_; ++r) {
    for (std::size_t c = 0; c < img_w_; ++c) spectrum_(r, c) = img(r, c);
  }
  fft2d(spectrum_, false);
}

Image SpectralImage::convolve_valid(const Image& kernel) const {
  const std::size_t kh = kernel.height();
  const std::size_t kw = kernel.width();
  if (kh > img_h_ || kw > img_w_ || img_h_ + kh - 1 > spectrum_.height ||
      img_w_ + kw - 1 > spectrum_.width) {
    throw std::invalid_argument("kernel too large for this spectral image");
  }
  ComplexGrid g(spectrum_.height, spectrum_.width);
  for (std::size_t r = 0; r < kh; ++r) {
    for (std::size_t c = 0; c < kw; ++c) g(r, c) = kernel(r, c);
  }
  fft2d(g, false);
  for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] *= spectrum_.data[i];
  fft2d(g, true);
  Image out(img_h_ - kh + 1, img_w_ - kw + 1);
  for (std::size_t r = 0; r < out.height(); ++r) {
    for (std::size_t c = 0; c < out.width(); ++c) out(r, c) = g(r + kh - 1, c + kw - 1).real();
  }
  return out;
}

Image SpectralImage::correlate_valid(const Image& t) const {
  const std::size_t th = t.height();
  const std::size_t tw = t.width();
  if (th > img_h_ || tw > img_w_) throw std::invalid_argument("template larger than image");
  ComplexGrid g(spectrum_.height, spectrum_.width);
  for (std::size_t r = 0; r < th; ++r) {
    for (std::size_t c = 0; c < tw; ++c) g(r, c) = t(r, c);
  }
  fft2d(g, false);
  for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = spectrum_.data[i] * std::conj(g.data[i]);
  fft2d(g, true);
  Image out(img_h_ - th + 1, img_w_ - tw + 1);
  for (std::size_t r = 0; r < out.height(); ++r) {
    for (std::size_t c = 0; c < out.width(); ++c) out(r, c) = g(r, c).real();
  }
  return out;
}

void write_kernel(std::ostream& out, const Kernel2D& k) {
  out << k.size() << '\n';
  char buf[40];
  for (std::size_t u = 0; u < k.size(); ++u) {
    for (std::size_t v = 0; v < k.size(); ++v) {
      std::snprintf(buf, sizeof buf, "%.17g", k(u, v));
      out << (v ? " " : "") << buf;
    }
    out << '\n';
  }
}

Kernel2D read_kernel(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("kernel file: missing size line");
  std::istringstream head(line);
  long long p = 0;
  if (!(head >> p) || p < 1 || p % 2 == 0) {
    throw std::runtime_error("kernel file: size must be an odd positive integer, got '" + line + "'");
  }
  const auto n = static_cast<std::size_t>(p);
  std::vector<double> w;
  w.reserve(n * n);
  for (std::size_t u = 0; u < n; ++u) {
    if (!std::getline(in, line)) throw std::runtime_error("kernel file: truncated at row " + std::to_string(u));
    std::istringstream row(line);
    for (std::size_t v = 0; v < n; ++v) {
      std::string tok;
      if (!(row >> tok)) throw std::runtime_error("kernel file: short row " + std::to_string(u));
      std::size_t used = 0;
      double val = 0.0;
      try {
        val = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size() || !std::isfinite(val)) {
        throw std::runtime_error("kernel file: bad value '" + tok + "'");
      }
      w.push_back(val);
    }
  }
  return Kernel2D(n, std::move(w));
}

}  // namespace dforge
