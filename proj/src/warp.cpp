#include "deblur_forge/warp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace dforge {
namespace {

double normalize(double idx, std::size_t n) {
  return n > 1 ? 2.0 * idx / static_cast<double>(n - 1) - 1.0 : 0.0;
}

double half_extent(std::size_t n) { return n > 1 ? 0.5 * static_cast<double>(n - 1) : 0.0; }

// powers[k] = x^k for k <= degree
std::vector<double> powers(double x, std::size_t degree) {
  std::vector<double> p(degree + 1, 1.0);
  for (std::size_t k = 1; k <= degree; ++k) p[k] = p[k - 1] * x;
  return p;
}

void fill_features(const std::vector<double>& pi, const std::vector<double>& pj,
                   std::size_t degree, std::vector<double>& out) {
  std::size_t k = 0;
  for (std::size_t t = 0; t <= degree; ++t) {
    for (std::size_t a = t + 1; a-- > 0;) out[k++] = pi[a] * pj[t - a];
  }
}

void require_warpable(const Image& img) {
  if (img.height() < 4 || img.width() < 4) {
    throw std::invalid_argument("warp requires an image of at least 4x4, got " +
                                std::to_string(img.height()) + "x" + std::to_string(img.width()));
  }
}

}  // namespace

std::vector<double> poly_features(double i, double j, std::size_t degree) {
  if (degree < 1) throw std::invalid_argument("polynomial degree must be >= 1");
  std::vector<double> f(poly_feature_count(degree));
  fill_features(powers(i, degree), powers(j, degree), degree, f);
  return f;
}

WarpMatrix::WarpMatrix(std::size_t degree) : degree_(degree) {
  if (degree < 1) throw std::invalid_argument("warp degree must be >= 1");
  coeffs_.assign(2 * terms(), 0.0);
  (*this)(0, 1) = 1.0;  // i' = i
  (*this)(1, 2) = 1.0;  // j' = j
}

WarpMatrix::WarpMatrix(std::size_t degree, std::vector<double> coeffs)
    : degree_(degree), coeffs_(std::move(coeffs)) {
  if (degree < 1) throw std::invalid_argument("warp degree must be >= 1");
  if (coeffs_.size() != 2 * terms()) {
    throw std::invalid_argument("warp of degree " + std::to_string(degree) + " needs " +
                                std::to_string(2 * terms()) + " coefficients, got " +
                                std::to_string(coeffs_.size()));
  }
  for (double v : coeffs_) {
    if (!std::isfinite(v)) throw std::invalid_argument("warp coefficients must be finite");
  }
}

WarpMatrix WarpMatrix::with_degree(std::size_t degree) const {
  WarpMatrix out(degree);
  const std::size_t keep = std::min(terms(), out.terms());
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t k = 0; k < out.terms(); ++k) out(r, k) = k < keep ? (*this)(r, k) : 0.0;
  }
  return out;
}

std::pair<double, double> WarpMatrix::map(double i, double j, std::size_t h, std::size_t w) const {
  const auto f = poly_features(normalize(i, h), normalize(j, w), degree_);
  double yi = 0.0;
  double xj = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) {
    yi += (*this)(0, k) * f[k];
    xj += (*this)(1, k) * f[k];
  }
  return {(yi + 1.0) * half_extent(h), (xj + 1.0) * half_extent(w)};
}

Image warp_image(const Image& img, const WarpMatrix& w) {
  require_warpable(img);
  const std::size_t h = img.height();
  const std::size_t wd = img.width();
  const std::size_t deg = w.degree();
  const std::size_t K = w.terms();
  std::vector<std::vector<double>> col_pows(wd);
  for (std::size_t c = 0; c < wd; ++c) col_pows[c] = powers(normalize(static_cast<double>(c), wd), deg);
  std::vector<double> f(K);
  Image out(h, wd);
  for (std::size_t r = 0; r < h; ++r) {
    const auto row_pows = powers(normalize(static_cast<double>(r), h), deg);
    for (std::size_t c = 0; c < wd; ++c) {
      fill_features(row_pows, col_pows[c], deg, f);
      double yi = 0.0;
      double xj = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        yi += w(0, k) * f[k];
        xj += w(1, k) * f[k];
      }
      out(r, c) = sample_bicubic(img, (yi + 1.0) * half_extent(h), (xj + 1.0) * half_extent(wd));
    }
  }
  return out;
}

LossAndGrad warp_window_loss(const WarpMatrix& w, const Image& moving, const Image& target,
                             std::size_t top, std::size_t left, bool centered) {
  require_warpable(moving);
  if (top + target.height() > moving.height() || left + target.width() > moving.width()) {
    throw std::invalid_argument("warp loss window " + std::to_string(target.height()) + "x" +
                                std::to_string(target.width()) + " at (" + std::to_string(top) +
                                "," + std::to_string(left) + ") does not fit image " +
                                std::to_string(moving.height()) + "x" +
                                std::to_string(moving.width()));
  }
  const std::size_t h = moving.height();
  const std::size_t wd = moving.width();
  const std::size_t th = target.height();
  const std::size_t tw = target.width();
  const std::size_t deg = w.degree();
  const std::size_t K = w.terms();
  const double sy = half_extent(h);
  const double sx = half_extent(wd);
  const double count = static_cast<double>(th * tw);

  std::vector<std::vector<double>> col_pows(tw);
  for (std::size_t c = 0; c < tw; ++c) {
    col_pows[c] = powers(normalize(static_cast<double>(left + c), wd), deg);
  }

  // Residuals and spatial derivatives of the warped image over the window.
  Image resid(th, tw);
  Image dy(th, tw);
  Image dx(th, tw);
  std::vector<double> f(K);
  for (std::size_t r = 0; r < th; ++r) {
    const auto row_pows = powers(normalize(static_cast<double>(top + r), h), deg);
    for (std::size_t c = 0; c < tw; ++c) {
      fill_features(row_pows, col_pows[c], deg, f);
      double yi = 0.0;
      double xj = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        yi += w(0, k) * f[k];
        xj += w(1, k) * f[k];
      }
      const BicubicSample s = sample_bicubic_grad(moving, (yi + 1.0) * sy, (xj + 1.0) * sx);
      resid(r, c) = s.value - target(r, c);
      dy(r, c) = s.d_dy * sy;
      dx(r, c) = s.d_dx * sx;
    }
  }
  if (centered) resid = center(resid);

  LossAndGrad out;
  out.grad.assign(2 * K, 0.0);
  double acc = 0.0;
  for (std::size_t r = 0; r < th; ++r) {
    const auto row_pows = powers(normalize(static_cast<double>(top + r), h), deg);
    for (std::size_t c = 0; c < tw; ++c) {
      const double e = resid(r, c);
      acc += e * e;
      // The mean-removal term contributes nothing: centred residuals sum to 0.
      const double ge = 2.0 * e / count;
      fill_features(row_pows, col_pows[c], deg, f);
      const double gy = ge * dy(r, c);
      const double gx = ge * dx(r, c);
      for (std::size_t k = 0; k < K; ++k) {
        out.grad[k] += gy * f[k];
        out.grad[K + k] += gx * f[k];
      }
    }
  }
  out.loss = acc / count;
  return out;
}

LossAndGrad warping_loss(const WarpMatrix& w, const Image& blurry, const Image& sharp) {
  if (!blurry.same_shape(sharp)) {
    throw std::invalid_argument("warping loss: blurry " + std::to_string(blurry.height()) + "x" +
                                std::to_string(blurry.width()) + " vs sharp " +
                                std::to_string(sharp.height()) + "x" +
                                std::to_string(sharp.width()));
  }
  return warp_window_loss(w, blurry, sharp, 0, 0, true);
}

OptimProblem make_warp_problem(const Image& moving, const Image& target, std::size_t degree,
                               std::size_t top, std::size_t left, bool centered) {
  OptimProblem problem;
  problem.dim = 2 * poly_feature_count(degree);
  problem.eval = [&moving, &target, degree, top, left, centered](std::span<const double> x,
                                                                  std::span<double> g) {
    const WarpMatrix w(degree, std::vector<double>(x.begin(), x.end()));
    LossAndGrad lg = warp_window_loss(w, moving, target, top, left, centered);
    std::copy(lg.grad.begin(), lg.grad.end(), g.begin());
    return lg.loss;
  };
  return problem;
}

WarpFit fit_warp(const Image& blurry, const Image& sharp, std::size_t degree,
                 const std::optional<WarpMatrix>& init, const LbfgsConfig& config) {
  if (!blurry.same_shape(sharp)) throw std::invalid_argument("fit_warp: image sizes differ");
  const WarpMatrix start = init ? init->with_degree(degree) : WarpMatrix::identity(degree);
  const OptimProblem problem = make_warp_problem(blurry, sharp, degree, 0, 0, true);
  OptimReport report = lbfgs_minimize(problem, start.coeffs(), config);
  WarpMatrix fitted(degree, report.final_params);
  return {std::move(fitted), std::move(report)};
}

double mean_grid_error(const WarpMatrix& a, const WarpMatrix& b, std::size_t h, std::size_t w,
                       std::size_t n) {
  if (n < 2) throw std::invalid_argument("grid needs at least 2 points per axis");
  double acc = 0.0;
  for (std::size_t gi = 0; gi < n; ++gi) {
    const double i = (0.1 + 0.8 * static_cast<double>(gi) / static_cast<double>(n - 1)) *
                     static_cast<double>(h - 1);
    for (std::size_t gj = 0; gj < n; ++gj) {
      const double j = (0.1 + 0.8 * static_cast<double>(gj) / static_cast<double>(n - 1)) *
                       static_cast<double>(w - 1);
      const auto [ai, aj] = a.map(i, j, h, w);
      const auto [bi, bj] = b.map(i, j, h, w);
      acc += std::hypot(ai - bi, aj - bj);
    }
  }
  return acc / static_cast<double>(n * n);
}

void write_warp(std::ostream& out, const WarpMatrix& w) {
  out << "degree " << w.degree() << '\n';
  char buf[40];
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t k = 0; k < w.terms(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", w(r, k));
      out << (k ? " " : "") << buf;
    }
    out << '\n';
  }
}

WarpMatrix read_warp(std::istream& in) {
  std::string word;
  long long degree = 0;
  if (!(in >> word >> degree) || word != "degree" || degree < 1 || degree > 32) {
    throw std::runtime_error("warp file: expected 'degree <d>' header");
  }
  const std::size_t count = 2 * poly_feature_count(static_cast<std::size_t>(degree));
  std::vector<double> coeffs(count);
  for (auto& c : coeffs) {
    if (!(in >> c)) throw std::runtime_error("warp file: expected " + std::to_string(count) + " coefficients");
  }
  return WarpMatrix(static_cast<std::size_t>(degree), std::move(coeffs));
}

}  // namespace dforge
