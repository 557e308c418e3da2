#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

#include "deblur_forge/image.hpp"
#include "deblur_forge/optim.hpp"

namespace dforge {

/// Number of monomials of total degree <= `degree` in two variables.
constexpr std::size_t poly_feature_count(std::size_t degree) {
  return (degree + 1) * (degree + 2) / 2;
}

/// Monomials of (i, j) in graded order: 1; i, j; i^2, ij, j^2; i^3, i^2 j, ...
/// Within one total degree the power of i decreases.
std::vector<double> poly_features(double i, double j, std::size_t degree);

/// Polynomial coordinate transform [i', j']^T = W f(i, j).
///
/// W acts on coordinates normalised to [-1, 1] per axis (pixel 0 maps to -1
/// and pixel n-1 to +1), so the identity warp is the same matrix for every
/// image size.
class WarpMatrix {
 public:
  explicit WarpMatrix(std::size_t degree = 3);  // identity
  WarpMatrix(std::size_t degree, std::vector<double> coeffs);

  static WarpMatrix identity(std::size_t degree = 3) { return WarpMatrix(degree); }

  std::size_t degree() const { return degree_; }
  std::size_t terms() const { return poly_feature_count(degree_); }

  /// Row 0 drives i' (vertical), row 1 drives j' (horizontal).
  double& operator()(std::size_t row, std::size_t k) { return coeffs_[row * terms() + k]; }
  double operator()(std::size_t row, std::size_t k) const { return coeffs_[row * terms() + k]; }

  /// Flattened [row 0 | row 1], length 2K.
  const std::vector<double>& coeffs() const { return coeffs_; }

  /// Same transform expressed at a different degree. Raising the degree pads
  /// with zeros; lowering it drops the higher-order terms.
  WarpMatrix with_degree(std::size_t degree) const;

  /// Maps pixel (i, j) of an h x w image to source coordinates (i', j').
  std::pair<double, double> map(double i, double j, std::size_t h, std::size_t w) const;

 private:
  std::size_t degree_;
  std::vector<double> coeffs_;
};

/// output(i, j) = sample_bicubic(img, W(i, j)). Requires img >= 4x4.
Image warp_image(const Image& img, const WarpMatrix& w);

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// (1/mn) ||C(warp(blurry, W)) - C(sharp)||_F^2 and its gradient with
/// respect to the 2K coefficients (layout as WarpMatrix::coeffs()).
LossAndGrad warping_loss(const WarpMatrix& w, const Image& blurry, const Image& sharp);

/// Generalised form: compares the window of warp(moving, W) whose top-left
/// is (top, left) and whose size is target's against `target`. With
/// `centered` both sides have their means removed first.
LossAndGrad warp_window_loss(const WarpMatrix& w, const Image& moving, const Image& target,
                             std::size_t top, std::size_t left, bool centered);

/// OptimProblem over the flattened coefficients for warp_window_loss.
OptimProblem make_warp_problem(const Image& moving, const Image& target, std::size_t degree,
                               std::size_t top, std::size_t left, bool centered);

struct WarpFit {
  WarpMatrix warp;
  OptimReport report;
};

/// Minimises warping_loss from `init` (identity of `degree` by default).
WarpFit fit_warp(const Image& blurry, const Image& sharp, std::size_t degree = 3,
                 const std::optional<WarpMatrix>& init = std::nullopt,
                 const LbfgsConfig& config = {});

/// Mean distance in pixels between the mappings of `a` and `b` over an
/// n x n grid spanning the central 80% of an h x w image.
double mean_grid_error(const WarpMatrix& a, const WarpMatrix& b, std::size_t h, std::size_t w,
                       std::size_t n = 10);

void write_warp(std::ostream& out, const WarpMatrix& w);
WarpMatrix read_warp(std::istream& in);

}  // namespace dforge
