#pragma once

#include <cstddef>
#include <iosfwd>

#include "deblur_forge/conv.hpp"
#include "deblur_forge/image.hpp"
#include "deblur_forge/optim.hpp"
#include "deblur_forge/warp.hpp"

namespace dforge {

/// Blur kernel P, additive brightness offset tau, and the L1 weight lambda
/// it was (or will be) estimated with.
struct PsfModel {
  Kernel2D kernel = Kernel2D::delta(1);
  double tau = 0.0;
  double lambda = 1e-3;
};

/// Smoothing width of the L1 term: |x| is replaced by sqrt(x^2 + eps^2) - eps.
inline constexpr double kL1Smoothing = 1e-8;

/// Data term plus smoothed L1 penalty:
///   (1/N) ||valid_conv(sharp, P) + tau - target||^2 + (lambda/p^2) sum |P_ij|
/// where N is the number of target pixels. The sharp spectrum is computed
/// once, so repeated evaluations cost four FFTs each.
class PsfObjective {
 public:
  /// `target` must have the valid-convolution size of (sharp, p x p).
  PsfObjective(const Image& sharp, const Image& target, std::size_t p, double lambda);

  std::size_t kernel_size() const { return p_; }
  /// Parameter layout: p*p kernel weights (row-major) followed by tau.
  std::size_t dim() const { return p_ * p_ + 1; }

  LossAndGrad eval(std::span<const double> params) const;
  /// Only the data term.
  double data_term(const Kernel2D& kernel, double tau) const;

  OptimProblem problem() const;

 private:
  SpectralImage sharp_spec_;
  Image target_;
  std::size_t p_;
  double lambda_;
};

/// L_PSF for one model. `blurry_warped` is the already-warped, already
/// cropped target (valid-convolution size); a mismatch throws with the
/// expected size in the message.
LossAndGrad psf_loss(const PsfModel& model, const Image& sharp, const Image& blurry_warped);

struct PsfFit {
  PsfModel model;
  WarpMatrix warp;
  OptimReport report;  // last (P, tau) minimisation
  double stage1_loss = 0.0;
  double final_loss = 0.0;
};

struct PsfFitOptions {
  std::size_t size = 31;
  double lambda = 1e-3;
  bool refine_warp = false;
  std::size_t refine_rounds = 2;
  LbfgsConfig psf_config{};
  LbfgsConfig warp_config{};
};

/// Warps `blurry` with `warp`, crops it to the valid-convolution footprint
/// of `sharp` and minimises L_PSF over (P, tau), starting from a unit-mass
/// box kernel with tau matching the mean brightness. With refine_warp the
/// warp and (P, tau) are then re-fitted alternately; the final loss never
/// exceeds the stage-1 loss.
PsfFit fit_psf(const Image& sharp, const Image& blurry, const WarpMatrix& warp,
               const PsfFitOptions& options);

/// Shape statistics of an estimated kernel.
struct PsfShapeReport {
  double support_radius = 0.0;  ///< max distance from mass centre over the pixels holding 99% of |mass|
  double mass_center_y = 0.0;
  double mass_center_x = 0.0;
  double negativity_fraction = 0.0;  ///< sum max(0, -P) / sum |P|
};

/// Throws std::invalid_argument("degenerate kernel") for an all-zero kernel.
PsfShapeReport psf_shape_report(const Kernel2D& kernel);

void write_psf(std::ostream& out, const PsfModel& model);
PsfModel read_psf(std::istream& in);

}  // namespace dforge
