#include "deblur_forge/psf.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace dforge {
namespace {

std::string dims(std::size_t h, std::size_t w) {
  return std::to_string(h) + "x" + std::to_string(w);
}

Image kernel_image(std::span<const double> params, std::size_t p) {
  return Image(p, p, std::vector<double>(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(p * p)));
}

}  // namespace

PsfObjective::PsfObjective(const Image& sharp, const Image& target, std::size_t p, double lambda)
    : sharp_spec_(sharp, p, p), target_(target), p_(p), lambda_(lambda) {
  if (p % 2 == 0 || p < 1) throw std::invalid_argument("PSF size must be odd, got " + std::to_string(p));
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  if (p > sharp.height() || p > sharp.width()) {
    throw std::invalid_argument("PSF " + dims(p, p) + " larger than sharp image " +
                                dims(sharp.height(), sharp.width()));
  }
  const std::size_t vh = sharp.height() - p + 1;
  const std::size_t vw = sharp.width() - p + 1;
  if (target.height() != vh || target.width() != vw) {
    throw std::invalid_argument("blurry target is " + dims(target.height(), target.width()) +
                                ", expected the valid-convolution size " + dims(vh, vw));
  }
}

LossAndGrad PsfObjective::eval(std::span<const double> params) const {
  const std::size_t pp = p_ * p_;
  const double tau = params[pp];
  Image resid = sharp_spec_.convolve_valid(kernel_image(params, p_));
  resid += tau;
  resid -= target_;
  const double count = static_cast<double>(resid.size());

  LossAndGrad out;
  out.grad.assign(pp + 1, 0.0);
  double data = 0.0;
  for (double r : resid.pixels()) data += r * r;
  data /= count;

  // d/dP(u,v) = (2/N) sum_ij r(i,j) S(i+p-1-u, j+p-1-v): a flipped valid
  // correlation of the sharp image with the residual.
  const Image corr = sharp_spec_.correlate_valid(resid);
  const double l1_weight = lambda_ / static_cast<double>(pp);
  double l1 = 0.0;
  for (std::size_t u = 0; u < p_; ++u) {
    for (std::size_t v = 0; v < p_; ++v) {
      const double w = params[u * p_ + v];
      const double smooth = std::sqrt(w * w + kL1Smoothing * kL1Smoothing);
      l1 += smooth - kL1Smoothing;
      out.grad[u * p_ + v] = 2.0 / count * corr(p_ - 1 - u, p_ - 1 - v) + l1_weight * w / smooth;
    }
  }
  out.grad[pp] = 2.0 / count * resid.sum();
  out.loss = data + l1_weight * l1;
  return out;
}

double PsfObjective::data_term(const Kernel2D& kernel, double tau) const {
  Image resid = sharp_spec_.convolve_valid(kernel.weights());
  resid += tau;
  resid -= target_;
  const double n = frobenius_norm(resid);
  return n * n / static_cast<double>(resid.size());
}

OptimProblem PsfObjective::problem() const {
  OptimProblem problem;
  problem.dim = dim();
  problem.eval = [this](std::span<const double> x, std::span<double> g) {
    LossAndGrad lg = eval(x);
    std::copy(lg.grad.begin(), lg.grad.end(), g.begin());
    return lg.loss;
  };
  return problem;
}

LossAndGrad psf_loss(const PsfModel& model, const Image& sharp, const Image& blurry_warped) {
  const PsfObjective objective(sharp, blurry_warped, model.kernel.size(), model.lambda);
  std::vector<double> params(model.kernel.weights().pixels().begin(),
                             model.kernel.weights().pixels().end());
  params.push_back(model.tau);
  return objective.eval(params);
}

namespace {

std::vector<double> pack(const Kernel2D& k, double tau) {
  std::vector<double> x(k.weights().pixels().begin(), k.weights().pixels().end());
  x.push_back(tau);
  return x;
}

void unpack(const std::vector<double>& x, std::size_t p, PsfModel& model) {
  model.kernel = Kernel2D(kernel_image(x, p));
  model.tau = x[p * p];
}

}  // namespace

PsfFit fit_psf(const Image& sharp, const Image& blurry, const WarpMatrix& warp,
               const PsfFitOptions& options) {
  const std::size_t p = options.size;
  if (p % 2 == 0) throw std::invalid_argument("PSF size must be odd, got " + std::to_string(p));
  if (p > std::min(sharp.height(), sharp.width())) {
    throw std::invalid_argument("PSF size " + std::to_string(p) + " exceeds image " +
                                dims(sharp.height(), sharp.width()));
  }
  if (!blurry.same_shape(sharp)) {
    throw std::invalid_argument("fit_psf: blurry " + dims(blurry.height(), blurry.width()) +
                                " vs sharp " + dims(sharp.height(), sharp.width()));
  }
  const std::size_t r = p / 2;
  const std::size_t vh = sharp.height() - p + 1;
  const std::size_t vw = sharp.width() - p + 1;

  PsfFit fit;
  fit.warp = warp;
  fit.model.lambda = options.lambda;

  auto fit_kernel = [&](const std::vector<double>& start) {
    const Image target = crop(warp_image(blurry, fit.warp), r, r, vh, vw);
    const PsfObjective objective(sharp, target, p, options.lambda);
    fit.report = lbfgs_minimize(objective.problem(), start, options.psf_config);
    unpack(fit.report.final_params, p, fit.model);
    return fit.report.final_loss;
  };

  // Stage 1: unit-mass box kernel, tau absorbing the brightness difference.
  const Kernel2D box = Kernel2D::box(p);
  const Image target0 = crop(warp_image(blurry, warp), r, r, vh, vw);
  const double tau0 = target0.mean() - convolve_valid_fft(sharp, box.weights()).mean();
  fit.stage1_loss = fit_kernel(pack(box, tau0));
  fit.final_loss = fit.stage1_loss;
  if (!options.refine_warp) return fit;

  // Stage 2: alternate warp refinement (P, tau fixed) and kernel refits.
  const std::size_t degree = warp.degree();
  for (std::size_t round = 0; round < options.refine_rounds; ++round) {
    Image predicted = convolve_valid_fft(sharp, fit.model.kernel.weights());
    predicted += fit.model.tau;
    const OptimProblem warp_problem = make_warp_problem(blurry, predicted, degree, r, r, false);
    const OptimReport warp_report = lbfgs_minimize(warp_problem, fit.warp.coeffs(), options.warp_config);
    fit.warp = WarpMatrix(degree, warp_report.final_params);
    fit.final_loss = fit_kernel(pack(fit.model.kernel, fit.model.tau));
  }
  return fit;
}

PsfShapeReport psf_shape_report(const Kernel2D& kernel) {
  const std::size_t p = kernel.size();
  double total = 0.0;
  double negative = 0.0;
  double cy = 0.0;
  double cx = 0.0;
  for (std::size_t u = 0; u < p; ++u) {
    for (std::size_t v = 0; v < p; ++v) {
      const double a = std::abs(kernel(u, v));
      total += a;
      negative += std::max(0.0, -kernel(u, v));
      cy += a * static_cast<double>(u);
      cx += a * static_cast<double>(v);
    }
  }
  if (total == 0.0) throw std::invalid_argument("degenerate kernel");
  PsfShapeReport rep;
  rep.mass_center_y = cy / total;
  rep.mass_center_x = cx / total;
  rep.negativity_fraction = negative / total;

  std::vector<std::size_t> order(p * p);
  std::iota(order.begin(), order.end(), 0);
  const auto px = kernel.weights().pixels();
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(px[a]) > std::abs(px[b]); });
  double acc = 0.0;
  for (std::size_t idx : order) {
    if (acc >= 0.99 * total) break;
    acc += std::abs(px[idx]);
    const double dy = static_cast<double>(idx / p) - rep.mass_center_y;
    const double dx = static_cast<double>(idx % p) - rep.mass_center_x;
    rep.support_radius = std::max(rep.support_radius, std::hypot(dy, dx));
  }
  return rep;
}

void write_psf(std::ostream& out, const PsfModel& model) {
  write_kernel(out, model.kernel);
  char buf[64];
  std::snprintf(buf, sizeof buf, "tau %.17g\nlambda %.17g\n", model.tau, model.lambda);
  out << buf;
}

PsfModel read_psf(std::istream& in) {
  PsfModel model;
  model.kernel = read_kernel(in);
  bool have_tau = false;
  bool have_lambda = false;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    double value = 0.0;
    if (!(ls >> key)) continue;
    if (!(ls >> value) || !std::isfinite(value)) {
      throw std::runtime_error("psf file: bad value on line '" + line + "'");
    }
    if (key == "tau") {
      model.tau = value;
      have_tau = true;
    } else if (key == "lambda") {
      if (value < 0.0) throw std::runtime_error("psf file: lambda must be >= 0");
      model.lambda = value;
      have_lambda = true;
    } else {
      throw std::runtime_error("psf file: unknown key '" + key + "'");
    }
  }
  if (!have_tau || !have_lambda) throw std::runtime_error("psf file: missing tau or lambda line");
  return model;
}

}  // namespace dforge
