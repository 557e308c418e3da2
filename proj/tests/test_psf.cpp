#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "deblur_forge/pipeline.hpp"
#include "deblur_forge/psf.hpp"
#include "test_support.hpp"

using namespace dforge;
using namespace dforge::testing;

namespace {

double abs_mass(const Kernel2D& k) {
  double s = 0.0;
  for (double v : k.weights().pixels()) s += std::abs(v);
  return s;
}

double rel_error(const Kernel2D& a, const Kernel2D& b) {
  return frobenius_norm(a.weights() - b.weights()) / frobenius_norm(b.weights());
}

struct Instance {
  Image sharp;
  Image blurry;  // same size as sharp, valid region in the centre
  PsfModel truth;
};

Instance small_instance(double noise, std::uint64_t seed) {
  Instance in;
  in.sharp = smooth_image(64, 64, seed, 0.5);
  in.truth.kernel = Kernel2D::gaussian(7, 1.2);
  in.truth.tau = 0.05;
  Image b = synth_blur(in.sharp, in.truth);
  Xoshiro256 rng(seed + 1);
  for (double& v : b.pixels()) v += noise * rng.normal();
  in.blurry = reflect_pad(b, 3, 3, 3, 3);
  return in;
}

}  // namespace

TEST(PsfLoss, ExactForwardModel) {
  const Image sharp = random_image(20, 20, 1);
  PsfModel m;
  m.kernel = random_kernel(5, 2);
  m.tau = 0.07;
  m.lambda = 1e-3;
  const Image target = synth_blur(sharp, m);
  EXPECT_NEAR(psf_loss(m, sharp, target).loss, m.lambda / 25.0 * abs_mass(m.kernel), 1e-10);
  // Smoothing shifts each |P_ij| by at most eps, so the penalty is within
  // lambda * eps of the exact L1 value for any lambda.
  m.lambda = 0.3;
  EXPECT_NEAR(psf_loss(m, sharp, target).loss, m.lambda / 25.0 * abs_mass(m.kernel),
              m.lambda * kL1Smoothing * 1.0001);
}

TEST(PsfLoss, ConstantPredictorGivesVariance) {
  const Image sharp = random_image(16, 16, 3);
  const Image target = random_image(12, 12, 4);
  PsfModel m;
  m.kernel = Kernel2D(5, std::vector<double>(25, 0.0));
  m.tau = target.mean();
  m.lambda = 0.0;
  double var = 0.0;
  for (double v : target.pixels()) var += (v - m.tau) * (v - m.tau);
  var /= double(target.size());
  EXPECT_NEAR(psf_loss(m, sharp, target).loss, var, 1e-14);
}

TEST(PsfLoss, GradientMatchesFiniteDifferences) {
  const Image sharp = random_image(18, 18, 5);
  const Image target = random_image(14, 14, 6);
  const PsfObjective obj(sharp, target, 5, 1e-2);
  Xoshiro256 rng(7);
  for (int t = 0; t < 3; ++t) {
    std::vector<double> x(obj.dim());
    for (double& v : x) v = 0.2 * (rng.uniform() - 0.5);
    EXPECT_LT(check_gradient(obj.problem(), x, 1e-5), 1e-4);
  }
}

TEST(PsfLoss, MismatchNamesExpectedSize) {
  PsfModel m;
  m.kernel = Kernel2D::delta(5);
  try {
    psf_loss(m, Image(20, 20), Image(20, 20));
    FAIL() << "expected throw";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("16x16"), std::string::npos) << e.what();
  }
}

TEST(FitPsf, DeltaBlurConcentratesMass) {
  const Image sharp = smooth_image(64, 64, 8, 0.5);
  PsfFitOptions o;
  o.size = 7;
  const PsfFit fit = fit_psf(sharp, sharp, WarpMatrix(3), o);
  EXPECT_GE(fit.model.kernel(3, 3) / abs_mass(fit.model.kernel), 0.99);
  EXPECT_NEAR(fit.model.tau, 0.0, 1e-3);
}

TEST(FitPsf, NoiseFreeRecoveryAndDataTerm) {
  const Instance in = small_instance(0.0, 9);
  PsfFitOptions o;
  o.size = 7;
  o.lambda = 0.0;
  const PsfFit fit = fit_psf(in.sharp, in.blurry, WarpMatrix(3), o);
  EXPECT_LT(rel_error(fit.model.kernel, in.truth.kernel), 1e-3);
  const PsfObjective obj(in.sharp, crop(in.blurry, 3, 3, 58, 58), 7, 0.0);
  EXPECT_LT(obj.data_term(fit.model.kernel, fit.model.tau), 1e-8);
}

TEST(FitPsf, RegularisationPathShrinksMass) {
  const Instance in = small_instance(1e-3, 10);
  double previous = INFINITY;
  for (double lambda : {0.0, 1e-4, 1e-2}) {
    PsfFitOptions o;
    o.size = 7;
    o.lambda = lambda;
    const PsfFit fit = fit_psf(in.sharp, in.blurry, WarpMatrix(3), o);
    const double mass = abs_mass(fit.model.kernel);
    EXPECT_LE(mass, previous) << "lambda " << lambda;
    previous = mass;
  }
}

TEST(FitPsf, StageOneIsReproducible) {
  const Instance in = small_instance(1e-3, 11);
  PsfFitOptions o;
  o.size = 7;
  const PsfFit a = fit_psf(in.sharp, in.blurry, WarpMatrix(3), o);
  const PsfFit b = fit_psf(in.sharp, in.blurry, WarpMatrix(3), o);
  EXPECT_NEAR(a.stage1_loss, b.stage1_loss, 1e-9);
  EXPECT_EQ(a.model.kernel.weights(), b.model.kernel.weights());
}

TEST(FitPsf, RefinementNeverWorsensLoss) {
  const Instance in = small_instance(1e-3, 12);
  PsfFitOptions o;
  o.size = 7;
  o.refine_warp = true;
  const PsfFit fit = fit_psf(in.sharp, in.blurry, WarpMatrix(3), o);
  EXPECT_LE(fit.final_loss, fit.stage1_loss);
}

TEST(ShapeReport, Delta) {
  const PsfShapeReport r = psf_shape_report(Kernel2D::delta(9));
  EXPECT_EQ(r.support_radius, 0.0);
  EXPECT_EQ(r.negativity_fraction, 0.0);
  EXPECT_EQ(r.mass_center_y, 4.0);
  EXPECT_EQ(r.mass_center_x, 4.0);
}

TEST(ShapeReport, GaussianCentred) {
  const PsfShapeReport r = psf_shape_report(Kernel2D::gaussian(21, 2.0));
  EXPECT_NEAR(r.mass_center_y, 10.0, 0.01);
  EXPECT_NEAR(r.mass_center_x, 10.0, 0.01);
  EXPECT_GT(r.support_radius, 2.0);
}

TEST(ShapeReport, NegativityFraction) {
  std::vector<double> w(9, 0.0);
  w[4] = 0.9;
  w[0] = -0.1;
  EXPECT_NEAR(psf_shape_report(Kernel2D(3, w)).negativity_fraction, 0.1, 1e-15);
}

TEST(ShapeReport, DegenerateKernel) {
  try {
    psf_shape_report(Kernel2D(3, std::vector<double>(9, 0.0)));
    FAIL() << "expected throw";
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "degenerate kernel");
  }
}

TEST(PsfModelFile, RoundTrip) {
  PsfModel m;
  m.kernel = random_kernel(5, 13);
  m.tau = 0.0123456789012345;
  m.lambda = 2.5e-4;
  std::stringstream ss;
  write_psf(ss, m);
  const PsfModel back = read_psf(ss);
  EXPECT_EQ(back.kernel.weights(), m.kernel.weights());
  EXPECT_EQ(back.tau, m.tau);
  EXPECT_EQ(back.lambda, m.lambda);
}
