#include <gtest/gtest.h>

#include <cmath>

#include "deblur_forge/pipeline.hpp"
#include "test_support.hpp"

using namespace dforge;
using namespace dforge::testing;

namespace {

PsfModel gaussian_psf(std::size_t p, double sigma, double tau = 0.0) {
  PsfModel m;
  m.kernel = Kernel2D::gaussian(p, sigma);
  m.tau = tau;
  return m;
}

// Same-size blurred view: the sharp image is mirror-extended before the
// valid convolution.
Image blur_same(const Image& sharp, const PsfModel& m) {
  const std::size_t r = m.kernel.radius();
  return synth_blur(reflect_pad(sharp, r, r, r, r), m);
}

MeasuredPair measured(std::uint64_t seed) {
  const Image s = random_image(12, 12, seed);
  return {s, random_image(12, 12, seed + 1000), WarpMatrix(3)};
}

}  // namespace

TEST(SynthBlur, DeltaKernel) {
  const Image sharp = random_image(10, 12, 1);
  PsfModel m;
  m.kernel = Kernel2D::delta(5);
  EXPECT_EQ(synth_blur(sharp, m), crop_to_valid(sharp, 5));
  m.tau = 0.1;
  const Image out = synth_blur(sharp, m);
  const Image crop_ = crop_to_valid(sharp, 5);
  for (std::size_t k = 0; k < out.size(); ++k) EXPECT_NEAR(out.pixels()[k], crop_.pixels()[k] + 0.1, 1e-15);
}

TEST(SynthBlur, StepEdgeFollowsGaussianCdf) {
  const std::size_t p = 11;
  const double sigma = 2.0;
  Image step(30, 40);
  for (std::size_t r = 0; r < 30; ++r)
    for (std::size_t c = 20; c < 40; ++c) step(r, c) = 1.0;
  const Image out = synth_blur(step, gaussian_psf(p, sigma));
  // Marginal of the sampled, normalised 2-D Gaussian along the edge normal.
  std::vector<double> g(p);
  double z = 0.0;
  for (std::size_t v = 0; v < p; ++v) {
    const double d = double(v) - double(p / 2);
    g[v] = std::exp(-d * d / (2 * sigma * sigma));
    z += g[v];
  }
  for (std::size_t j = 0; j < out.width(); ++j) {
    // out(i, j) collects taps at input column j + p-1-v; count those >= 20.
    double cdf = 0.0;
    for (std::size_t v = 0; v < p; ++v)
      if (j + p - 1 - v >= 20) cdf += g[v] / z;
    for (std::size_t i = 0; i < out.height(); ++i) EXPECT_NEAR(out(i, j), cdf, 1e-6);
  }
}

TEST(SynthBlur, KernelLargerThanImage) {
  EXPECT_THROW(synth_blur(Image(4, 4), gaussian_psf(5, 1.0)), std::invalid_argument);
}

TEST(MakeDataset, SplitIsOrderedPartition) {
  std::vector<MeasuredPair> pairs;
  for (std::uint64_t k = 0; k < 10; ++k) pairs.push_back(measured(k));
  const Dataset ds = make_dataset(pairs, {}, gaussian_psf(3, 1.0), 9);
  ASSERT_EQ(ds.train.size(), 9u);
  ASSERT_EQ(ds.test.size(), 1u);
  for (std::size_t k = 0; k < 9; ++k) {
    EXPECT_EQ(ds.train[k].sharp, pairs[k].sharp);
    EXPECT_LT(max_abs_diff(ds.train[k].blurry, pairs[k].blurry), 1e-12);
    EXPECT_EQ(ds.train[k].source, PairSource::measured);
  }
  EXPECT_EQ(ds.test[0].sharp, pairs[9].sharp);
  EXPECT_EQ(default_train_count(10), 9u);
  EXPECT_EQ(default_train_count(100), 90u);
}

TEST(MakeDataset, NaturalsWithDeltaKernel) {
  std::vector<MeasuredPair> pairs{measured(1), measured(2)};
  std::vector<Image> naturals{random_image(9, 9, 3), random_image(11, 7, 4), random_image(5, 5, 5)};
  PsfModel m;
  m.kernel = Kernel2D::delta(3);
  m.tau = 0.04;
  const Dataset ds = make_dataset(pairs, naturals, m, 2);
  ASSERT_EQ(ds.train.size(), 5u);
  EXPECT_TRUE(ds.test.empty());
  for (std::size_t k = 2; k < 5; ++k) {
    const AlignedPair& ap = ds.train[k];
    EXPECT_EQ(ap.source, PairSource::synthetic);
    Image expect = ap.sharp;
    expect += 0.04;
    EXPECT_EQ(ap.blurry, expect);
  }
  const Dataset measured_only = make_dataset(pairs, {}, m, 2);
  EXPECT_EQ(measured_only.train.size(), 2u);
  EXPECT_THROW(make_dataset(pairs, {}, m, 3), std::invalid_argument);
}

TEST(SamplePatches, ExactCropsWithoutNoise) {
  const AlignedPair pair{random_image(40, 50, 6), random_image(40, 50, 7), PairSource::measured};
  PatchSampling ps;
  ps.count = 20;
  ps.patch = 16;
  ps.noise_sigma = 0.0;
  ps.seed = 9;
  for (const PatchPair& pp : sample_patches(pair, ps)) {
    // Locate the patch by its sharp content, then compare the blurry crop.
    bool found = false;
    for (std::size_t t = 0; t + 16 <= 40 && !found; ++t)
      for (std::size_t l = 0; l + 16 <= 50 && !found; ++l)
        if (crop(pair.sharp, t, l, 16, 16) == pp.sharp_patch) {
          found = true;
          EXPECT_EQ(crop(pair.blurry, t, l, 16, 16), pp.blurry_patch);
        }
    EXPECT_TRUE(found);
  }
}

TEST(SamplePatches, DeterministicPerSeed) {
  const AlignedPair pair{random_image(40, 40, 8), random_image(40, 40, 9), PairSource::measured};
  PatchSampling ps;
  ps.count = 5;
  ps.patch = 10;
  ps.seed = 77;
  const auto a = sample_patches(pair, ps);
  const auto b = sample_patches(pair, ps);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].sharp_patch, b[k].sharp_patch);
    EXPECT_EQ(a[k].blurry_patch, b[k].blurry_patch);
  }
  ps.seed = 78;
  EXPECT_NE(sample_patches(pair, ps)[0].blurry_patch, a[0].blurry_patch);
}

TEST(SamplePatches, TooSmall) {
  const AlignedPair pair{Image(10, 10), Image(10, 10), PairSource::measured};
  EXPECT_THROW(sample_patches(pair, PatchSampling{}), std::invalid_argument);
}

TEST(PatchMse, IdentityBackend) {
  const Image s(320, 320, 0.3);
  Image b = s;
  std::vector<PatchPair> same{{s, s, PairSource::measured}};
  EXPECT_EQ(patch_mse(same, DeblurBackend{}), 0.0);
  b += 0.1;
  std::vector<PatchPair> offset{{s, b, PairSource::measured}};
  EXPECT_NEAR(patch_mse(offset, DeblurBackend{}), 0.01 * 320 * 320, 1e-6);
}

TEST(PatchMse, WienerBeatsIdentityOnSyntheticPairs) {
  const PsfModel psf = gaussian_psf(7, 1.2);
  std::vector<PatchPair> data;
  for (std::uint64_t k = 0; k < 3; ++k) {
    const Image sharp = smooth_image(48, 48, 20 + k, 1.0);
    data.push_back({sharp, blur_same(sharp, psf), PairSource::synthetic});
  }
  DeblurBackend wiener;
  wiener.kind = BackendKind::wiener;
  wiener.epsilon = 1e-4;
  wiener.psf = psf;
  EXPECT_LT(patch_mse(data, wiener), patch_mse(data, DeblurBackend{}));
}

TEST(Backends, DeltaPsfIsIdentity) {
  const Image img = random_image(33, 27, 10);
  PsfModel delta;
  delta.kernel = Kernel2D::delta(5);
  EXPECT_LT(max_abs_diff(wiener_deblur(img, delta, 1e-3), img), 1e-9);
  EXPECT_LT(max_abs_diff(rl_deblur(img, delta, 10), img), 1e-9);
}

TEST(Backends, WienerInvertsGaussianBlur) {
  const std::size_t p = 11;
  const PsfModel psf = gaussian_psf(p, 1.5);
  const Image sharp = smooth_image(128, 128, 11, 1.0);
  const Image blurry = blur_same(sharp, psf);
  EXPECT_LT(interior_relative_error(wiener_deblur(blurry, psf, 1e-6), sharp, p), 0.02);
  EXPECT_GT(interior_psnr(wiener_deblur(blurry, psf, 1e-9), sharp, p), 40.0);
}

TEST(Backends, WienerSubtractsOffset) {
  const PsfModel psf = gaussian_psf(7, 1.0, 0.08);
  const Image sharp = smooth_image(64, 64, 12, 1.0);
  EXPECT_LT(interior_relative_error(wiener_deblur(blur_same(sharp, psf), psf, 1e-8), sharp, 7), 0.02);
}

TEST(Backends, RichardsonLucyImproves) {
  const std::size_t p = 11;
  const PsfModel psf = gaussian_psf(p, 1.5);
  const Image sharp = smooth_image(96, 96, 13, 1.0);
  const Image blurry = blur_same(sharp, psf);
  EXPECT_LT(interior_relative_error(rl_deblur(blurry, psf, 50), sharp, p),
            interior_relative_error(blurry, sharp, p));
}

TEST(Backends, Validation) {
  DeblurBackend b;
  b.kind = BackendKind::wiener;
  b.epsilon = 0.0;
  EXPECT_THROW(b.validate(), std::invalid_argument);
  EXPECT_THROW(wiener_deblur(Image(8, 8), PsfModel{}, -1.0), std::invalid_argument);
  b.kind = BackendKind::richardson_lucy;
  b.iterations = 0;
  EXPECT_THROW(b.validate(), std::invalid_argument);
  EXPECT_EQ(parse_backend("rl"), BackendKind::richardson_lucy);
  EXPECT_EQ(parse_backend("wiener"), BackendKind::wiener);
  EXPECT_THROW(parse_backend("unet"), std::invalid_argument);
}

TEST(PlanTiles, Examples) {
  const TileLayout one = plan_tiles(640, 640, 640, 160);
  EXPECT_EQ(one.origins.size(), 1u);
  EXPECT_EQ(one.padded_h, 960u);
  EXPECT_EQ(one.padded_w, 960u);
  const TileLayout large = plan_tiles(1460, 2360, 640, 160);
  EXPECT_EQ(large.tile_rows, 3u);
  EXPECT_EQ(large.tile_cols, 4u);
  EXPECT_EQ(large.origins.size(), 12u);
  EXPECT_EQ(plan_tiles(641, 100, 640, 160).tile_rows, 2u);
  EXPECT_THROW(plan_tiles(10, 10, 0, 0), std::invalid_argument);
  EXPECT_THROW(plan_tiles(10, 10, 8, 8), std::invalid_argument);
  EXPECT_THROW(plan_tiles(0, 10, 8, 2), std::invalid_argument);
}

TEST(BlendWeight, SymmetricRampsAndPartitionOfUnity) {
  const std::size_t core = 64;
  const std::size_t ov = 16;
  const std::size_t extent = core + 2 * ov;
  for (std::size_t u = 0; u < extent; ++u) {
    EXPECT_NEAR(blend_weight(u, core, ov), blend_weight(extent - 1 - u, core, ov), 1e-15);
    EXPECT_GT(blend_weight(u, core, ov), 0.0);
  }
  for (std::size_t u = 2 * ov; u + 2 * ov < extent; ++u) EXPECT_EQ(blend_weight(u, core, ov), 1.0);
  // Interior tile k and neighbour k+1 start `core` apart; their weights
  // over the shared band add up to one.
  for (std::size_t u = 0; u < 2 * ov; ++u)
    EXPECT_NEAR(blend_weight(u, core, ov) + blend_weight(u + core, core, ov), 1.0, 1e-12);
}

TEST(BlendWeight, CoverageOnRandomLayouts) {
  Xoshiro256 rng(14);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng.below(2000);
    const std::size_t core = 1 + rng.below(700);
    const std::size_t ov = rng.below(core);
    const TileLayout layout = plan_tiles(n, n, core, ov);
    std::vector<double> cover(layout.padded_h, 0.0);
    for (std::size_t r = 0; r < layout.tile_rows; ++r)
      for (std::size_t u = 0; u < layout.extent(); ++u) cover[r * core + u] += blend_weight(u, core, ov);
    for (double c : cover) ASSERT_GT(c * c, 0.0) << n << " " << core << " " << ov;
  }
}

TEST(DeblurTiled, IdentityAllModes) {
  const Image img = random_image(150, 97, 15);
  for (Reassembly mode : {Reassembly::none, Reassembly::crop, Reassembly::blend}) {
    TilingOptions opt;
    opt.core = 40;
    opt.overlap = 12;
    opt.reassembly = mode;
    const Image out = deblur_tiled(img, DeblurBackend{}, opt);
    if (mode == Reassembly::blend) {
      EXPECT_LT(max_abs_diff(out, img), 1e-12);
    } else {
      EXPECT_EQ(out, img);
    }
  }
}

TEST(DeblurTiled, ThreadCountDoesNotChangeOutput) {
  const Image img = smooth_image(120, 130, 16, 1.0);
  DeblurBackend b;
  b.kind = BackendKind::wiener;
  b.psf = gaussian_psf(7, 1.2);
  TilingOptions opt;
  opt.core = 48;
  opt.overlap = 12;
  const Image serial = deblur_tiled(img, b, opt);
  opt.threads = 4;
  EXPECT_EQ(deblur_tiled(img, b, opt), serial);
}

TEST(Metrics, PsnrAndRelativeError) {
  const Image ref(20, 20, 0.5);
  Image est = ref;
  est += 0.1;
  EXPECT_NEAR(interior_psnr(est, ref, 3), 20.0, 1e-9);
  EXPECT_NEAR(interior_relative_error(est, ref, 3), 0.2, 1e-12);
}
