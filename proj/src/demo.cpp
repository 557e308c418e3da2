#include "deblur_forge/demo.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <stdexcept>

#include "deblur_forge/conv.hpp"
#include "deblur_forge/image_io.hpp"
#include "deblur_forge/pipeline.hpp"
#include "deblur_forge/psf.hpp"
#include "deblur_forge/rng.hpp"
#include "deblur_forge/warp.hpp"

namespace dforge {

Image make_text_pattern(std::size_t h, std::size_t w, std::uint64_t seed) {
  Xoshiro256 rng(seed);
  Image page(h, w, 0.9);
  // Seven-segment style glyph cells, stroke width 2.
  const std::size_t cell_h = 22;
  const std::size_t cell_w = 14;
  const std::size_t stroke = 2;
  const std::size_t margin = 12;
  auto fill = [&](std::size_t r0, std::size_t c0, std::size_t rh, std::size_t cw) {
    for (std::size_t r = r0; r < std::min(h, r0 + rh); ++r) {
      for (std::size_t c = c0; c < std::min(w, c0 + cw); ++c) page(r, c) = 0.1;
    }
  };
  for (std::size_t top = margin; top + cell_h + margin <= h; top += cell_h + 8) {
    for (std::size_t left = margin; left + cell_w + margin <= w; left += cell_w + 4) {
      if (rng.below(8) == 0) continue;  // word gap
      const std::size_t gh = cell_h - 4;
      const std::size_t gw = cell_w - 4;
      // Horizontal segments at top, middle, bottom.
      for (std::size_t k = 0; k < 3; ++k) {
        if (rng.below(2)) fill(top + k * (gh - stroke) / 2, left, stroke, gw);
      }
      // Vertical segments: left/right, upper/lower halves.
      for (std::size_t k = 0; k < 4; ++k) {
        if (rng.below(2)) {
          const std::size_t r0 = top + (k / 2) * (gh / 2);
          const std::size_t c0 = left + (k % 2) * (gw - stroke);
          fill(r0, c0, gh / 2 + stroke / 2, stroke);
        }
      }
    }
  }
  const Kernel2D aa = Kernel2D::gaussian(5, 0.7);
  return conv_fft(reflect_pad(page, 2, 2, 2, 2), aa, ConvMode::valid);
}

namespace {

constexpr std::size_t kPsfSize = 11;
constexpr double kPsfSigma = 2.0;
constexpr double kTau = 0.05;
constexpr double kNoiseSigma = 1e-3;
constexpr double kWienerEpsilon = 2e-3;
constexpr std::size_t kInteriorBorder = 16;

template <typename F>
auto stage(const char* name, F&& f) {
  try {
    return std::invoke(std::forward<F>(f));
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string(name) + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  body(out);
}

}  // namespace

DemoMetrics run_demo(const DemoOptions& options, const std::optional<std::filesystem::path>& out_dir) {
  const std::size_t n = options.size;
  if (n < 64) throw std::invalid_argument("demo size must be >= 64");
  Xoshiro256 rng(options.seed ^ 0x5eedu);

  // Scene as seen by the blurry camera; the sharp camera sees it warped.
  const Image scene = make_text_pattern(n, n, options.seed);
  WarpMatrix truth = WarpMatrix::identity(3);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t k = 0; k < truth.terms(); ++k) truth(r, k) += 0.008 * (rng.uniform() - 0.5);
  }
  truth(0, 0) += 0.02;
  truth(1, 0) -= 0.015;
  const Image sharp = stage("synthesize", [&] { return warp_image(scene, truth); });

  PsfModel true_psf;
  true_psf.kernel = Kernel2D::gaussian(kPsfSize, kPsfSigma);
  true_psf.tau = kTau;
  const std::size_t r = kPsfSize / 2;
  Image blurry = stage("synthesize", [&] { return synth_blur(reflect_pad(scene, r, r, r, r), true_psf); });
  for (double& v : blurry.pixels()) v += kNoiseSigma * rng.normal();

  const WarpFit warp_fit = stage("estimate-warp", [&] { return fit_warp(blurry, sharp, 3); });

  PsfFitOptions psf_opts;
  psf_opts.size = kPsfSize;
  psf_opts.lambda = 1e-3;
  psf_opts.refine_warp = true;
  const PsfFit psf_fit = stage("estimate-psf", [&] { return fit_psf(sharp, blurry, warp_fit.warp, psf_opts); });

  const Image aligned = stage("align", [&] { return warp_image(blurry, psf_fit.warp); });
  DeblurBackend backend;
  backend.kind = BackendKind::wiener;
  backend.epsilon = kWienerEpsilon;
  backend.psf = psf_fit.model;
  TilingOptions tiling;
  tiling.core = n / 2;
  tiling.overlap = n / 8;
  tiling.reassembly = Reassembly::blend;
  tiling.threads = options.threads;
  const Image deblurred = stage("deblur", [&] { return deblur_tiled(aligned, backend, tiling); });

  DemoMetrics m;
  m.warp_grid_error = mean_grid_error(warp_fit.warp, truth, n, n);
  m.kernel_rel_error = frobenius_norm(psf_fit.model.kernel.weights() - true_psf.kernel.weights()) /
                       frobenius_norm(true_psf.kernel.weights());
  m.tau_error = std::abs(psf_fit.model.tau - kTau);
  Image offset_removed = aligned;
  offset_removed += -psf_fit.model.tau;
  m.psnr_blurry = interior_psnr(offset_removed, sharp, kInteriorBorder);
  m.psnr_deblurred = interior_psnr(deblurred, sharp, kInteriorBorder);
  m.passed = m.warp_grid_error < 0.1 && m.kernel_rel_error < 0.05 && m.psnr_deblurred > m.psnr_blurry;

  if (out_dir) {
    stage("write", [&] {
      std::filesystem::create_directories(*out_dir);
      save_image(scene, *out_dir / "scene.png");
      save_image(sharp, *out_dir / "sharp.png");
      save_image(blurry, *out_dir / "blurry.png");
      save_image(aligned, *out_dir / "blurry_aligned.png");
      save_image(deblurred, *out_dir / "deblurred.png");
      write_text(*out_dir / "warp_true.txt", [&](std::ostream& o) { write_warp(o, truth); });
      write_text(*out_dir / "warp.txt", [&](std::ostream& o) { write_warp(o, psf_fit.warp); });
      write_text(*out_dir / "psf.txt", [&](std::ostream& o) { write_psf(o, psf_fit.model); });
      write_text(*out_dir / "metrics.json",
                 [&](std::ostream& o) { o << demo_metrics_json(m, options.seed) << '\n'; });
    });
  }
  return m;
}

std::string demo_metrics_json(const DemoMetrics& m, std::uint64_t seed) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "{\n  \"seed\": %llu,\n  \"warp_grid_error_px\": %.9g,\n"
                "  \"kernel_relative_error\": %.9g,\n  \"tau_error\": %.9g,\n"
                "  \"psnr_blurry_db\": %.9g,\n  \"psnr_deblurred_db\": %.9g,\n  \"passed\": %s\n}",
                static_cast<unsigned long long>(seed), m.warp_grid_error, m.kernel_rel_error,
                m.tau_error, m.psnr_blurry, m.psnr_deblurred, m.passed ? "true" : "false");
  return buf;
}

}  // namespace dforge
