#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "deblur_forge/image.hpp"

namespace dforge {

/// Dark glyph-like strokes (segment-display shapes) on a light page,
/// lightly anti-aliased. Deterministic per seed.
Image make_text_pattern(std::size_t h, std::size_t w, std::uint64_t seed);

struct DemoMetrics {
  double warp_grid_error = 0.0;     // px, fitted vs. true warp
  double kernel_rel_error = 0.0;    // ||P_hat - P|| / ||P||
  double tau_error = 0.0;           // |tau_hat - tau|
  double psnr_blurry = 0.0;         // dB, aligned blurry vs sharp, interior
  double psnr_deblurred = 0.0;      // dB, tiled wiener output vs sharp, interior
  bool passed = false;
};

struct DemoOptions {
  std::uint64_t seed = 42;
  std::size_t size = 240;
  std::size_t threads = 1;
};

/// Synthesises a sharp/blurry pair with a known warp, Gaussian PSF, offset
/// and noise; recovers the warp and PSF; deblurs with tiled Wiener
/// filtering. When `out_dir` is set, every intermediate is written there
/// along with metrics.json. Throws std::runtime_error prefixed with the
/// failing stage name.
DemoMetrics run_demo(const DemoOptions& options, const std::optional<std::filesystem::path>& out_dir);

/// Stable JSON rendering of the metrics (fixed key order and precision).
std::string demo_metrics_json(const DemoMetrics& m, std::uint64_t seed);

}  // namespace dforge
