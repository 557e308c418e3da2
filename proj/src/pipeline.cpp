#include "deblur_forge/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <thread>

#include "deblur_forge/conv.hpp"
#include "deblur_forge/fft.hpp"
#include "deblur_forge/rng.hpp"

namespace dforge {

Image synth_blur(const Image& sharp, const PsfModel& model) {
  // Direct summation for small kernels: exact for a delta and cheap enough.
  constexpr std::size_t kDirectMax = 15;
  Image out = model.kernel.size() <= kDirectMax ? conv_naive(sharp, model.kernel, ConvMode::valid)
                                                : conv_fft(sharp, model.kernel, ConvMode::valid);
  out += model.tau;
  return out;
}

Image crop_to_valid(const Image& sharp, std::size_t p) {
  if (p > sharp.height() || p > sharp.width()) {
    throw std::invalid_argument("kernel larger than image");
  }
  return crop(sharp, p / 2, p / 2, sharp.height() - p + 1, sharp.width() - p + 1);
}

std::size_t default_train_count(std::size_t pairs) { return pairs * 9 / 10; }

Dataset make_dataset(const std::vector<MeasuredPair>& pairs, const std::vector<Image>& naturals,
                     const PsfModel& model, std::size_t train_count) {
  if (pairs.empty()) throw std::invalid_argument("make_dataset needs at least one measured pair");
  if (train_count > pairs.size()) {
    throw std::invalid_argument("train count " + std::to_string(train_count) + " exceeds " +
                                std::to_string(pairs.size()) + " measured pairs");
  }
  Dataset ds;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const MeasuredPair& mp = pairs[k];
    if (!mp.sharp.same_shape(mp.blurry)) {
      throw std::invalid_argument("measured pair " + std::to_string(k) + " has mismatched sizes");
    }
    AlignedPair ap{mp.sharp, warp_image(mp.blurry, mp.warp), PairSource::measured};
    (k < train_count ? ds.train : ds.test).push_back(std::move(ap));
  }
  for (const Image& nat : naturals) {
    ds.train.push_back({crop_to_valid(nat, model.kernel.size()), synth_blur(nat, model),
                        PairSource::synthetic});
  }
  return ds;
}

std::vector<PatchPair> sample_patches(const AlignedPair& pair, const PatchSampling& sampling) {
  const std::size_t s = sampling.patch;
  if (!pair.sharp.same_shape(pair.blurry)) throw std::invalid_argument("pair sizes differ");
  if (s == 0 || pair.sharp.height() < s || pair.sharp.width() < s) {
    throw std::invalid_argument("image " + std::to_string(pair.sharp.height()) + "x" +
                                std::to_string(pair.sharp.width()) + " smaller than patch " +
                                std::to_string(s));
  }
  if (!(sampling.noise_sigma >= 0.0)) throw std::invalid_argument("noise sigma must be >= 0");
  Xoshiro256 rng(sampling.seed);
  std::vector<PatchPair> out;
  out.reserve(sampling.count);
  for (std::size_t k = 0; k < sampling.count; ++k) {
    const std::size_t top = rng.below(pair.sharp.height() - s + 1);
    const std::size_t left = rng.below(pair.sharp.width() - s + 1);
    PatchPair pp{crop(pair.sharp, top, left, s, s), crop(pair.blurry, top, left, s, s), pair.source};
    if (sampling.noise_sigma > 0.0) {
      for (double& v : pp.blurry_patch.pixels()) v += sampling.noise_sigma * rng.normal();
    }
    out.push_back(std::move(pp));
  }
  return out;
}

// ---- backends ---------------------------------------------------------------

std::string to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::identity: return "identity";
    case BackendKind::wiener: return "wiener";
    case BackendKind::richardson_lucy: return "rl";
  }
  return "unknown";
}

BackendKind parse_backend(const std::string& name) {
  if (name == "identity") return BackendKind::identity;
  if (name == "wiener") return BackendKind::wiener;
  if (name == "rl" || name == "richardson-lucy") return BackendKind::richardson_lucy;
  throw std::invalid_argument("unknown backend '" + name + "' (identity, wiener, rl)");
}

void DeblurBackend::validate() const {
  if (kind == BackendKind::wiener && !(epsilon > 0.0)) {
    throw std::invalid_argument("wiener epsilon must be > 0");
  }
  if (kind == BackendKind::richardson_lucy && iterations < 1) {
    throw std::invalid_argument("richardson-lucy needs at least one iteration");
  }
}

Image DeblurBackend::apply(const Image& img) const {
  switch (kind) {
    case BackendKind::identity: return img;
    case BackendKind::wiener: return wiener_deblur(img, psf, epsilon);
    case BackendKind::richardson_lucy: return rl_deblur(img, psf, iterations);
  }
  throw std::logic_error("unhandled backend");
}

namespace {

// One full period of the mirror extension (length 2(n-1) per axis, data at
// the origin). On this canvas circular convolution with a symmetric kernel
// is exactly the reflect-boundary blur, so inversion sees no wrap seam.
struct Canvas {
  ComplexGrid grid;
};

std::size_t canvas_length(std::size_t n) { return n > 1 ? 2 * (n - 1) : 1; }

Canvas make_canvas(const Image& img) {
  const std::size_t ch = canvas_length(img.height());
  const std::size_t cw = canvas_length(img.width());
  Canvas c{ComplexGrid(ch, cw)};
  for (std::size_t r = 0; r < ch; ++r) {
    const auto src = img.row(reflect_index(static_cast<std::ptrdiff_t>(r), img.height()));
    for (std::size_t q = 0; q < cw; ++q) {
      c.grid(r, q) = src[reflect_index(static_cast<std::ptrdiff_t>(q), img.width())];
    }
  }
  return c;
}

// Kernel transfer function with the kernel centre at the origin, so the
// circular product matches same-mode convolution.
ComplexGrid transfer(const Kernel2D& k, std::size_t h, std::size_t w) {
  ComplexGrid t(h, w);
  const auto r = static_cast<std::ptrdiff_t>(k.radius());
  auto wrap = [](std::ptrdiff_t i, std::size_t n) {
    const auto m = static_cast<std::ptrdiff_t>(n);
    return static_cast<std::size_t>(((i % m) + m) % m);
  };
  for (std::size_t u = 0; u < k.size(); ++u) {
    for (std::size_t v = 0; v < k.size(); ++v) {
      t(wrap(static_cast<std::ptrdiff_t>(u) - r, h), wrap(static_cast<std::ptrdiff_t>(v) - r, w)) +=
          k(u, v);
    }
  }
  fft2d(t, false);
  return t;
}

Image extract(const ComplexGrid& g, std::size_t h, std::size_t w) {
  Image out(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) out(r, c) = g(r, c).real();
  }
  return out;
}

}  // namespace

Image wiener_deblur(const Image& img, const PsfModel& psf, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("wiener epsilon must be > 0");
  Image y = img;
  y += -psf.tau;
  Canvas c = make_canvas(y);
  const ComplexGrid k = transfer(psf.kernel, c.grid.height, c.grid.width);
  fft2d(c.grid, false);
  for (std::size_t i = 0; i < c.grid.data.size(); ++i) {
    const cplx kv = k.data[i];
    c.grid.data[i] *= std::conj(kv) / std::max(std::norm(kv), epsilon);
  }
  fft2d(c.grid, true);
  return extract(c.grid, img.height(), img.width());
}

Image rl_deblur(const Image& img, const PsfModel& psf, std::size_t iterations) {
  if (iterations < 1) throw std::invalid_argument("richardson-lucy needs at least one iteration");
  Image kw = psf.kernel.weights();
  for (double& v : kw.pixels()) v = std::max(v, 0.0);
  const double mass = kw.sum();
  if (!(mass > 0.0)) throw std::invalid_argument("richardson-lucy kernel has no positive mass");
  kw *= 1.0 / mass;
  const Kernel2D kernel(std::move(kw));

  Image y = img;
  for (double& v : y.pixels()) v = std::max(v - psf.tau, 0.0);
  Canvas observed = make_canvas(y);
  const std::size_t ch = observed.grid.height;
  const std::size_t cw = observed.grid.width;
  const ComplexGrid k = transfer(kernel, ch, cw);

  ComplexGrid estimate = observed.grid;
  ComplexGrid work(ch, cw);
  constexpr double kFloor = 1e-12;
  for (std::size_t it = 0; it < iterations; ++it) {
    work = estimate;
    fft2d(work, false);
    for (std::size_t i = 0; i < work.data.size(); ++i) work.data[i] *= k.data[i];
    fft2d(work, true);
    for (std::size_t i = 0; i < work.data.size(); ++i) {
      work.data[i] = observed.grid.data[i].real() / std::max(work.data[i].real(), kFloor);
    }
    fft2d(work, false);
    for (std::size_t i = 0; i < work.data.size(); ++i) work.data[i] *= std::conj(k.data[i]);
    fft2d(work, true);
    for (std::size_t i = 0; i < work.data.size(); ++i) {
      estimate.data[i] = estimate.data[i].real() * work.data[i].real();
    }
  }
  return extract(estimate, img.height(), img.width());
}

double patch_mse(const std::vector<PatchPair>& dataset, const DeblurBackend& backend) {
  if (dataset.empty()) throw std::invalid_argument("patch_mse needs a nonempty dataset");
  backend.validate();
  double total = 0.0;
  for (const PatchPair& pp : dataset) {
    const double n = frobenius_norm(pp.sharp_patch - backend.apply(pp.blurry_patch));
    total += n * n;
  }
  return total;
}

// ---- tiling -----------------------------------------------------------------

TileLayout plan_tiles(std::size_t h, std::size_t w, std::size_t core, std::size_t overlap) {
  if (h == 0 || w == 0) throw std::invalid_argument("image dimensions must be >= 1");
  if (core < 1) throw std::invalid_argument("tile core must be >= 1");
  if (overlap >= core) throw std::invalid_argument("tile overlap must be smaller than the core");
  TileLayout layout;
  layout.height = h;
  layout.width = w;
  layout.core = core;
  layout.overlap = overlap;
  layout.tile_rows = (h + core - 1) / core;
  layout.tile_cols = (w + core - 1) / core;
  layout.padded_h = layout.tile_rows * core + 2 * overlap;
  layout.padded_w = layout.tile_cols * core + 2 * overlap;
  for (std::size_t r = 0; r < layout.tile_rows; ++r) {
    for (std::size_t c = 0; c < layout.tile_cols; ++c) layout.origins.emplace_back(r * core, c * core);
  }
  return layout;
}

double blend_weight(std::size_t u, std::size_t core, std::size_t overlap) {
  const std::size_t extent = core + 2 * overlap;
  const std::size_t ramp = 2 * overlap;
  if (ramp == 0 || u >= extent) return u < extent ? 1.0 : 0.0;
  const std::size_t d = std::min(u, extent - 1 - u);
  if (d >= ramp) return 1.0;
  return 0.5 - 0.5 * std::cos(std::numbers::pi * (static_cast<double>(d) + 0.5) /
                              static_cast<double>(ramp));
}

std::string to_string(Reassembly mode) {
  switch (mode) {
    case Reassembly::none: return "none";
    case Reassembly::crop: return "crop";
    case Reassembly::blend: return "blend";
  }
  return "unknown";
}

Reassembly parse_reassembly(const std::string& name) {
  if (name == "none") return Reassembly::none;
  if (name == "crop") return Reassembly::crop;
  if (name == "blend") return Reassembly::blend;
  throw std::invalid_argument("unknown reassembly '" + name + "' (none, crop, blend)");
}

Image deblur_tiled(const Image& img, const DeblurBackend& backend, const TilingOptions& options) {
  backend.validate();
  const TileLayout layout = plan_tiles(img.height(), img.width(), options.core, options.overlap);
  const std::size_t ov = layout.overlap;
  const Image padded = reflect_pad_periodic(img, ov, layout.padded_h - img.height() - ov, ov,
                                            layout.padded_w - img.width() - ov);
  const bool naive = options.reassembly == Reassembly::none;
  const std::size_t extent = naive ? layout.core : layout.extent();
  const std::size_t offset = naive ? ov : 0;  // tile origin shift inside the padded image

  const std::size_t n_tiles = layout.origins.size();
  std::vector<Image> results(n_tiles);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t t = next++; t < n_tiles; t = next++) {
      try {
        const auto [r0, c0] = layout.origins[t];
        const Image tile = crop(padded, r0 + offset, c0 + offset, extent, extent);
        Image out = backend.apply(tile);
        if (!out.same_shape(tile)) {
          throw std::runtime_error("backend returned " + std::to_string(out.height()) + "x" +
                                   std::to_string(out.width()) + " for a " +
                                   std::to_string(extent) + "x" + std::to_string(extent) + " tile");
        }
        results[t] = std::move(out);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(options.threads, 1, n_tiles);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t k = 0; k < n_threads; ++k) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  Image assembled(layout.padded_h, layout.padded_w);
  if (options.reassembly == Reassembly::blend) {
    std::vector<double> phi(extent);
    for (std::size_t u = 0; u < extent; ++u) phi[u] = blend_weight(u, layout.core, ov);
    Image weight(layout.padded_h, layout.padded_w);
    for (std::size_t t = 0; t < n_tiles; ++t) {
      const auto [r0, c0] = layout.origins[t];
      for (std::size_t u = 0; u < extent; ++u) {
        for (std::size_t v = 0; v < extent; ++v) {
          const double wgt = phi[u] * phi[v];
          assembled(r0 + u, c0 + v) += wgt * results[t](u, v);
          weight(r0 + u, c0 + v) += wgt;
        }
      }
    }
    for (std::size_t i = 0; i < assembled.size(); ++i) {
      assembled.pixels()[i] /= weight.pixels()[i];
    }
  } else {
    const std::size_t keep = naive ? 0 : ov;
    for (std::size_t t = 0; t < n_tiles; ++t) {
      const auto [r0, c0] = layout.origins[t];
      embed(assembled, crop(results[t], keep, keep, layout.core, layout.core), r0 + ov, c0 + ov);
    }
  }
  return crop(assembled, ov, ov, img.height(), img.width());
}

// ---- metrics ----------------------------------------------------------------

namespace {

std::pair<Image, Image> interior(const Image& a, const Image& b, std::size_t border) {
  if (!a.same_shape(b)) throw std::invalid_argument("image shape mismatch");
  if (2 * border >= a.height() || 2 * border >= a.width()) {
    throw std::invalid_argument("border leaves no interior");
  }
  const std::size_t h = a.height() - 2 * border;
  const std::size_t w = a.width() - 2 * border;
  return {crop(a, border, border, h, w), crop(b, border, border, h, w)};
}

}  // namespace

double interior_psnr(const Image& estimate, const Image& reference, std::size_t border) {
  const auto [e, r] = interior(estimate, reference, border);
  const double n = frobenius_norm(e - r);
  const double mse = n * n / static_cast<double>(e.size());
  return 10.0 * std::log10(1.0 / mse);
}

double interior_relative_error(const Image& estimate, const Image& reference, std::size_t border) {
  const auto [e, r] = interior(estimate, reference, border);
  return frobenius_norm(e - r) / frobenius_norm(r);
}

}  // namespace dforge
