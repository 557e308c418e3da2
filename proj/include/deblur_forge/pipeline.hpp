#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "deblur_forge/image.hpp"
#include "deblur_forge/psf.hpp"
#include "deblur_forge/warp.hpp"

namespace dforge {

// ---- forward model and datasets -----------------------------------------

/// valid_conv(sharp, P) + tau; the result is (m-p+1) x (n-p+1).
Image synth_blur(const Image& sharp, const PsfModel& model);

/// Crops `sharp` to the footprint of synth_blur's output for a p x p kernel.
Image crop_to_valid(const Image& sharp, std::size_t p);

enum class PairSource { measured, synthetic };

struct AlignedPair {
  Image sharp;
  Image blurry;
  PairSource source = PairSource::measured;
};

struct MeasuredPair {
  Image sharp;
  Image blurry;
  WarpMatrix warp;
};

struct Dataset {
  std::vector<AlignedPair> train;
  std::vector<AlignedPair> test;
};

/// The first `train_count` measured pairs (warped into alignment) go to
/// train and the rest to test, order preserved. Every natural image adds a
/// (cropped sharp, synth_blur) pair to train after the measured ones.
Dataset make_dataset(const std::vector<MeasuredPair>& pairs, const std::vector<Image>& naturals,
                     const PsfModel& model, std::size_t train_count);

/// The conventional 90-of-100 split, rounded down.
std::size_t default_train_count(std::size_t pairs);

struct PatchPair {
  Image sharp_patch;
  Image blurry_patch;
  PairSource source = PairSource::measured;
};

struct PatchSampling {
  std::size_t count = 1;
  std::size_t patch = 320;
  double noise_sigma = 3e-2;
  std::uint64_t seed = 0;
};

/// Co-located uniform random crops; i.i.d. Gaussian noise of std
/// noise_sigma is added to the blurry patch only. Deterministic per seed.
std::vector<PatchPair> sample_patches(const AlignedPair& pair, const PatchSampling& sampling);

// ---- non-blind backends ---------------------------------------------------

enum class BackendKind { identity, wiener, richardson_lucy };

std::string to_string(BackendKind kind);
BackendKind parse_backend(const std::string& name);

/// Dimension-preserving deblurring operator used per tile.
struct DeblurBackend {
  BackendKind kind = BackendKind::identity;
  double epsilon = 1e-4;       // wiener spectral floor, > 0
  std::size_t iterations = 30;  // richardson-lucy, >= 1
  PsfModel psf;

  /// Throws std::invalid_argument on out-of-range parameters.
  void validate() const;
  Image apply(const Image& img) const;
};

/// Frequency-domain inverse with a spectral floor:
///   X = conj(K) Y / max(|K|^2, epsilon)
/// applied to img - tau, computed on one period of the mirror extension so
/// boundaries follow the same reflect convention as the forward model.
Image wiener_deblur(const Image& img, const PsfModel& psf, double epsilon);

/// Richardson-Lucy multiplicative updates on max(img - tau, 0), with the
/// kernel clamped to >= 0 and renormalised to unit mass.
Image rl_deblur(const Image& img, const PsfModel& psf, std::size_t iterations);

/// Sum over pairs of ||T_sharp - backend(T_blurry)||_F^2.
double patch_mse(const std::vector<PatchPair>& dataset, const DeblurBackend& backend);

// ---- tiling ---------------------------------------------------------------

struct TileLayout {
  std::size_t height = 0;  // original image
  std::size_t width = 0;
  std::size_t core = 640;
  std::size_t overlap = 160;
  std::size_t padded_h = 0;  // multiple of core, plus 2 * overlap
  std::size_t padded_w = 0;
  std::size_t tile_rows = 0;
  std::size_t tile_cols = 0;
  std::vector<std::pair<std::size_t, std::size_t>> origins;  // row-major

  std::size_t extent() const { return core + 2 * overlap; }
};

TileLayout plan_tiles(std::size_t h, std::size_t w, std::size_t core, std::size_t overlap);

/// Blend weight at offset u inside a tile of extent core + 2*overlap: a
/// raised-cosine ramp over the 2*overlap pixels shared with each neighbour,
///   phi(u) = 1/2 - 1/2 cos(pi (u + 1/2) / (2 overlap)),
/// mirrored at the far edge, 1 in between.
double blend_weight(std::size_t u, std::size_t core, std::size_t overlap);

enum class Reassembly {
  none,   ///< core-sized tiles without context, stitched edge to edge
  crop,   ///< overlapping tiles, central core kept
  blend,  ///< overlapping tiles, normalised raised-cosine weighted sum
};

std::string to_string(Reassembly mode);
Reassembly parse_reassembly(const std::string& name);

struct TilingOptions {
  std::size_t core = 640;
  std::size_t overlap = 160;
  Reassembly reassembly = Reassembly::blend;
  std::size_t threads = 1;
};

/// Reflect-pads to the tile layout, deblurs every tile independently and
/// reassembles. Output has the input's size. Tiles may run on several
/// threads; accumulation order is fixed by tile index.
Image deblur_tiled(const Image& img, const DeblurBackend& backend, const TilingOptions& options);

// ---- metrics ----------------------------------------------------------------

/// PSNR in dB for a peak of 1 over the window that excludes `border`
/// pixels on every side.
double interior_psnr(const Image& estimate, const Image& reference, std::size_t border);

/// ||a - b|| / ||b|| over the same interior window.
double interior_relative_error(const Image& estimate, const Image& reference, std::size_t border);

}  // namespace dforge
