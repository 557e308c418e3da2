#pragma once

#include <filesystem>
#include <stdexcept>

#include "deblur_forge/image.hpp"

namespace dforge {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class BitDepth { k8 = 8, k16 = 16 };

/// Reads a PNG (gray, gray+alpha, RGB, RGBA, palette; 1-16 bit) or binary
/// PGM (P5). Intensities are scaled linearly to [0, 1]; color is reduced
/// with luma weights (0.299, 0.587, 0.114) and alpha is ignored.
Image load_image(const std::filesystem::path& path);

/// Writes a grayscale PNG or PGM chosen by extension (.png, .pgm). Values
/// are clipped to [0, 1] and rounded to the nearest code.
void save_image(const Image& img, const std::filesystem::path& path, BitDepth depth = BitDepth::k8);

}  // namespace dforge
