#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace dforge {

using cplx = std::complex<double>;

std::size_t next_pow2(std::size_t n);

/// Row-major complex grid; any side lengths.
struct ComplexGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<cplx> data;

  ComplexGrid(std::size_t h, std::size_t w) : height(h), width(w), data(h * w) {}
  cplx& operator()(std::size_t r, std::size_t c) { return data[r * width + c]; }
  const cplx& operator()(std::size_t r, std::size_t c) const { return data[r * width + c]; }
};

/// In-place 2-D DFT (FFTW). Forward uses exp(-2 pi i k n / N); the inverse is
/// scaled by 1/(height*width). Safe to call from several threads at once;
/// plans are made with FFTW_ESTIMATE so results do not depend on timing.
void fft2d(ComplexGrid& grid, bool inverse);

}  // namespace dforge
