#include "deblur_forge/fft.hpp"

#include <fftw3.h>

#include <bit>
#include <mutex>
#include <stdexcept>

namespace dforge {

static_assert(sizeof(cplx) == sizeof(fftw_complex));

std::size_t next_pow2(std::size_t n) { return n <= 1 ? 1 : std::bit_ceil(n); }

namespace {
// The FFTW planner is not thread-safe; execution is.
std::mutex planner_mutex;
}  // namespace

void fft2d(ComplexGrid& grid, bool inverse) {
  if (grid.data.size() != grid.height * grid.width || grid.data.empty()) {
    throw std::invalid_argument("fft2d: grid shape does not match its data");
  }
  auto* buf = reinterpret_cast<fftw_complex*>(grid.data.data());
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex);
    plan = fftw_plan_dft_2d(static_cast<int>(grid.height), static_cast<int>(grid.width), buf, buf,
                            inverse ? FFTW_BACKWARD : FFTW_FORWARD, FFTW_ESTIMATE);
  }
  if (plan == nullptr) throw std::runtime_error("fft2d: FFTW could not plan the transform");
  fftw_execute(plan);
  {
    std::lock_guard lock(planner_mutex);
    fftw_destroy_plan(plan);
  }
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(grid.data.size());
    for (auto& v : grid.data) v *= scale;
  }
}

}  // namespace dforge
