#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "crseg/volume.hpp"

namespace crseg {

/// Cubic window of extent 2d+1 per axis, clipped to the volume bounds.
struct WindowRadius {
  int d = 1;
  void validate() const {
    if (d < 0) throw ValidationError("window radius must be >= 0");
  }
};

/// Windowed maximum by direct window scan. O(N * (2d+1)^3); reference
/// implementation the fast kernel is tested against.
ScalarVolume maxpool_naive(const ScalarVolume& vol, WindowRadius d);

/// Windowed maximum via three 1D monotonic-queue passes (x, then y, then z).
/// O(N) independent of d; bitwise identical to maxpool_naive.
ScalarVolume maxpool_separable(const ScalarVolume& vol, WindowRadius d);

ScalarVolume minpool_naive(const ScalarVolume& vol, WindowRadius d);
ScalarVolume minpool_separable(const ScalarVolume& vol, WindowRadius d);

/// Windowed max minus windowed min (a morphological gradient). Non-negative;
/// zero exactly on windows with no variation.
ScalarVolume contour(const ScalarVolume& vol, WindowRadius d);

/// Windowed maximum plus, per voxel, the flat index of the selected maximum.
/// Ties go to the first occurrence in ascending (z, y, x) scan order, i.e.
/// the smallest flat index.
std::pair<ScalarVolume, std::vector<std::int64_t>> maxpool_argmax(const ScalarVolume& vol, WindowRadius d);
std::pair<ScalarVolume, std::vector<std::int64_t>> minpool_argmin(const ScalarVolume& vol, WindowRadius d);

// Raw strided kernels over plain fields; the loss module runs these on
// double-precision probability fields. `arg` may be null. in/out must not
// alias.
void sliding_window_max(const float* in, float* out, std::int64_t* arg,
                        const std::array<int, 3>& dims, int d);
void sliding_window_max(const double* in, double* out, std::int64_t* arg,
                        const std::array<int, 3>& dims, int d);
void sliding_window_min(const float* in, float* out, std::int64_t* arg,
                        const std::array<int, 3>& dims, int d);
void sliding_window_min(const double* in, double* out, std::int64_t* arg,
                        const std::array<int, 3>& dims, int d);

}  // namespace crseg
