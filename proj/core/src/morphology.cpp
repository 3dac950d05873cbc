#include "crseg/morphology.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace crseg {

namespace {

// 1D sliding extremum over one strided line, in place. The ring deque stores
// (position, value, provenance) copies, so writing out[i] at i = j-d never
// invalidates pending candidates. Pops use a strict comparison: on ties the
// earlier position stays in front, which realizes the first-occurrence
// tie-break rule.
template <typename T, bool kMax>
struct LinePass {
  std::vector<int> pos;
  std::vector<T> val;
  std::vector<std::int64_t> src;
  int head = 0, tail = 0;  // [head, tail)

  explicit LinePass(int d) : pos(2 * d + 2), val(2 * d + 2), src(2 * d + 2) {}

  static bool beats(T a, T b) { return kMax ? (a > b) : (a < b); }

  void run(T* line, std::int64_t* args, std::size_t stride, int len, int d) {
    head = tail = 0;
    const int cap = 2 * d + 2;
    for (int j = 0; j < len + d; ++j) {
      if (j < len) {
        const T v = line[static_cast<std::size_t>(j) * stride];
        while (tail > head && beats(v, val[(tail - 1) % cap])) --tail;
        const int slot = tail % cap;
        pos[slot] = j;
        val[slot] = v;
        if (args) src[slot] = args[static_cast<std::size_t>(j) * stride];
        ++tail;
      }
      const int i = j - d;
      if (i < 0) continue;
      while (pos[head % cap] < i - d) ++head;
      const int slot = head % cap;
      line[static_cast<std::size_t>(i) * stride] = val[slot];
      if (args) args[static_cast<std::size_t>(i) * stride] = src[slot];
    }
  }
};

template <typename T, bool kMax>
void sliding_window_extremum(const T* in, T* out, std::int64_t* arg, const std::array<int, 3>& dims,
                             int d) {
  WindowRadius{d}.validate();
  const int nx = dims[0], ny = dims[1], nz = dims[2];
  const std::size_t n = static_cast<std::size_t>(nx) * ny * nz;
  std::copy(in, in + n, out);
  if (arg) std::iota(arg, arg + n, std::int64_t{0});
  if (d == 0) return;

  const std::size_t sy = static_cast<std::size_t>(nx);
  const std::size_t sz = static_cast<std::size_t>(nx) * ny;
  LinePass<T, kMax> pass(d);

  // Pass order is fixed (x, then y, then z) so intermediates are reproducible
  // and the composed tie-break equals ascending (z, y, x) scan order.
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y) {
      const std::size_t base = sy * y + sz * z;
      pass.run(out + base, arg ? arg + base : nullptr, 1, nx, d);
    }
  for (int z = 0; z < nz; ++z)
    for (int x = 0; x < nx; ++x) {
      const std::size_t base = static_cast<std::size_t>(x) + sz * z;
      pass.run(out + base, arg ? arg + base : nullptr, sy, ny, d);
    }
  for (int y = 0; y < ny; ++y)
    for (int x = 0; x < nx; ++x) {
      const std::size_t base = static_cast<std::size_t>(x) + sy * y;
      pass.run(out + base, arg ? arg + base : nullptr, sz, nz, d);
    }
}

template <typename T, bool kMax>
void pool_naive_raw(const T* in, T* out, const std::array<int, 3>& dims, int d) {
  WindowRadius{d}.validate();
  const int nx = dims[0], ny = dims[1], nz = dims[2];
  std::size_t o = 0;
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x, ++o) {
        const int z0 = std::max(z - d, 0), z1 = std::min(z + d, nz - 1);
        const int y0 = std::max(y - d, 0), y1 = std::min(y + d, ny - 1);
        const int x0 = std::max(x - d, 0), x1 = std::min(x + d, nx - 1);
        T best = in[static_cast<std::size_t>(x0) +
                    static_cast<std::size_t>(nx) * (y0 + static_cast<std::size_t>(ny) * z0)];
        for (int k = z0; k <= z1; ++k)
          for (int j = y0; j <= y1; ++j) {
            const T* row =
                in + static_cast<std::size_t>(nx) * (j + static_cast<std::size_t>(ny) * k);
            for (int i = x0; i <= x1; ++i) {
              const T v = row[i];
              if (kMax ? (v > best) : (v < best)) best = v;
            }
          }
        out[o] = best;
      }
}

ScalarVolume like(const ScalarVolume& vol) {
  ScalarVolume out;
  out.geom = vol.geom;
  out.data.resize(vol.data.size());
  return out;
}

}  // namespace

void sliding_window_max(const float* in, float* out, std::int64_t* arg,
                        const std::array<int, 3>& dims, int d) {
  sliding_window_extremum<float, true>(in, out, arg, dims, d);
}
void sliding_window_max(const double* in, double* out, std::int64_t* arg,
                        const std::array<int, 3>& dims, int d) {
  sliding_window_extremum<double, true>(in, out, arg, dims, d);
}
void sliding_window_min(const float* in, float* out, std::int64_t* arg,
                        const std::array<int, 3>& dims, int d) {
  sliding_window_extremum<float, false>(in, out, arg, dims, d);
}
void sliding_window_min(const double* in, double* out, std::int64_t* arg,
                        const std::array<int, 3>& dims, int d) {
  sliding_window_extremum<double, false>(in, out, arg, dims, d);
}

ScalarVolume maxpool_naive(const ScalarVolume& vol, WindowRadius d) {
  ScalarVolume out = like(vol);
  pool_naive_raw<float, true>(vol.data.data(), out.data.data(), vol.geom.dims, d.d);
  return out;
}

ScalarVolume minpool_naive(const ScalarVolume& vol, WindowRadius d) {
  ScalarVolume out = like(vol);
  pool_naive_raw<float, false>(vol.data.data(), out.data.data(), vol.geom.dims, d.d);
  return out;
}

ScalarVolume maxpool_separable(const ScalarVolume& vol, WindowRadius d) {
  ScalarVolume out = like(vol);
  sliding_window_max(vol.data.data(), out.data.data(), nullptr, vol.geom.dims, d.d);
  return out;
}

ScalarVolume minpool_separable(const ScalarVolume& vol, WindowRadius d) {
  ScalarVolume out = like(vol);
  sliding_window_min(vol.data.data(), out.data.data(), nullptr, vol.geom.dims, d.d);
  return out;
}

ScalarVolume contour(const ScalarVolume& vol, WindowRadius d) {
  ScalarVolume hi = maxpool_separable(vol, d);
  const ScalarVolume lo = minpool_separable(vol, d);
  for (std::size_t i = 0; i < hi.data.size(); ++i) hi.data[i] -= lo.data[i];
  return hi;
}

std::pair<ScalarVolume, std::vector<std::int64_t>> maxpool_argmax(const ScalarVolume& vol,
                                                                  WindowRadius d) {
  ScalarVolume out = like(vol);
  std::vector<std::int64_t> arg(vol.data.size());
  sliding_window_max(vol.data.data(), out.data.data(), arg.data(), vol.geom.dims, d.d);
  return {std::move(out), std::move(arg)};
}

std::pair<ScalarVolume, std::vector<std::int64_t>> minpool_argmin(const ScalarVolume& vol,
                                                                  WindowRadius d) {
  ScalarVolume out = like(vol);
  std::vector<std::int64_t> arg(vol.data.size());
  sliding_window_min(vol.data.data(), out.data.data(), arg.data(), vol.geom.dims, d.d);
  return {std::move(out), std::move(arg)};
}

}  // namespace crseg
