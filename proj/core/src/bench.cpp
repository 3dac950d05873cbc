#include "crseg/bench.hpp"

#include <algorithm>
#include <chrono>
#include <random>

#include "crseg/morphology.hpp"
#include "rng_util.hpp"

namespace crseg {

namespace {

ScalarVolume random_volume(const std::array<int, 3>& dims, std::uint64_t seed) {
  ScalarVolume vol;
  vol.geom = VolumeGeometry{dims, {1.0, 1.0, 1.0}};
  vol.data.resize(vol.geom.voxel_count());
  std::mt19937_64 rng(seed);
  for (auto& v : vol.data) v = static_cast<float>(rngutil::unit(rng));
  return vol;
}

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace

std::vector<BenchRow> bench_maxpool(const std::array<int, 3>& dims, const std::vector<int>& d_list,
                                    int reps, std::uint64_t seed) {
  if (reps < 1) throw ValidationError("reps must be >= 1");
  const ScalarVolume vol = random_volume(dims, seed);
  volatile float sink = 0.0f;  // keep the calls observable

  std::vector<BenchRow> rows;
  for (int d : d_list) {
    WindowRadius{d}.validate();
    for (const char* impl : {"naive", "separable"}) {
      std::vector<double> times;
      times.reserve(reps);
      for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        const ScalarVolume out = (impl[0] == 'n') ? maxpool_naive(vol, WindowRadius{d})
                                                  : maxpool_separable(vol, WindowRadius{d});
        const auto t1 = std::chrono::steady_clock::now();
        sink = sink + out.data[out.data.size() / 2];
        times.push_back(
            static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
      }
      rows.push_back(BenchRow{impl, d, dims, median(times)});
    }
  }
  (void)sink;
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::string out = "impl,d,dims,median_ns\n";
  for (const auto& r : rows) {
    out += r.impl;
    out += ',';
    out += std::to_string(r.d);
    out += ',';
    out += std::to_string(r.dims[0]) + "x" + std::to_string(r.dims[1]) + "x" + std::to_string(r.dims[2]);
    out += ',';
    out += std::to_string(static_cast<long long>(r.median_ns));
    out += '\n';
  }
  return out;
}

}  // namespace crseg
