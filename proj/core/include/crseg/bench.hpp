#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace crseg {

struct BenchRow {
  std::string impl;  // "naive" | "separable"
  int d = 0;
  std::array<int, 3> dims{0, 0, 0};
  double median_ns = 0.0;
};

/// Times maxpool_naive and maxpool_separable on a seeded random volume,
/// `reps` runs each; reports the median wall time per call.
std::vector<BenchRow> bench_maxpool(const std::array<int, 3>& dims, const std::vector<int>& d_list,
                                    int reps = 5, std::uint64_t seed = 1);

/// CSV with the exact header "impl,d,dims,median_ns"; dims as "NXxNYxNZ".
std::string bench_csv(const std::vector<BenchRow>& rows);

}  // namespace crseg
