#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include "crseg/morphology.hpp"

using namespace crseg;

namespace {

ScalarVolume make_volume(std::array<int, 3> dims, float fill = 0.0f) {
  ScalarVolume v;
  v.geom = VolumeGeometry{dims, {1.0, 1.0, 1.0}};
  v.data.assign(v.geom.voxel_count(), fill);
  return v;
}

ScalarVolume random_volume(std::array<int, 3> dims, std::uint64_t seed) {
  ScalarVolume v = make_volume(dims);
  std::mt19937_64 rng(seed);
  for (auto& x : v.data) x = static_cast<float>((rng() >> 11) * 0x1.0p-53);
  return v;
}

// Values on the grid k/1024: complements and dyadic scalings stay exact.
ScalarVolume random_dyadic(std::array<int, 3> dims, std::uint64_t seed) {
  ScalarVolume v = make_volume(dims);
  std::mt19937_64 rng(seed);
  for (auto& x : v.data) x = static_cast<float>(rng() % 1025) / 1024.0f;
  return v;
}

// Window scan oracle for the argmax contract: first occurrence in ascending
// (z, y, x) order, i.e. the smallest flat index among maxima.
std::pair<float, std::int64_t> window_argmax(const ScalarVolume& v, int x, int y, int z, int d) {
  const auto& dims = v.geom.dims;
  float best = -std::numeric_limits<float>::infinity();
  std::int64_t arg = -1;
  for (int k = std::max(z - d, 0); k <= std::min(z + d, dims[2] - 1); ++k)
    for (int j = std::max(y - d, 0); j <= std::min(y + d, dims[1] - 1); ++j)
      for (int i = std::max(x - d, 0); i <= std::min(x + d, dims[0] - 1); ++i) {
        const float val = v.at(i, j, k);
        if (val > best) {
          best = val;
          arg = static_cast<std::int64_t>(v.geom.flat(i, j, k));
        }
      }
  return {best, arg};
}

}  // namespace

TEST_CASE("maxpool trivia") {
  SUBCASE("constant stays constant") {
    const ScalarVolume v = make_volume({6, 5, 4}, 2.25f);
    for (int d : {0, 1, 3}) {
      CHECK(maxpool_naive(v, WindowRadius{d}).data == v.data);
      CHECK(maxpool_separable(v, WindowRadius{d}).data == v.data);
    }
  }
  SUBCASE("d=0 is the identity") {
    const ScalarVolume v = random_volume({7, 6, 5}, 11);
    CHECK(maxpool_naive(v, WindowRadius{0}).data == v.data);
    CHECK(maxpool_separable(v, WindowRadius{0}).data == v.data);
    CHECK(minpool_separable(v, WindowRadius{0}).data == v.data);
  }
  SUBCASE("spike dilates to its 3x3x3 window") {
    ScalarVolume v = make_volume({7, 7, 7});
    v.at(3, 3, 3) = 1.0f;
    const ScalarVolume m = maxpool_separable(v, WindowRadius{1});
    for (int z = 0; z < 7; ++z)
      for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 7; ++x) {
          const bool in_block =
              std::abs(x - 3) <= 1 && std::abs(y - 3) <= 1 && std::abs(z - 3) <= 1;
          CHECK(m.at(x, y, z) == (in_block ? 1.0f : 0.0f));
        }
  }
  SUBCASE("negative radius rejected") { CHECK_THROWS_AS(WindowRadius{-1}.validate(), ValidationError); }
}

TEST_CASE("separable kernel is bitwise identical to the naive oracle") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 24; ++trial) {
    const std::array<int, 3> dims{2 + int(rng() % 15), 2 + int(rng() % 15), 2 + int(rng() % 15)};
    const ScalarVolume v = random_volume(dims, rng());
    for (int d : {1, 2, 3}) {
      CHECK(maxpool_separable(v, WindowRadius{d}).data == maxpool_naive(v, WindowRadius{d}).data);
      CHECK(minpool_separable(v, WindowRadius{d}).data == minpool_naive(v, WindowRadius{d}).data);
    }
  }
  // the 16^3 case named explicitly
  const ScalarVolume v16 = random_volume({16, 16, 16}, 999);
  for (int d : {1, 2, 3})
    CHECK(maxpool_separable(v16, WindowRadius{d}).data == maxpool_naive(v16, WindowRadius{d}).data);
}

TEST_CASE("contour examples") {
  SUBCASE("constant volume has zero contour") {
    const ScalarVolume v = make_volume({5, 5, 5}, 0.7f);
    const ScalarVolume c = contour(v, WindowRadius{2});
    CHECK(std::all_of(c.data.begin(), c.data.end(), [](float x) { return x == 0.0f; }));
  }
  SUBCASE("half-space step gives a 2-voxel band") {
    ScalarVolume v = make_volume({9, 5, 5});
    const int step_at = 4;  // x >= 4 is 1
    for (int z = 0; z < 5; ++z)
      for (int y = 0; y < 5; ++y)
        for (int x = step_at; x < 9; ++x) v.at(x, y, z) = 1.0f;
    const ScalarVolume c = contour(v, WindowRadius{1});
    for (int z = 0; z < 5; ++z)
      for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 9; ++x) {
          const bool band = (x == step_at - 1 || x == step_at);
          CHECK(c.at(x, y, z) == (band ? 1.0f : 0.0f));
        }
  }
  SUBCASE("spike contour covers the 3x3x3 neighborhood") {
    ScalarVolume v = make_volume({7, 7, 7});
    v.at(3, 3, 3) = 1.0f;
    const ScalarVolume c = contour(v, WindowRadius{1});
    for (int z = 0; z < 7; ++z)
      for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 7; ++x) {
          const bool in_block =
              std::abs(x - 3) <= 1 && std::abs(y - 3) <= 1 && std::abs(z - 3) <= 1;
          CHECK(c.at(x, y, z) == (in_block ? 1.0f : 0.0f));
        }
  }
}

TEST_CASE("argmax selection and tie-breaks") {
  SUBCASE("ramp along x picks the max-x in-bounds voxel, ties to min y/z") {
    ScalarVolume v = make_volume({8, 3, 3});
    for (int z = 0; z < 3; ++z)
      for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 8; ++x) v.at(x, y, z) = float(x);
    const auto [m, arg] = maxpool_argmax(v, WindowRadius{1});
    (void)m;
    for (int z = 0; z < 3; ++z)
      for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 8; ++x) {
          // max value sits at x+1 (clipped); equal across the window's y/z,
          // so the first occurrence in (z, y, x) order wins
          const int ex = std::min(x + 1, 7), ey = std::max(y - 1, 0), ez = std::max(z - 1, 0);
          CHECK(arg[v.geom.flat(x, y, z)] == std::int64_t(v.geom.flat(ex, ey, ez)));
        }
  }
  SUBCASE("constant volume picks the smallest window index") {
    const ScalarVolume v = make_volume({5, 4, 4}, 1.0f);
    const auto [m, arg] = maxpool_argmax(v, WindowRadius{1});
    (void)m;
    for (int z = 0; z < 4; ++z)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 5; ++x) {
          const std::size_t expected =
              v.geom.flat(std::max(x - 1, 0), std::max(y - 1, 0), std::max(z - 1, 0));
          CHECK(arg[v.geom.flat(x, y, z)] == std::int64_t(expected));
        }
  }
  SUBCASE("random volumes agree with the window-scan oracle") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 8; ++trial) {
      const std::array<int, 3> dims{2 + int(rng() % 9), 2 + int(rng() % 9), 2 + int(rng() % 9)};
      ScalarVolume v = random_volume(dims, rng());
      if (trial % 2 == 0) {  // quantize to force ties through the tie-break rule
        for (auto& x : v.data) x = std::round(x * 4.0f) / 4.0f;
      }
      const int d = 1 + int(rng() % 3);
      const auto [m, arg] = maxpool_argmax(v, WindowRadius{d});
      for (int z = 0; z < dims[2]; ++z)
        for (int y = 0; y < dims[1]; ++y)
          for (int x = 0; x < dims[0]; ++x) {
            const auto [val, idx] = window_argmax(v, x, y, z, d);
            CHECK(m.at(x, y, z) == val);
            CHECK(arg[v.geom.flat(x, y, z)] == idx);
          }
    }
  }
}

TEST_CASE("morphology properties") {
  std::mt19937_64 rng(47);

  SUBCASE("dilation semigroup: pool(pool(v,d1),d2) == pool(v,d1+d2)") {
    for (int trial = 0; trial < 20; ++trial) {
      const std::array<int, 3> dims{3 + int(rng() % 10), 3 + int(rng() % 10), 3 + int(rng() % 10)};
      const ScalarVolume v = random_volume(dims, rng());
      const int d1 = int(rng() % 3), d2 = int(rng() % 3);
      const ScalarVolume two_step =
          maxpool_separable(maxpool_separable(v, WindowRadius{d1}), WindowRadius{d2});
      CHECK(two_step.data == maxpool_separable(v, WindowRadius{d1 + d2}).data);
    }
  }

  SUBCASE("complement symmetry: contour(p) == contour(1-p)") {
    for (int trial = 0; trial < 20; ++trial) {
      const ScalarVolume p = random_dyadic({7, 6, 5}, rng());
      ScalarVolume q = p;
      for (auto& x : q.data) x = 1.0f - x;
      const int d = 1 + int(rng() % 2);
      CHECK(contour(p, WindowRadius{d}).data == contour(q, WindowRadius{d}).data);
    }
  }

  SUBCASE("positive homogeneity for power-of-two scales") {
    for (float a : {0.0f, 0.25f, 0.5f, 2.0f, 4.0f}) {
      const ScalarVolume p = random_dyadic({6, 6, 6}, 1234);
      ScalarVolume scaled = p;
      for (auto& x : scaled.data) x *= a;
      ScalarVolume expect = contour(p, WindowRadius{1});
      for (auto& x : expect.data) x *= a;
      CHECK(contour(scaled, WindowRadius{1}).data == expect.data);
    }
  }

  SUBCASE("monotone in d and bounded by the global range") {
    for (int trial = 0; trial < 10; ++trial) {
      const ScalarVolume p = random_volume({8, 7, 6}, rng());
      const auto [mn, mx] = std::minmax_element(p.data.begin(), p.data.end());
      const float range = *mx - *mn;
      ScalarVolume prev = contour(p, WindowRadius{0});
      for (int d = 1; d <= 3; ++d) {
        const ScalarVolume cur = contour(p, WindowRadius{d});
        for (std::size_t i = 0; i < cur.data.size(); ++i) {
          CHECK(cur.data[i] >= prev.data[i]);
          CHECK(cur.data[i] >= 0.0f);
          CHECK(cur.data[i] <= range);
        }
        prev = cur;
      }
    }
  }

  SUBCASE("translation equivariance on interior voxels") {
    const int d = 2;
    const ScalarVolume v = random_volume({12, 11, 10}, 77);
    ScalarVolume shifted = make_volume(v.geom.dims);
    // shift content by +1 in x; compare interiors at distance >= d+1 from faces
    for (int z = 0; z < 10; ++z)
      for (int y = 0; y < 11; ++y)
        for (int x = 1; x < 12; ++x) shifted.at(x, y, z) = v.at(x - 1, y, z);
    const ScalarVolume cv = contour(v, WindowRadius{d});
    const ScalarVolume cs = contour(shifted, WindowRadius{d});
    for (int z = d + 1; z < 10 - d - 1; ++z)
      for (int y = d + 1; y < 11 - d - 1; ++y)
        for (int x = d + 2; x < 12 - d - 1; ++x)
          CHECK(cs.at(x, y, z) == cv.at(x - 1, y, z));
  }
}
