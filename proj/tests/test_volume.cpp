#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include <unistd.h>

#include "crseg/volume.hpp"

using namespace crseg;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static int counter = 0;
  fs::path p = fs::temp_directory_path() / ("crseg_vol_test_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter++));
  fs::create_directories(p);
  return p;
}

ScalarVolume random_scalar(std::array<int, 3> dims, std::uint64_t seed, float lo = -100.0f,
                           float hi = 300.0f) {
  ScalarVolume v;
  v.geom = VolumeGeometry{dims, {1.0, 1.0, 1.0}};
  v.data.resize(v.geom.voxel_count());
  std::mt19937_64 rng(seed);
  for (auto& x : v.data)
    x = lo + (hi - lo) * static_cast<float>((rng() >> 11) * 0x1.0p-53);
  return v;
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(bool(in));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Sort-based clip oracle: bounds are the order statistics at ceil/floor of
// the fractional percentile ranks, clamped elementwise.
ScalarVolume clip_oracle(const ScalarVolume& v, double lo, double hi) {
  std::vector<float> sorted(v.data);
  std::sort(sorted.begin(), sorted.end());
  const auto n = sorted.size();
  const double idx_lo = lo / 100.0 * double(n - 1);
  const double idx_hi = hi / 100.0 * double(n - 1);
  const float lo_val = sorted[static_cast<std::size_t>(std::ceil(idx_lo))];
  const float hi_val = sorted[static_cast<std::size_t>(std::floor(idx_hi))];
  ScalarVolume out = v;
  for (auto& x : out.data) x = std::clamp(x, lo_val, hi_val);
  return out;
}

}  // namespace

TEST_CASE("scalar volume round-trips bit-exactly") {
  const auto dir = temp_dir();
  ScalarVolume v = random_scalar({8, 8, 8}, 42);
  v.geom.spacing = {0.5, 0.75, 1.25};
  save_volume(v, (dir / "vol").string());

  const ScalarVolume r = load_scalar_volume((dir / "vol.json").string());
  CHECK(r.geom == v.geom);
  CHECK(r.data == v.data);

  // save the reload and compare raw payload bytes
  save_volume(r, (dir / "vol2").string());
  CHECK(read_bytes(dir / "vol.raw") == read_bytes(dir / "vol2.raw"));
}

TEST_CASE("label volume round-trips and validates range") {
  const auto dir = temp_dir();
  LabelVolume l;
  l.geom = VolumeGeometry{{4, 3, 2}, {1, 1, 1}};
  l.num_classes = 5;
  l.data = std::vector<std::uint8_t>(24, 0);
  l.data[5] = 4;
  l.data[7] = 2;
  save_volume(l, (dir / "lab").string());
  const LabelVolume r = load_label_volume((dir / "lab").string());
  CHECK(r.data == l.data);

  // a 7 in the payload is out of range for 5 classes
  l.data[3] = 7;
  CHECK_THROWS_AS(save_volume(l, (dir / "bad").string()), ValidationError);
  std::ofstream(dir / "bad7.json") << R"({"dims":[1,1,1],"spacing_mm":[1,1,1],"dtype":"u8","order":"x-fastest"})";
  std::ofstream(dir / "bad7.raw", std::ios::binary).put(char(7));
  CHECK_THROWS_AS(load_label_volume((dir / "bad7").string()), ValidationError);
}

TEST_CASE("load_volume dispatches on dtype and rejects bad files") {
  const auto dir = temp_dir();
  ScalarVolume v = random_scalar({2, 2, 2}, 7);
  save_volume(v, (dir / "s").string());
  CHECK(std::holds_alternative<ScalarVolume>(load_volume((dir / "s").string())));

  SUBCASE("missing header") {
    CHECK_THROWS_AS(load_scalar_volume((dir / "nope").string()), IoError);
  }
  SUBCASE("length mismatch: dims say 8 values, payload has 7") {
    std::ofstream(dir / "short.json")
        << R"({"dims":[2,2,2],"spacing_mm":[1,1,1],"dtype":"f32","order":"x-fastest"})";
    std::ofstream out(dir / "short.raw", std::ios::binary);
    for (int i = 0; i < 7; ++i) {
      const float f = 1.0f;
      out.write(reinterpret_cast<const char*>(&f), 4);
    }
    out.close();
    CHECK_THROWS_AS(load_scalar_volume((dir / "short").string()), IoError);
  }
  SUBCASE("unknown dtype") {
    std::ofstream(dir / "odd.json")
        << R"({"dims":[1,1,1],"spacing_mm":[1,1,1],"dtype":"i16","order":"x-fastest"})";
    std::ofstream(dir / "odd.raw", std::ios::binary).write("\0\0", 2);
    CHECK_THROWS_AS(load_volume((dir / "odd").string()), IoError);
  }
  SUBCASE("NaN in scalar payload") {
    std::ofstream(dir / "nan.json")
        << R"({"dims":[1,1,1],"spacing_mm":[1,1,1],"dtype":"f32","order":"x-fastest"})";
    const float f = std::numeric_limits<float>::quiet_NaN();
    std::ofstream(dir / "nan.raw", std::ios::binary)
        .write(reinterpret_cast<const char*>(&f), 4);
    CHECK_THROWS_AS(load_scalar_volume((dir / "nan").string()), ValidationError);
  }
  SUBCASE("corrupt header json") {
    std::ofstream(dir / "junk.json") << "{not json";
    CHECK_THROWS_AS(load_scalar_volume((dir / "junk").string()), IoError);
  }
}

TEST_CASE("constant volume payload is 64 identical words") {
  const auto dir = temp_dir();
  ScalarVolume v;
  v.geom = VolumeGeometry{{4, 4, 4}, {1, 1, 1}};
  v.data.assign(64, 1.0f);
  save_volume(v, (dir / "c").string());
  const auto bytes = read_bytes(dir / "c.raw");
  REQUIRE(bytes.size() == 256);
  for (std::size_t i = 0; i < 64; ++i)
    CHECK(std::memcmp(bytes.data() + 4 * i, bytes.data(), 4) == 0);
  const float one = 1.0f;
  CHECK(std::memcmp(bytes.data(), &one, 4) == 0);
}

TEST_CASE("save to empty path is an I/O error") {
  ScalarVolume v = random_scalar({2, 2, 2}, 1);
  CHECK_THROWS_AS(save_volume(v, ""), IoError);
}

TEST_CASE("percentile_clip basics") {
  SUBCASE("constant volume unchanged") {
    ScalarVolume v;
    v.geom = VolumeGeometry{{5, 5, 5}, {1, 1, 1}};
    v.data.assign(125, 3.5f);
    CHECK(percentile_clip(v, 0.5, 99.5).data == v.data);
  }
  SUBCASE("full range unchanged") {
    ScalarVolume v = random_scalar({6, 6, 6}, 3);
    CHECK(percentile_clip(v, 0.0, 100.0).data == v.data);
  }
  SUBCASE("lo >= hi rejected") {
    ScalarVolume v = random_scalar({4, 4, 4}, 3);
    CHECK_THROWS_AS(percentile_clip(v, 60.0, 40.0), ValidationError);
    CHECK_THROWS_AS(percentile_clip(v, 50.0, 50.0), ValidationError);
  }
}

TEST_CASE("percentile_clip on 1..1000 matches the sort oracle") {
  ScalarVolume v;
  v.geom = VolumeGeometry{{10, 10, 10}, {1, 1, 1}};
  v.data.resize(1000);
  for (int i = 0; i < 1000; ++i) v.data[i] = float(i + 1);
  std::mt19937_64 rng(5);
  std::shuffle(v.data.begin(), v.data.end(), rng);

  const auto [lo, hi] = percentile_bounds(v.data, 0.5, 99.5);
  // rank ceil(0.005*999)=5 -> value 6; rank floor(0.995*999)=994 -> value 995
  CHECK(lo == 6.0f);
  CHECK(hi == 995.0f);

  const ScalarVolume c = percentile_clip(v, 0.5, 99.5);
  CHECK(c.data == clip_oracle(v, 0.5, 99.5).data);

  // every output lies within the interpolated percentile band [5.995, 995.005]
  const auto [mn, mx] = std::minmax_element(c.data.begin(), c.data.end());
  CHECK(*mn >= 5.995);
  CHECK(*mx <= 995.005);
}

TEST_CASE("percentile_clip properties on random volumes") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const int nx = 3 + int(rng() % 8), ny = 3 + int(rng() % 8), nz = 3 + int(rng() % 8);
    ScalarVolume v = random_scalar({nx, ny, nz}, rng());
    if (trial % 3 == 0) {  // inject duplicates so ties are exercised
      for (std::size_t i = 0; i + 1 < v.data.size(); i += 2) v.data[i + 1] = v.data[i];
    }
    const ScalarVolume c = percentile_clip(v, 0.5, 99.5);

    CHECK(c.data == clip_oracle(v, 0.5, 99.5).data);
    CHECK(percentile_clip(c, 0.5, 99.5).data == c.data);  // idempotent, exactly

    // monotone: clamping with one band preserves voxelwise order
    for (std::size_t i = 0; i + 1 < v.data.size(); ++i) {
      if (v.data[i] <= v.data[i + 1]) CHECK(c.data[i] <= c.data[i + 1]);
      else CHECK(c.data[i] >= c.data[i + 1]);
    }

    // values already inside the band are unchanged
    const auto [lo, hi] = percentile_bounds(v.data, 0.5, 99.5);
    for (std::size_t i = 0; i < v.data.size(); ++i) {
      if (v.data[i] >= lo && v.data[i] <= hi) CHECK(c.data[i] == v.data[i]);
    }
  }
}

TEST_CASE("geometry invariants") {
  CHECK_THROWS_AS(VolumeGeometry({0, 2, 2}, {1, 1, 1}).validate(), ValidationError);
  CHECK_THROWS_AS(VolumeGeometry({2, 2, 2}, {0.0, 1, 1}).validate(), ValidationError);
  ScalarVolume v;
  v.geom = VolumeGeometry{{2, 2, 2}, {1, 1, 1}};
  v.data.assign(7, 0.0f);  // wrong length
  CHECK_THROWS_AS(v.validate(), ValidationError);
}
