#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "crseg/error.hpp"

namespace crseg {

/// Grid dimensions plus physical voxel spacing in millimetres.
/// Data attached to a geometry is stored flat in x-fastest order:
/// flat = x + nx * (y + ny * z).
struct VolumeGeometry {
  std::array<int, 3> dims{0, 0, 0};           // nx, ny, nz
  std::array<double, 3> spacing{1.0, 1.0, 1.0};  // sx, sy, sz [mm]

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
           static_cast<std::size_t>(dims[2]);
  }

  std::size_t flat(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(z));
  }

  void validate() const;

  bool operator==(const VolumeGeometry&) const = default;
};

/// 3D grid of 32-bit reals. Values must be finite.
struct ScalarVolume {
  VolumeGeometry geom;
  std::vector<float> data;

  float at(int x, int y, int z) const { return data[geom.flat(x, y, z)]; }
  float& at(int x, int y, int z) { return data[geom.flat(x, y, z)]; }

  void validate() const;
};

/// 3D grid of 8-bit class IDs, each < num_classes.
/// Default class map: 0=background, 1=kidney, 2=tumor, 3=artery, 4=vein.
struct LabelVolume {
  VolumeGeometry geom;
  std::vector<std::uint8_t> data;
  int num_classes = 5;

  std::uint8_t at(int x, int y, int z) const { return data[geom.flat(x, y, z)]; }
  std::uint8_t& at(int x, int y, int z) { return data[geom.flat(x, y, z)]; }

  void validate() const;
};

// --- File I/O ---------------------------------------------------------------
//
// A volume on disk is a pair of files sharing a stem:
//   <stem>.json   header: {"dims":[nx,ny,nz],"spacing_mm":[sx,sy,sz],
//                          "dtype":"f32"|"u8","order":"x-fastest"}
//   <stem>.raw    payload: raw little-endian values, no header bytes.
//
// Paths may be given as the stem or as either file; a trailing ".json" /
// ".raw" is stripped.

void save_volume(const ScalarVolume& vol, const std::string& path);
void save_volume(const LabelVolume& vol, const std::string& path);

ScalarVolume load_scalar_volume(const std::string& path);
LabelVolume load_label_volume(const std::string& path, int num_classes = 5);

/// Loads whichever of the two volume kinds the header declares.
std::variant<ScalarVolume, LabelVolume> load_volume(const std::string& path, int num_classes = 5);

// --- Preprocessing ----------------------------------------------------------

/// Clip bounds for percentiles (lo, hi) in percent, as actual data values:
/// the order statistics at ranks ceil(lo/100*(n-1)) and floor(hi/100*(n-1)).
/// Snapping the interpolated percentile inward to data values keeps the
/// operation exactly idempotent.
std::pair<float, float> percentile_bounds(const std::vector<float>& values, double lo, double hi);

/// Clamps every voxel into the percentile band computed over the whole volume.
ScalarVolume percentile_clip(const ScalarVolume& vol, double lo = 0.5, double hi = 99.5);

}  // namespace crseg
