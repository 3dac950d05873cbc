#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "crseg/volume.hpp"

namespace crseg {

struct BinaryMask {
  VolumeGeometry geom;
  std::vector<std::uint8_t> data;  // 0 or 1

  std::size_t count() const;
  bool empty() const { return count() == 0; }
};

/// Mask of voxels labelled `cls`.
BinaryMask class_mask(const LabelVolume& labels, int cls);

/// 2|A∩B| / (|A|+|B|). Two empty masks compare as identical: 1.0.
double dsc(const BinaryMask& a, const BinaryMask& b);

/// Maximum over both directions of the farthest nearest-neighbour distance
/// between foreground voxel centres, in mm. Both masks must be non-empty.
double hausdorff(const BinaryMask& a, const BinaryMask& b);

/// Symmetric average Hausdorff distance: the two directed mean
/// nearest-neighbour distances, averaged. Both masks must be non-empty.
double avg_hausdorff(const BinaryMask& a, const BinaryMask& b);

/// Squared Euclidean distance (mm^2) from every voxel to the nearest
/// foreground voxel of the mask, by separable lower-envelope transform.
std::vector<double> squared_distance_field(const BinaryMask& mask);

/// Count and label maximal connected foreground components. Labels are
/// assigned 1..count in first-touch order of an ascending flat scan.
/// connectivity is 6 (faces) or 26 (faces+edges+corners).
std::pair<int, std::vector<std::int32_t>> connected_components(const BinaryMask& mask,
                                                               int connectivity = 26);

struct ClassMetrics {
  double dsc = 0.0;
  std::optional<double> hd_mm;   // absent when either mask is empty
  std::optional<double> avd_mm;  // absent when either mask is empty
  int components = 0;            // connected components of the predicted mask
};

struct MetricsReport {
  std::vector<std::pair<std::string, ClassMetrics>> rows;

  /// {"<class>": {"dsc":…, "hd_mm":…, "avd_mm":…, "components":…}, …}
  /// Undefined distances serialize as null.
  std::string to_json() const;
  /// Aligned plain-text table; undefined distances print as "undef".
  std::string to_table() const;
};

/// Default names for the 5-class KiPA-style label map; generic names
/// ("class1", …) for any other class count.
std::vector<std::string> default_class_names(int num_classes);

/// Per-foreground-class DSC/HD/AVD plus component count of the prediction.
MetricsReport evaluate_labels(const LabelVolume& pred, const LabelVolume& gt,
                              const std::vector<std::string>& class_names = {});

}  // namespace crseg
