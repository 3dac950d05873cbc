#include "crseg/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace crseg {

static_assert(std::endian::native == std::endian::little,
              "raw payloads are little-endian; big-endian hosts need byte swaps");

namespace {

namespace fs = std::filesystem;

std::string strip_volume_ext(const std::string& path) {
  if (path.ends_with(".json")) return path.substr(0, path.size() - 5);
  if (path.ends_with(".raw")) return path.substr(0, path.size() - 4);
  return path;
}

nlohmann::ordered_json read_header(const std::string& stem) {
  const std::string hdr_path = stem + ".json";
  std::ifstream in(hdr_path);
  if (!in) throw IoError("cannot open volume header: " + hdr_path);
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt volume header " + hdr_path + ": " + e.what());
  }
  for (const char* key : {"dims", "spacing_mm", "dtype", "order"}) {
    if (!j.contains(key)) throw IoError("volume header " + hdr_path + " missing key \"" + key + "\"");
  }
  if (j["order"].get<std::string>() != "x-fastest")
    throw IoError("unsupported storage order in " + hdr_path);
  return j;
}

VolumeGeometry geometry_from_header(const nlohmann::ordered_json& j) {
  VolumeGeometry g;
  auto dims = j["dims"];
  auto spacing = j["spacing_mm"];
  if (!dims.is_array() || dims.size() != 3 || !spacing.is_array() || spacing.size() != 3)
    throw IoError("volume header dims/spacing_mm must be 3-element arrays");
  for (int i = 0; i < 3; ++i) {
    g.dims[i] = dims[i].get<int>();
    g.spacing[i] = spacing[i].get<double>();
  }
  g.validate();
  return g;
}

std::vector<char> read_payload(const std::string& stem, std::size_t expected_bytes) {
  const std::string raw_path = stem + ".raw";
  std::ifstream in(raw_path, std::ios::binary);
  if (!in) throw IoError("cannot open volume payload: " + raw_path);
  in.seekg(0, std::ios::end);
  const auto actual = static_cast<std::size_t>(in.tellg());
  if (actual != expected_bytes)
    throw IoError(raw_path + ": payload length " + std::to_string(actual) + " != expected " +
                  std::to_string(expected_bytes));
  in.seekg(0);
  std::vector<char> bytes(expected_bytes);
  in.read(bytes.data(), static_cast<std::streamsize>(expected_bytes));
  if (!in) throw IoError("short read on " + raw_path);
  return bytes;
}

void write_files(const std::string& path, const VolumeGeometry& geom, const char* dtype,
                 const void* payload, std::size_t payload_bytes) {
  if (path.empty()) throw IoError("empty volume path");
  const std::string stem = strip_volume_ext(path);

  nlohmann::ordered_json j;
  j["dims"] = geom.dims;
  j["spacing_mm"] = geom.spacing;
  j["dtype"] = dtype;
  j["order"] = "x-fastest";

  std::ofstream hdr(stem + ".json");
  if (!hdr) throw IoError("cannot write volume header: " + stem + ".json");
  hdr << j.dump(2) << "\n";
  if (!hdr.flush()) throw IoError("write failure on " + stem + ".json");

  std::ofstream raw(stem + ".raw", std::ios::binary);
  if (!raw) throw IoError("cannot write volume payload: " + stem + ".raw");
  raw.write(static_cast<const char*>(payload), static_cast<std::streamsize>(payload_bytes));
  if (!raw.flush()) throw IoError("write failure on " + stem + ".raw");
}

}  // namespace

void VolumeGeometry::validate() const {
  for (int i = 0; i < 3; ++i) {
    if (dims[i] <= 0) throw ValidationError("volume dims must be positive");
    if (!(spacing[i] > 0.0) || !std::isfinite(spacing[i]))
      throw ValidationError("voxel spacing must be positive and finite");
  }
}

void ScalarVolume::validate() const {
  geom.validate();
  if (data.size() != geom.voxel_count())
    throw ValidationError("scalar volume data length != nx*ny*nz");
  for (float v : data) {
    if (!std::isfinite(v)) throw ValidationError("scalar volume contains non-finite values");
  }
}

void LabelVolume::validate() const {
  geom.validate();
  if (num_classes < 2) throw ValidationError("label volume needs >= 2 classes");
  if (data.size() != geom.voxel_count())
    throw ValidationError("label volume data length != nx*ny*nz");
  for (std::uint8_t v : data) {
    if (v >= num_classes)
      throw ValidationError("label value " + std::to_string(int(v)) + " out of range for " +
                            std::to_string(num_classes) + " classes");
  }
}

void save_volume(const ScalarVolume& vol, const std::string& path) {
  vol.validate();
  write_files(path, vol.geom, "f32", vol.data.data(), vol.data.size() * sizeof(float));
}

void save_volume(const LabelVolume& vol, const std::string& path) {
  vol.validate();
  write_files(path, vol.geom, "u8", vol.data.data(), vol.data.size());
}

ScalarVolume load_scalar_volume(const std::string& path) {
  const std::string stem = strip_volume_ext(path);
  auto j = read_header(stem);
  if (j["dtype"].get<std::string>() != "f32")
    throw IoError(stem + ".json: expected dtype \"f32\", got \"" + j["dtype"].get<std::string>() + "\"");
  ScalarVolume vol;
  vol.geom = geometry_from_header(j);
  auto bytes = read_payload(stem, vol.geom.voxel_count() * sizeof(float));
  vol.data.resize(vol.geom.voxel_count());
  std::memcpy(vol.data.data(), bytes.data(), bytes.size());
  for (float v : vol.data) {
    if (!std::isfinite(v)) throw ValidationError(stem + ".raw: NaN or Inf in scalar payload");
  }
  return vol;
}

LabelVolume load_label_volume(const std::string& path, int num_classes) {
  const std::string stem = strip_volume_ext(path);
  auto j = read_header(stem);
  if (j["dtype"].get<std::string>() != "u8")
    throw IoError(stem + ".json: expected dtype \"u8\", got \"" + j["dtype"].get<std::string>() + "\"");
  LabelVolume vol;
  vol.geom = geometry_from_header(j);
  vol.num_classes = num_classes;
  auto bytes = read_payload(stem, vol.geom.voxel_count());
  vol.data.assign(bytes.begin(), bytes.end());
  vol.validate();
  return vol;
}

std::variant<ScalarVolume, LabelVolume> load_volume(const std::string& path, int num_classes) {
  const std::string stem = strip_volume_ext(path);
  auto j = read_header(stem);
  const std::string dtype = j["dtype"].get<std::string>();
  if (dtype == "f32") return load_scalar_volume(path);
  if (dtype == "u8") return load_label_volume(path, num_classes);
  throw IoError(stem + ".json: unknown dtype \"" + dtype + "\"");
}

std::pair<float, float> percentile_bounds(const std::vector<float>& values, double lo, double hi) {
  if (values.empty()) throw ValidationError("percentile of empty value set");
  if (!(lo >= 0.0 && lo < hi && hi <= 100.0))
    throw ValidationError("percentile bounds need 0 <= lo < hi <= 100");

  const auto n = values.size();
  const double idx_lo = lo / 100.0 * static_cast<double>(n - 1);
  const double idx_hi = hi / 100.0 * static_cast<double>(n - 1);
  auto r_lo = static_cast<std::size_t>(std::ceil(idx_lo));
  auto r_hi = static_cast<std::size_t>(std::floor(idx_hi));
  if (r_lo > r_hi) {
    // No order statistic inside the band (only possible for tiny n); collapse
    // to the single nearest rank so the result stays data-valued.
    r_lo = r_hi = static_cast<std::size_t>(std::llround((idx_lo + idx_hi) / 2.0));
  }

  std::vector<float> sorted(values);
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(r_lo), sorted.end());
  const float lo_val = sorted[r_lo];
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(r_hi), sorted.end());
  const float hi_val = sorted[r_hi];
  return {lo_val, hi_val};
}

ScalarVolume percentile_clip(const ScalarVolume& vol, double lo, double hi) {
  vol.validate();
  const auto [lo_val, hi_val] = percentile_bounds(vol.data, lo, hi);
  ScalarVolume out;
  out.geom = vol.geom;
  out.data.resize(vol.data.size());
  for (std::size_t i = 0; i < vol.data.size(); ++i)
    out.data[i] = std::clamp(vol.data[i], lo_val, hi_val);
  return out;
}

}  // namespace crseg
