#include "crseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

namespace crseg {

namespace {

constexpr double kFar = 1e20;  // effectively-infinite squared distance

// 1D lower envelope of parabolas (squared distance transform along one axis).
// Positions are grid indices, physical step s; f and d may alias only if
// f==d is not needed (we always use separate buffers).
void edt_1d(const double* f, double* d, int n, double s, std::vector<int>& v,
            std::vector<double>& z) {
  const double s2 = s * s;
  int k = 0;
  v[0] = 0;
  z[0] = -kFar;
  z[1] = kFar;
  for (int q = 1; q < n; ++q) {
    double sx;
    while (true) {
      const int r = v[k];
      sx = ((f[q] + s2 * q * q) - (f[r] + s2 * r * r)) / (2.0 * s2 * (q - r));
      if (sx <= z[k] && k > 0) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = sx;
    z[k + 1] = kFar;
  }
  k = 0;
  for (int p = 0; p < n; ++p) {
    while (z[k + 1] < p) ++k;
    const double dq = s * (p - v[k]);
    d[p] = dq * dq + f[v[k]];
  }
}

void require_same_geometry(const VolumeGeometry& a, const VolumeGeometry& b) {
  if (!(a == b)) throw ValidationError("geometry mismatch between masks");
}

struct DirectedStats {
  double max_dist = 0.0;
  double mean_dist = 0.0;
};

DirectedStats directed(const BinaryMask& from, const std::vector<double>& sq_to) {
  DirectedStats s;
  double sum = 0.0;
  std::size_t cnt = 0;
  for (std::size_t i = 0; i < from.data.size(); ++i) {
    if (!from.data[i]) continue;
    const double dist = std::sqrt(sq_to[i]);
    s.max_dist = std::max(s.max_dist, dist);
    sum += dist;
    ++cnt;
  }
  s.mean_dist = sum / static_cast<double>(cnt);
  return s;
}

struct DisjointSet {
  std::vector<std::int32_t> parent;

  std::int32_t make() {
    parent.push_back(static_cast<std::int32_t>(parent.size()));
    return parent.back();
  }
  std::int32_t find(std::int32_t a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  }
  void unite(std::int32_t a, std::int32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) parent[b] = a;  // keep the smaller root: deterministic
    else parent[a] = b;
  }
};

}  // namespace

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

BinaryMask class_mask(const LabelVolume& labels, int cls) {
  BinaryMask m;
  m.geom = labels.geom;
  m.data.resize(labels.data.size());
  for (std::size_t i = 0; i < labels.data.size(); ++i)
    m.data[i] = (labels.data[i] == cls) ? 1 : 0;
  return m;
}

double dsc(const BinaryMask& a, const BinaryMask& b) {
  require_same_geometry(a.geom, b.geom);
  std::size_t inter = 0, ca = 0, cb = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    ca += a.data[i];
    cb += b.data[i];
    inter += static_cast<std::size_t>(a.data[i] & b.data[i]);
  }
  if (ca + cb == 0) return 1.0;  // both empty: identical
  return 2.0 * static_cast<double>(inter) / static_cast<double>(ca + cb);
}

std::vector<double> squared_distance_field(const BinaryMask& mask) {
  mask.geom.validate();
  const int nx = mask.geom.dims[0], ny = mask.geom.dims[1], nz = mask.geom.dims[2];
  const std::size_t n = mask.geom.voxel_count();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = mask.data[i] ? 0.0 : kFar;

  const int nmax = std::max({nx, ny, nz});
  std::vector<double> line(nmax), out(nmax);
  std::vector<int> v(nmax);
  std::vector<double> z(nmax + 1);

  const std::size_t sy = static_cast<std::size_t>(nx);
  const std::size_t sz = static_cast<std::size_t>(nx) * ny;

  for (int zz = 0; zz < nz; ++zz)
    for (int y = 0; y < ny; ++y) {
      double* row = d.data() + sy * y + sz * zz;
      edt_1d(row, out.data(), nx, mask.geom.spacing[0], v, z);
      std::copy(out.begin(), out.begin() + nx, row);
    }
  for (int zz = 0; zz < nz; ++zz)
    for (int x = 0; x < nx; ++x) {
      double* col = d.data() + static_cast<std::size_t>(x) + sz * zz;
      for (int y = 0; y < ny; ++y) line[y] = col[sy * y];
      edt_1d(line.data(), out.data(), ny, mask.geom.spacing[1], v, z);
      for (int y = 0; y < ny; ++y) col[sy * y] = out[y];
    }
  for (int y = 0; y < ny; ++y)
    for (int x = 0; x < nx; ++x) {
      double* col = d.data() + static_cast<std::size_t>(x) + sy * y;
      for (int zz = 0; zz < nz; ++zz) line[zz] = col[sz * zz];
      edt_1d(line.data(), out.data(), nz, mask.geom.spacing[2], v, z);
      for (int zz = 0; zz < nz; ++zz) col[sz * zz] = out[zz];
    }
  return d;
}

double hausdorff(const BinaryMask& a, const BinaryMask& b) {
  require_same_geometry(a.geom, b.geom);
  if (a.empty() || b.empty()) throw ValidationError("hausdorff distance of an empty mask");
  const auto sq_a = squared_distance_field(a);
  const auto sq_b = squared_distance_field(b);
  return std::max(directed(a, sq_b).max_dist, directed(b, sq_a).max_dist);
}

double avg_hausdorff(const BinaryMask& a, const BinaryMask& b) {
  require_same_geometry(a.geom, b.geom);
  if (a.empty() || b.empty()) throw ValidationError("average hausdorff distance of an empty mask");
  const auto sq_a = squared_distance_field(a);
  const auto sq_b = squared_distance_field(b);
  return 0.5 * (directed(a, sq_b).mean_dist + directed(b, sq_a).mean_dist);
}

std::pair<int, std::vector<std::int32_t>> connected_components(const BinaryMask& mask,
                                                               int connectivity) {
  if (connectivity != 6 && connectivity != 26)
    throw ValidationError("connectivity must be 6 or 26");
  const int nx = mask.geom.dims[0], ny = mask.geom.dims[1], nz = mask.geom.dims[2];
  const std::size_t n = mask.geom.voxel_count();

  // Predecessor offsets in ascending (z, y, x) scan order.
  std::vector<std::array<int, 3>> offs;
  if (connectivity == 6) {
    offs = {{{-1, 0, 0}}, {{0, -1, 0}}, {{0, 0, -1}}};
  } else {
    for (int dz = -1; dz <= 0; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dz == 0 && (dy > 0 || (dy == 0 && dx >= 0))) continue;
          offs.push_back({dx, dy, dz});
        }
  }

  std::vector<std::int32_t> provisional(n, -1);
  DisjointSet ds;
  std::size_t idx = 0;
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x, ++idx) {
        if (!mask.data[idx]) continue;
        std::int32_t label = -1;
        for (const auto& o : offs) {
          const int px = x + o[0], py = y + o[1], pz = z + o[2];
          if (px < 0 || py < 0 || pz < 0 || px >= nx || py >= ny || pz >= nz) continue;
          const std::int32_t nl = provisional[mask.geom.flat(px, py, pz)];
          if (nl < 0) continue;
          if (label < 0) label = nl;
          else ds.unite(label, nl);
        }
        if (label < 0) label = ds.make();
        provisional[idx] = label;
      }

  // Compact roots to 1..count in first-touch order.
  std::vector<std::int32_t> remap(ds.parent.size(), 0);
  std::vector<std::int32_t> labels(n, 0);
  int count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (provisional[i] < 0) continue;
    const std::int32_t root = ds.find(provisional[i]);
    if (remap[root] == 0) remap[root] = ++count;
    labels[i] = remap[root];
  }
  return {count, std::move(labels)};
}

std::vector<std::string> default_class_names(int num_classes) {
  if (num_classes == 5) return {"background", "kidney", "tumor", "artery", "vein"};
  std::vector<std::string> names;
  names.reserve(num_classes);
  names.emplace_back("background");
  for (int c = 1; c < num_classes; ++c) names.push_back("class" + std::to_string(c));
  return names;
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [name, m] : rows) {
    nlohmann::ordered_json row;
    row["dsc"] = m.dsc;
    if (m.hd_mm) row["hd_mm"] = *m.hd_mm;
    else row["hd_mm"] = nullptr;
    if (m.avd_mm) row["avd_mm"] = *m.avd_mm;
    else row["avd_mm"] = nullptr;
    row["components"] = m.components;
    j[name] = row;
  }
  return j.dump();
}

std::string MetricsReport::to_table() const {
  char buf[160];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%-12s %8s %10s %10s %11s\n", "class", "dsc", "hd_mm",
                "avd_mm", "components");
  out += buf;
  for (const auto& [name, m] : rows) {
    char hd[32], avd[32];
    if (m.hd_mm) std::snprintf(hd, sizeof(hd), "%10.4f", *m.hd_mm);
    else std::snprintf(hd, sizeof(hd), "%10s", "undef");
    if (m.avd_mm) std::snprintf(avd, sizeof(avd), "%10.4f", *m.avd_mm);
    else std::snprintf(avd, sizeof(avd), "%10s", "undef");
    std::snprintf(buf, sizeof(buf), "%-12s %8.4f %s %s %11d\n", name.c_str(), m.dsc, hd, avd,
                  m.components);
    out += buf;
  }
  return out;
}

MetricsReport evaluate_labels(const LabelVolume& pred, const LabelVolume& gt,
                              const std::vector<std::string>& class_names) {
  require_same_geometry(pred.geom, gt.geom);
  if (pred.num_classes != gt.num_classes)
    throw ValidationError("prediction and ground truth class counts differ");
  const auto names = class_names.empty() ? default_class_names(pred.num_classes) : class_names;
  if (static_cast<int>(names.size()) != pred.num_classes)
    throw ValidationError("class name count != num_classes");

  MetricsReport report;
  for (int c = 1; c < pred.num_classes; ++c) {
    const BinaryMask pm = class_mask(pred, c);
    const BinaryMask gm = class_mask(gt, c);
    ClassMetrics m;
    m.dsc = dsc(pm, gm);
    if (!pm.empty() && !gm.empty()) {
      m.hd_mm = hausdorff(pm, gm);
      m.avd_mm = avg_hausdorff(pm, gm);
    }
    m.components = connected_components(pm).first;
    report.rows.emplace_back(names[c], m);
  }
  return report;
}

}  // namespace crseg
