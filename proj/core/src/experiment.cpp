#include "crseg/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <random>
#include <thread>

#include <json.hpp>

#include "rng_util.hpp"

namespace crseg {

namespace {

int chebyshev(const std::array<int, 3>& a, const std::array<int, 3>& b) {
  return std::max({std::abs(a[0] - b[0]), std::abs(a[1] - b[1]), std::abs(a[2] - b[2])});
}

double euclid(const std::array<int, 3>& a, const std::array<int, 3>& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

void paint_ball(LabelVolume& labels, const std::array<int, 3>& center, int radius,
                std::uint8_t value) {
  const auto& dims = labels.geom.dims;
  const int r2 = radius * radius;
  for (int z = std::max(center[2] - radius, 0); z <= std::min(center[2] + radius, dims[2] - 1); ++z)
    for (int y = std::max(center[1] - radius, 0); y <= std::min(center[1] + radius, dims[1] - 1); ++y)
      for (int x = std::max(center[0] - radius, 0); x <= std::min(center[0] + radius, dims[0] - 1); ++x) {
        const int dx = x - center[0], dy = y - center[1], dz = z - center[2];
        if (dx * dx + dy * dy + dz * dz <= r2) labels.at(x, y, z) = value;
      }
}

}  // namespace

void PhantomSpec::validate() const {
  VolumeGeometry g{dims, spacing};
  g.validate();
  if (organ_radius_vox < 2 || tumor_radius_vox < 1)
    throw ValidationError("phantom radii too small");
  if (tumor_radius_vox + 2 > organ_radius_vox)
    throw ValidationError("tumor radius must leave a shell inside the organ");
  for (int i = 0; i < 3; ++i) {
    const int c = dims[i] / 2;
    if (c - organ_radius_vox < 1 || c + organ_radius_vox > dims[i] - 2)
      throw ValidationError("organ radius does not fit inside dims");
  }
  if (speckle_count < 0) throw ValidationError("speckle_count must be >= 0");
  if (speckle_size_vox < 0) throw ValidationError("speckle_size_vox must be >= 0");
}

Phantom make_phantom(const PhantomSpec& spec) {
  spec.validate();
  const VolumeGeometry geom{spec.dims, spec.spacing};
  const std::size_t n = geom.voxel_count();

  Phantom ph;
  ph.clean.geom = geom;
  ph.clean.num_classes = 5;
  ph.clean.data.assign(n, 0);

  const std::array<int, 3> organ_center{spec.dims[0] / 2, spec.dims[1] / 2, spec.dims[2] / 2};
  // Tumor sits off-centre inside the organ, with at least a 1-voxel shell.
  const int m = spec.organ_radius_vox - spec.tumor_radius_vox - 1;
  const std::array<int, 3> tumor_center{
      organ_center[0] + static_cast<int>(m * 0.6),
      organ_center[1] - static_cast<int>(m * 0.4),
      organ_center[2] + static_cast<int>(m * 0.3)};

  paint_ball(ph.clean, organ_center, spec.organ_radius_vox, 1);
  paint_ball(ph.clean, tumor_center, spec.tumor_radius_vox, 2);

  std::mt19937_64 rng(spec.rng_seed);

  // Corrupted labels: clean plus isolated tumor speckles in the background.
  ph.corrupted = ph.clean;
  const int rs = spec.speckle_size_vox;
  std::vector<std::array<int, 3>> placed;
  for (int k = 0; k < spec.speckle_count; ++k) {
    bool ok = false;
    for (int attempt = 0; attempt < 10000 && !ok; ++attempt) {
      std::array<int, 3> c;
      for (int i = 0; i < 3; ++i)
        c[i] = rs + static_cast<int>(rngutil::below(rng, spec.dims[i] - 2 * rs));
      if (euclid(c, organ_center) < spec.organ_radius_vox + rs + 4) continue;
      bool clash = false;
      for (const auto& p : placed)
        if (chebyshev(c, p) < 2 * rs + 2) { clash = true; break; }
      if (clash) continue;
      paint_ball(ph.corrupted, c, rs, 2);
      placed.push_back(c);
      ok = true;
    }
    if (!ok)
      throw ValidationError("phantom geometry overflow: cannot place speckle " +
                            std::to_string(k + 1) + " of " + std::to_string(spec.speckle_count));
  }

  // CT-like intensities: class-dependent mean plus noise, plus a sprinkle of
  // extreme outliers for the percentile-clipping path to act on.
  ph.intensity.geom = geom;
  ph.intensity.data.resize(n);
  static constexpr double kMeans[3] = {40.0, 120.0, 90.0};
  for (std::size_t i = 0; i < n; ++i) {
    const double mean = kMeans[ph.clean.data[i]];
    ph.intensity.data[i] = static_cast<float>(mean + 8.0 * rngutil::normal(rng));
  }
  const std::size_t outliers = std::max<std::size_t>(n / 200, 2);
  for (std::size_t k = 0; k < outliers; ++k) {
    const auto at = static_cast<std::size_t>(rngutil::below(rng, static_cast<std::int64_t>(n)));
    ph.intensity.data[at] = static_cast<float>(-1000.0 + 3000.0 * rngutil::unit(rng));
  }
  return ph;
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ValidationError("learning_rate must be positive and finite");
  if (iterations < 1) throw ValidationError("iterations must be >= 1");
}

namespace {

// Fixed-step descent on total_loss, continuing from the given iterate.
void descend(LogitField& z, std::vector<LossReport>& trace, const LabelVolume& targets,
             const LossConfig& loss_cfg, double step, int iterations) {
  for (int it = 0; it < iterations; ++it) {
    auto [report, grad] = total_loss(z, targets, loss_cfg);
    if (!std::isfinite(report.total))
      throw NumericError("optimization diverged at iteration " + std::to_string(it));
    trace.push_back(report);
    for (std::size_t i = 0; i < grad.size(); ++i) z.data[i] -= step * grad[i];
  }
}

}  // namespace

OptimizeResult optimize_logits(const LabelVolume& targets, const LossConfig& loss_cfg,
                               const OptimizerConfig& opt_cfg) {
  loss_cfg.validate();
  opt_cfg.validate();
  targets.validate();

  OptimizeResult res;
  res.logits = LogitField::zeros(targets.geom, loss_cfg.num_classes);
  res.trace.reserve(opt_cfg.iterations);
  descend(res.logits, res.trace, targets, loss_cfg, opt_cfg.learning_rate, opt_cfg.iterations);
  return res;
}

std::string StudyReport::to_json() const {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["alpha"] = r.alpha;
    j["seed"] = r.seed;
    j["dsc_tumor"] = r.dsc_tumor;
    if (r.hd_mm) j["hd_mm"] = *r.hd_mm;
    else j["hd_mm"] = nullptr;
    if (r.avd_mm) j["avd_mm"] = *r.avd_mm;
    else j["avd_mm"] = nullptr;
    j["components"] = r.components;
    arr.push_back(j);
  }
  return arr.dump();
}

std::string StudyReport::to_table() const {
  char buf[160];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%8s %6s %10s %10s %10s %11s\n", "alpha", "seed", "dsc_tumor",
                "hd_mm", "avd_mm", "components");
  out += buf;
  for (const auto& r : rows) {
    char hd[32], avd[32];
    if (r.hd_mm) std::snprintf(hd, sizeof(hd), "%10.4f", *r.hd_mm);
    else std::snprintf(hd, sizeof(hd), "%10s", "undef");
    if (r.avd_mm) std::snprintf(avd, sizeof(avd), "%10.4f", *r.avd_mm);
    else std::snprintf(avd, sizeof(avd), "%10s", "undef");
    std::snprintf(buf, sizeof(buf), "%8.3g %6llu %10.4f %s %s %11d\n", r.alpha,
                  static_cast<unsigned long long>(r.seed), r.dsc_tumor, hd, avd, r.components);
    out += buf;
  }
  return out;
}

StudyReport run_outlier_study(const PhantomSpec& spec, const std::vector<double>& alphas,
                              const LossConfig& loss_cfg, const OptimizerConfig& opt_cfg,
                              int jobs, double fit_fraction, double refine_step_scale) {
  if (alphas.empty() || std::none_of(alphas.begin(), alphas.end(), [](double a) { return a == 0.0; }))
    throw ValidationError("alpha sweep must include 0 as the baseline");
  if (!(fit_fraction >= 0.0 && fit_fraction < 1.0))
    throw ValidationError("fit_fraction must be in [0, 1)");
  if (!(refine_step_scale > 0.0)) throw ValidationError("refine_step_scale must be > 0");
  loss_cfg.validate();
  opt_cfg.validate();

  const Phantom ph = make_phantom(spec);
  const BinaryMask clean_tumor = class_mask(ph.clean, loss_cfg.cr_class);

  // Shared fit phase at alpha = 0; each sweep entry refines from this state.
  const int fit_iters = static_cast<int>(opt_cfg.iterations * fit_fraction);
  const int refine_iters = opt_cfg.iterations - fit_iters;
  LossConfig fit_cfg = loss_cfg;
  fit_cfg.alpha = 0.0;
  LogitField fitted = LogitField::zeros(ph.corrupted.geom, loss_cfg.num_classes);
  {
    std::vector<LossReport> fit_trace;
    descend(fitted, fit_trace, ph.corrupted, fit_cfg, opt_cfg.learning_rate, fit_iters);
  }

  StudyReport report;
  report.rows.resize(alphas.size());

  auto run_one = [&](std::size_t i) {
    LossConfig cfg = loss_cfg;
    cfg.alpha = alphas[i];
    LogitField z = fitted;
    std::vector<LossReport> trace;
    descend(z, trace, ph.corrupted, cfg, opt_cfg.learning_rate * refine_step_scale, refine_iters);
    const LabelVolume pred = argmax_labels(z);
    const BinaryMask pred_tumor = class_mask(pred, cfg.cr_class);

    StudyRow row;
    row.alpha = alphas[i];
    row.seed = spec.rng_seed;
    row.dsc_tumor = dsc(pred_tumor, clean_tumor);
    if (!pred_tumor.empty() && !clean_tumor.empty()) {
      row.hd_mm = hausdorff(pred_tumor, clean_tumor);
      row.avd_mm = avg_hausdorff(pred_tumor, clean_tumor);
    }
    row.components = connected_components(pred_tumor).first;
    report.rows[i] = row;
  };

  if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(alphas.size())));
  if (jobs == 1) {
    for (std::size_t i = 0; i < alphas.size(); ++i) run_one(i);
  } else {
    std::vector<std::future<void>> futs;
    for (int w = 0; w < jobs; ++w)
      futs.push_back(std::async(std::launch::async, [&, w]() {
        for (std::size_t i = static_cast<std::size_t>(w); i < alphas.size(); i += jobs) run_one(i);
      }));
    for (auto& f : futs) f.get();
  }
  return report;
}

}  // namespace crseg
