#include "crseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include <json.hpp>

#include "rng_util.hpp"

namespace crseg {

namespace {

void require_same_geometry(const VolumeGeometry& a, const VolumeGeometry& b) {
  if (!(a == b)) throw ValidationError("geometry mismatch between prediction and labels");
}

// Backpropagates a gradient w.r.t. probabilities through the softmax
// Jacobian: dz_c = p_c * (dp_c - sum_k dp_k * p_k), per voxel.
std::vector<double> chain_through_softmax(const ProbField& p, const std::vector<double>& dp) {
  const std::size_t n = p.geom.voxel_count();
  const int c_count = p.num_classes;
  std::vector<double> dz(dp.size(), 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    double s = 0.0;
    for (int c = 0; c < c_count; ++c) s += dp[c * n + v] * p.data[c * n + v];
    for (int c = 0; c < c_count; ++c) {
      const double pc = p.data[c * n + v];
      dz[c * n + v] = pc * (dp[c * n + v] - s);
    }
  }
  return dz;
}

}  // namespace

LogitField LogitField::zeros(const VolumeGeometry& geom, int num_classes) {
  geom.validate();
  if (num_classes < 2) throw ValidationError("logit field needs >= 2 classes");
  LogitField f;
  f.geom = geom;
  f.num_classes = num_classes;
  f.data.assign(geom.voxel_count() * static_cast<std::size_t>(num_classes), 0.0);
  return f;
}

void LogitField::validate() const {
  geom.validate();
  if (num_classes < 2) throw ValidationError("logit field needs >= 2 classes");
  if (data.size() != geom.voxel_count() * static_cast<std::size_t>(num_classes))
    throw ValidationError("logit field data length != C*N");
  for (double v : data) {
    if (!std::isfinite(v)) throw ValidationError("logit field contains non-finite values");
  }
}

void ProbField::validate() const {
  geom.validate();
  if (num_classes < 2) throw ValidationError("probability field needs >= 2 classes");
  const std::size_t n = geom.voxel_count();
  if (data.size() != n * static_cast<std::size_t>(num_classes))
    throw ValidationError("probability field data length != C*N");
  for (double v : data) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("probability outside [0,1]");
  }
  for (std::size_t v = 0; v < n; ++v) {
    double s = 0.0;
    for (int c = 0; c < num_classes; ++c) s += data[c * n + v];
    if (std::abs(s - 1.0) > 1e-6) throw ValidationError("per-voxel class sum != 1");
  }
}

void LossConfig::validate() const {
  d.validate();
  if (num_classes < 2) throw ValidationError("loss config needs >= 2 classes");
  if (cr_class < 0 || cr_class >= num_classes)
    throw ValidationError("cr_class out of range");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ValidationError("alpha must be >= 0");
  if (!(dice_eps > 0.0)) throw ValidationError("dice_eps must be > 0");
}

std::string LossReport::to_json() const {
  nlohmann::ordered_json j;
  j["dice"] = dice;
  j["ce"] = ce;
  j["cr"] = cr;
  j["alpha"] = alpha;
  j["total"] = total;
  return j.dump();
}

ProbField softmax(const LogitField& logits) {
  const std::size_t n = logits.geom.voxel_count();
  const int c_count = logits.num_classes;
  ProbField p;
  p.geom = logits.geom;
  p.num_classes = c_count;
  p.data.resize(logits.data.size());
  for (std::size_t v = 0; v < n; ++v) {
    double m = logits.data[v];
    for (int c = 1; c < c_count; ++c) m = std::max(m, logits.data[c * n + v]);
    double sum = 0.0;
    for (int c = 0; c < c_count; ++c) {
      const double e = std::exp(logits.data[c * n + v] - m);
      p.data[c * n + v] = e;
      sum += e;
    }
    for (int c = 0; c < c_count; ++c) p.data[c * n + v] /= sum;
  }
  return p;
}

LabelVolume argmax_labels(const ProbField& p) {
  const std::size_t n = p.geom.voxel_count();
  LabelVolume out;
  out.geom = p.geom;
  out.num_classes = p.num_classes;
  out.data.resize(n);
  for (std::size_t v = 0; v < n; ++v) {
    int best = 0;
    double best_val = p.data[v];
    for (int c = 1; c < p.num_classes; ++c) {
      const double val = p.data[c * n + v];
      if (val > best_val) {
        best_val = val;
        best = c;
      }
    }
    out.data[v] = static_cast<std::uint8_t>(best);
  }
  return out;
}

LabelVolume argmax_labels(const LogitField& logits) {
  const std::size_t n = logits.geom.voxel_count();
  LabelVolume out;
  out.geom = logits.geom;
  out.num_classes = logits.num_classes;
  out.data.resize(n);
  for (std::size_t v = 0; v < n; ++v) {
    int best = 0;
    double best_val = logits.data[v];
    for (int c = 1; c < logits.num_classes; ++c) {
      const double val = logits.data[c * n + v];
      if (val > best_val) {
        best_val = val;
        best = c;
      }
    }
    out.data[v] = static_cast<std::uint8_t>(best);
  }
  return out;
}

ValueGrad dice_loss(const ProbField& p, const LabelVolume& y, const LossConfig& cfg) {
  cfg.validate();
  require_same_geometry(p.geom, y.geom);
  if (p.num_classes != cfg.num_classes) throw ValidationError("probability field class count != config");
  const std::size_t n = p.geom.voxel_count();
  const int c_count = cfg.num_classes;
  const double eps = cfg.dice_eps;

  ValueGrad out;
  out.grad.assign(p.data.size(), 0.0);

  double mean_term = 0.0;
  for (int c = 1; c < c_count; ++c) {
    const double* pc = p.data.data() + static_cast<std::size_t>(c) * n;
    double inter = 0.0, psum = 0.0, ysum = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      const double yv = (y.data[v] == c) ? 1.0 : 0.0;
      inter += pc[v] * yv;
      psum += pc[v];
      ysum += yv;
    }
    const double num = 2.0 * inter + eps;
    const double den = psum + ysum + eps;
    mean_term += num / den;

    double* gc = out.grad.data() + static_cast<std::size_t>(c) * n;
    const double den2 = den * den;
    const double scale = -1.0 / static_cast<double>(c_count - 1);
    for (std::size_t v = 0; v < n; ++v) {
      const double yv = (y.data[v] == c) ? 1.0 : 0.0;
      gc[v] = scale * (2.0 * yv * den - num) / den2;
    }
  }
  out.value = 1.0 - mean_term / static_cast<double>(c_count - 1);
  return out;
}

ValueGrad cross_entropy_loss(const LogitField& logits, const LabelVolume& y) {
  require_same_geometry(logits.geom, y.geom);
  if (y.num_classes > logits.num_classes)
    throw ValidationError("label classes exceed logit field classes");
  const std::size_t n = logits.geom.voxel_count();
  const int c_count = logits.num_classes;
  const double inv_n = 1.0 / static_cast<double>(n);

  ValueGrad out;
  out.grad.assign(logits.data.size(), 0.0);
  double sum = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    double m = logits.data[v];
    for (int c = 1; c < c_count; ++c) m = std::max(m, logits.data[c * n + v]);
    double es = 0.0;
    for (int c = 0; c < c_count; ++c) es += std::exp(logits.data[c * n + v] - m);
    const double lse = m + std::log(es);
    sum += lse - logits.data[static_cast<std::size_t>(y.data[v]) * n + v];
    for (int c = 0; c < c_count; ++c) {
      const double pc = std::exp(logits.data[c * n + v] - lse);
      out.grad[c * n + v] = (pc - (y.data[v] == c ? 1.0 : 0.0)) * inv_n;
    }
  }
  out.value = sum * inv_n;
  return out;
}

ValueGrad cr_loss(const ProbField& p, const LossConfig& cfg) {
  cfg.validate();
  if (p.num_classes != cfg.num_classes) throw ValidationError("probability field class count != config");
  const std::size_t n = p.geom.voxel_count();
  const std::size_t t = static_cast<std::size_t>(cfg.cr_class);
  const double* pt = p.data.data() + t * n;

  std::vector<double> hi(n), lo(n);
  std::vector<std::int64_t> amax(n), amin(n);
  sliding_window_max(pt, hi.data(), amax.data(), p.geom.dims, cfg.d.d);
  sliding_window_min(pt, lo.data(), amin.data(), p.geom.dims, cfg.d.d);

  double sumsq = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    const double g = hi[v] - lo[v];
    hi[v] = g;  // reuse as the contour map
    sumsq += g * g;
  }
  const double norm = std::sqrt(sumsq);

  ValueGrad out;
  out.value = norm;
  out.grad.assign(p.data.size(), 0.0);
  // d||g||/dg_v = g_v / ||g||, guarded so a flat field gets a zero gradient
  // rather than 0/0. Each window routes +/- that weight to its extrema.
  const double denom = std::max(norm, 1e-12);
  double* gt = out.grad.data() + t * n;
  for (std::size_t v = 0; v < n; ++v) {
    const double w = hi[v] / denom;
    gt[static_cast<std::size_t>(amax[v])] += w;
    gt[static_cast<std::size_t>(amin[v])] -= w;
  }
  return out;
}

std::pair<LossReport, std::vector<double>> total_loss(const LogitField& logits, const LabelVolume& y,
                                                      const LossConfig& cfg) {
  cfg.validate();
  require_same_geometry(logits.geom, y.geom);
  if (logits.num_classes != cfg.num_classes)
    throw ValidationError("logit field class count != config");

  const ProbField p = softmax(logits);
  ValueGrad dice = dice_loss(p, y, cfg);
  ValueGrad ce = cross_entropy_loss(logits, y);
  ValueGrad cr = cr_loss(p, cfg);

  LossReport report;
  report.dice = dice.value;
  report.ce = ce.value;
  report.cr = cr.value;
  report.alpha = cfg.alpha;
  report.total = dice.value + ce.value + cfg.alpha * cr.value;

  // The two p-space gradients are chained separately so the CR contribution
  // is exactly alpha times its alpha=1 value.
  std::vector<double> grad = chain_through_softmax(p, dice.grad);
  if (cfg.alpha != 0.0) {
    const std::vector<double> cr_z = chain_through_softmax(p, cr.grad);
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += cfg.alpha * cr_z[i];
  }
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += ce.grad[i];
  return {report, std::move(grad)};
}

double finite_diff_check(const std::function<double(const LogitField&)>& f,
                         const std::vector<double>& analytic_grad, const LogitField& at, double h,
                         int samples, std::uint64_t seed) {
  if (!(h > 0.0)) throw ValidationError("finite-difference step must be > 0");
  if (analytic_grad.size() != at.data.size())
    throw ValidationError("gradient length != field length");

  const std::size_t total = at.data.size();
  std::vector<std::size_t> coords(total);
  for (std::size_t i = 0; i < total; ++i) coords[i] = i;
  const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(std::max(samples, 1)), total);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < m; ++i) {
    // partial Fisher-Yates; uniform pick without std::uniform_int_distribution
    // so the sampled set is identical on every platform
    const std::size_t span = total - i;
    std::size_t pick = i + static_cast<std::size_t>(rng() % span);
    std::swap(coords[i], coords[pick]);
  }

  LogitField probe = at;
  double worst = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t k = coords[i];
    const double orig = probe.data[k];
    probe.data[k] = orig + h;
    const double f_plus = f(probe);
    probe.data[k] = orig - h;
    const double f_minus = f(probe);
    probe.data[k] = orig;
    const double fd = (f_plus - f_minus) / (2.0 * h);
    const double an = analytic_grad[k];
    const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
    worst = std::max(worst, std::abs(fd - an) / denom);
  }
  return worst;
}

double finite_diff_check(const LogitField& logits, const LabelVolume& y, const LossConfig& cfg,
                         double h, int samples, std::uint64_t seed) {
  auto [report, grad] = total_loss(logits, y, cfg);
  (void)report;
  auto f = [&y, &cfg](const LogitField& z) { return total_loss(z, y, cfg).first.total; };
  return finite_diff_check(f, grad, logits, h, samples, seed);
}

LogitField random_logits(const VolumeGeometry& geom, int num_classes, std::uint64_t seed,
                         double scale) {
  LogitField f = LogitField::zeros(geom, num_classes);
  std::mt19937_64 rng(seed);
  for (auto& v : f.data) v = scale * rngutil::normal(rng);
  return f;
}

LabelVolume random_labels(const VolumeGeometry& geom, int num_classes, std::uint64_t seed) {
  geom.validate();
  LabelVolume y;
  y.geom = geom;
  y.num_classes = num_classes;
  y.data.resize(geom.voxel_count());
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  for (auto& v : y.data) v = static_cast<std::uint8_t>(rngutil::below(rng, num_classes));
  return y;
}

void save_logit_field(const LogitField& logits, const std::string& stem) {
  logits.validate();
  const std::size_t n = logits.geom.voxel_count();
  for (int c = 0; c < logits.num_classes; ++c) {
    ScalarVolume vol;
    vol.geom = logits.geom;
    vol.data.resize(n);
    for (std::size_t v = 0; v < n; ++v)
      vol.data[v] = static_cast<float>(logits.data[static_cast<std::size_t>(c) * n + v]);
    save_volume(vol, stem + ".c" + std::to_string(c));
  }
}

LogitField load_logit_field(const std::string& stem, int expect_classes) {
  namespace fs = std::filesystem;
  int c_count = 0;
  while (fs::exists(stem + ".c" + std::to_string(c_count) + ".json")) ++c_count;
  if (c_count < 2)
    throw IoError("logit field " + stem + ": need at least <stem>.c0 and <stem>.c1 volumes");
  if (expect_classes > 0 && expect_classes != c_count)
    throw ValidationError("logit field " + stem + " has " + std::to_string(c_count) +
                          " classes, expected " + std::to_string(expect_classes));

  LogitField f;
  for (int c = 0; c < c_count; ++c) {
    const ScalarVolume vol = load_scalar_volume(stem + ".c" + std::to_string(c));
    if (c == 0) {
      f = LogitField::zeros(vol.geom, c_count);
    } else if (!(vol.geom == f.geom)) {
      throw ValidationError("logit field " + stem + ": class volumes disagree on geometry");
    }
    const std::size_t n = f.geom.voxel_count();
    for (std::size_t v = 0; v < n; ++v)
      f.data[static_cast<std::size_t>(c) * n + v] = static_cast<double>(vol.data[v]);
  }
  return f;
}

}  // namespace crseg
