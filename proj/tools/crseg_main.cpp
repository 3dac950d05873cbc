// crseg: command-line front end for the contour-regularization loss toolkit.
//
// Subcommands: clip, contour, loss, gradcheck, metrics, bench, study.
// Reports go to stdout, diagnostics to stderr. Exit codes: 0 success,
// 1 validation, 2 I/O, 3 numeric failure.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "crseg/bench.hpp"
#include "crseg/experiment.hpp"
#include "crseg/losses.hpp"
#include "crseg/metrics.hpp"
#include "crseg/morphology.hpp"
#include "crseg/volume.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Applies config-file values to options the user did not pass on the command
// line, so flags win over the file and the file wins over built-in defaults.
class ConfigBinder {
 public:
  template <typename T>
  void bind(CLI::Option* opt, const std::string& key, T& target) {
    appliers_.push_back([opt, key, &target](const ordered_json& j) {
      if (opt->count() == 0 && j.contains(key)) target = j.at(key).get<T>();
    });
  }

  void apply_file(const std::string& path) const {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw crseg::IoError("cannot open config file: " + path);
    ordered_json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw crseg::IoError("config file " + path + ": " + e.what());
    }
    for (const auto& f : appliers_) f(j);
  }

 private:
  std::vector<std::function<void(const ordered_json&)>> appliers_;
};

std::array<int, 3> expand_dims(const std::vector<int>& dims) {
  if (dims.size() == 1) return {dims[0], dims[0], dims[0]};
  if (dims.size() == 3) return {dims[0], dims[1], dims[2]};
  throw crseg::ValidationError("--dims takes 1 or 3 values");
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw crseg::IoError("cannot write " + path.string());
  out << content;
  if (!out.flush()) throw crseg::IoError("write failure on " + path.string());
}

double median_of(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

struct ClipArgs {
  std::string input, output;
  double lo = 0.5, hi = 99.5;
};

struct ContourArgs {
  std::string input, output;
  int d = 1;
};

struct LossArgs {
  std::string logits_stem, labels_path, config_path;
  crseg::LossConfig cfg;
  int num_classes_flag = 0;  // 0 = take the class count from the files
  ConfigBinder binder;
};

struct GradcheckArgs {
  std::vector<int> dims{6, 6, 6};
  int classes = 3;
  int d = 1;
  double alpha = 1.0;
  int cr_class = -1;  // -1 = min(2, classes-1)
  std::uint64_t seed = 1;
  double h = 1e-3;
  int samples = 200;
  double threshold = 1e-4;
  bool corrupt = false;
};

struct MetricsArgs {
  std::string pred_path, gt_path;
  int classes = 5;
  std::string format = "json";
};

struct BenchArgs {
  std::vector<int> dims{64};
  std::vector<int> d_list{0, 1, 2, 3};
  int reps = 5;
  std::uint64_t seed = 1;
};

struct StudyArgs {
  std::string config_path, out_dir = "study_out";
  std::vector<double> alphas{0.0, 0.5, 1.0, 2.0, 4.0};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  int jobs = 0;
  crseg::PhantomSpec phantom;
  crseg::LossConfig loss;
  crseg::OptimizerConfig opt;
  std::vector<int> phantom_dims{48};
  ConfigBinder binder;
};

void run_clip(const ClipArgs& a) {
  const crseg::ScalarVolume vol = crseg::load_scalar_volume(a.input);
  const auto [lo_val, hi_val] = crseg::percentile_bounds(vol.data, a.lo, a.hi);
  crseg::ScalarVolume out = crseg::percentile_clip(vol, a.lo, a.hi);
  crseg::save_volume(out, a.output);
  std::cerr << "clip: [" << lo_val << ", " << hi_val << "] -> " << a.output << "\n";
}

void run_contour(const ContourArgs& a) {
  const crseg::ScalarVolume vol = crseg::load_scalar_volume(a.input);
  crseg::ScalarVolume out = crseg::contour(vol, crseg::WindowRadius{a.d});
  crseg::save_volume(out, a.output);
}

void run_loss(LossArgs& a) {
  a.binder.apply_file(a.config_path);
  crseg::LogitField logits = crseg::load_logit_field(a.logits_stem, a.num_classes_flag);
  a.cfg.num_classes = logits.num_classes;
  const crseg::LabelVolume labels = crseg::load_label_volume(a.labels_path, logits.num_classes);
  auto [report, grad] = crseg::total_loss(logits, labels, a.cfg);
  (void)grad;
  std::cout << report.to_json() << "\n";
}

void run_gradcheck(const GradcheckArgs& a) {
  const crseg::VolumeGeometry geom{expand_dims(a.dims), {1.0, 1.0, 1.0}};
  crseg::LossConfig cfg;
  cfg.alpha = a.alpha;
  cfg.d = crseg::WindowRadius{a.d};
  cfg.num_classes = a.classes;
  cfg.cr_class = a.cr_class >= 0 ? a.cr_class : std::min(2, a.classes - 1);
  cfg.validate();

  const crseg::LogitField logits = crseg::random_logits(geom, a.classes, a.seed);
  const crseg::LabelVolume labels = crseg::random_labels(geom, a.classes, a.seed);

  double err = 0.0;
  if (a.corrupt) {
    auto [report, grad] = crseg::total_loss(logits, labels, cfg);
    (void)report;
    // negative control: a 1% scale error on every entry, so any sampled
    // coordinate exposes it
    for (auto& g : grad) g *= 1.01;
    auto f = [&](const crseg::LogitField& z) { return crseg::total_loss(z, labels, cfg).first.total; };
    err = crseg::finite_diff_check(f, grad, logits, a.h, a.samples, a.seed);
  } else {
    err = crseg::finite_diff_check(logits, labels, cfg, a.h, a.samples, a.seed);
  }

  std::printf("max_rel_err=%.6e\n", err);
  if (!(err < a.threshold))
    throw crseg::NumericError("gradient check failed: max_rel_err=" + std::to_string(err) +
                              " >= " + std::to_string(a.threshold));
}

void run_metrics(const MetricsArgs& a) {
  const crseg::LabelVolume pred = crseg::load_label_volume(a.pred_path, a.classes);
  const crseg::LabelVolume gt = crseg::load_label_volume(a.gt_path, a.classes);
  const crseg::MetricsReport report = crseg::evaluate_labels(pred, gt);
  if (a.format == "json") {
    std::cout << report.to_json() << "\n";
  } else if (a.format == "table") {
    std::cout << report.to_table();
  } else if (a.format == "both") {
    std::cout << report.to_json() << "\n" << report.to_table();
  } else {
    throw crseg::ValidationError("--format must be json, table or both");
  }
}

void run_bench(const BenchArgs& a) {
  const auto rows = crseg::bench_maxpool(expand_dims(a.dims), a.d_list, a.reps, a.seed);
  std::cout << crseg::bench_csv(rows);
}

void run_study(StudyArgs& a) {
  a.binder.apply_file(a.config_path);
  a.phantom.dims = expand_dims(a.phantom_dims);
  if (std::none_of(a.alphas.begin(), a.alphas.end(), [](double x) { return x == 0.0; }))
    throw crseg::ValidationError("--alphas must include 0 (the baseline)");

  fs::create_directories(a.out_dir);

  struct SeedResult {
    crseg::StudyReport report;
    std::string error;  // non-empty when the run diverged
  };
  std::vector<SeedResult> results(a.seeds.size());

  int jobs = a.jobs > 0 ? a.jobs : static_cast<int>(std::thread::hardware_concurrency());
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(a.seeds.size())));
  auto worker = [&](std::size_t start) {
    for (std::size_t i = start; i < a.seeds.size(); i += jobs) {
      crseg::PhantomSpec spec = a.phantom;
      spec.rng_seed = a.seeds[i];
      try {
        results[i].report = crseg::run_outlier_study(spec, a.alphas, a.loss, a.opt, 1);
      } catch (const crseg::NumericError& e) {
        results[i].error = e.what();
      }
    }
  };
  if (jobs == 1) {
    worker(0);
  } else {
    std::vector<std::future<void>> futs;
    for (int w = 0; w < jobs; ++w)
      futs.push_back(std::async(std::launch::async, worker, static_cast<std::size_t>(w)));
    for (auto& f : futs) f.get();
  }

  for (std::size_t i = 0; i < a.seeds.size(); ++i) {
    if (!results[i].error.empty()) continue;
    const fs::path p = fs::path(a.out_dir) / ("study_seed" + std::to_string(a.seeds[i]) + ".json");
    write_text_file(p, results[i].report.to_json() + "\n");
  }

  // Cross-seed summary per alpha; the baseline is the alpha == 0 column.
  std::size_t base_idx = 0;
  for (std::size_t k = 0; k < a.alphas.size(); ++k)
    if (a.alphas[k] == 0.0) base_idx = k;

  ordered_json summary;
  summary["alphas"] = a.alphas;
  summary["seeds"] = a.seeds;
  ordered_json rows = ordered_json::array();

  std::string table;
  {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%8s %10s %10s %12s %8s\n", "alpha", "mean_dsc", "mean_comp",
                  "median_comp", "wins");
    table += buf;
  }
  std::vector<double> base_median_store;
  for (std::size_t k = 0; k < a.alphas.size(); ++k) {
    double dsc_sum = 0.0, comp_sum = 0.0;
    std::vector<double> comps;
    int wins = 0, counted = 0;
    for (std::size_t i = 0; i < a.seeds.size(); ++i) {
      if (!results[i].error.empty()) continue;
      const auto& row = results[i].report.rows[k];
      const auto& base = results[i].report.rows[base_idx];
      dsc_sum += row.dsc_tumor;
      comp_sum += row.components;
      comps.push_back(row.components);
      if (row.components < base.components) ++wins;
      ++counted;
    }
    if (counted == 0) continue;
    const double med = median_of(comps);
    if (k == base_idx) base_median_store.push_back(med);
    ordered_json r;
    r["alpha"] = a.alphas[k];
    r["mean_dsc_tumor"] = dsc_sum / counted;
    r["mean_components"] = comp_sum / counted;
    r["median_components"] = med;
    r["seeds_with_fewer_components"] = wins;
    r["seeds_counted"] = counted;
    rows.push_back(r);

    char buf[160];
    const bool fewer = k != base_idx && !base_median_store.empty() && med < base_median_store[0];
    std::snprintf(buf, sizeof(buf), "%8.3g %10.4f %10.2f %12.1f %5d/%-2d %s\n", a.alphas[k],
                  dsc_sum / counted, comp_sum / counted, med, wins, counted, fewer ? "*" : "");
    table += buf;
  }
  summary["rows"] = rows;

  ordered_json errors = ordered_json::array();
  for (std::size_t i = 0; i < a.seeds.size(); ++i) {
    if (results[i].error.empty()) continue;
    ordered_json e;
    e["seed"] = a.seeds[i];
    e["message"] = results[i].error;
    errors.push_back(e);
    std::cerr << "seed " << a.seeds[i] << ": " << results[i].error << "\n";
  }
  summary["errors"] = errors;

  write_text_file(fs::path(a.out_dir) / "summary.json", summary.dump(2) + "\n");
  write_text_file(fs::path(a.out_dir) / "summary.txt", table);
  std::cout << table;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contour-regularization segmentation loss toolkit"};
  app.require_subcommand(1);

  ClipArgs clip_args;
  auto* clip = app.add_subcommand("clip", "percentile-clip a scalar volume");
  clip->add_option("input", clip_args.input, "input volume (stem or .json/.raw)")->required();
  clip->add_option("output", clip_args.output, "output volume")->required();
  clip->add_option("--lo", clip_args.lo, "lower percentile")->capture_default_str();
  clip->add_option("--hi", clip_args.hi, "upper percentile")->capture_default_str();
  clip->callback([&]() { run_clip(clip_args); });

  ContourArgs contour_args;
  auto* cont = app.add_subcommand("contour", "windowed max-minus-min of a scalar volume");
  cont->add_option("input", contour_args.input, "input volume")->required();
  cont->add_option("output", contour_args.output, "output volume")->required();
  cont->add_option("--d", contour_args.d, "window radius (kernel extent 2d+1)")->capture_default_str();
  cont->callback([&]() { run_contour(contour_args); });

  LossArgs loss_args;
  auto* loss = app.add_subcommand("loss", "evaluate dice + cross-entropy + alpha*CR on stored fields");
  loss->add_option("logits", loss_args.logits_stem, "logit field stem (<stem>.c0, <stem>.c1, ...)")
      ->required();
  loss->add_option("labels", loss_args.labels_path, "label volume")->required();
  loss->add_option("--config", loss_args.config_path, "JSON config file (flags win)");
  auto* o_alpha = loss->add_option("--alpha", loss_args.cfg.alpha, "CR weight")->capture_default_str();
  auto* o_d = loss->add_option("--d", loss_args.cfg.d.d, "CR window radius")->capture_default_str();
  auto* o_crc =
      loss->add_option("--cr-class", loss_args.cfg.cr_class, "class the CR term applies to")
          ->capture_default_str();
  auto* o_eps =
      loss->add_option("--dice-eps", loss_args.cfg.dice_eps, "dice smoothing")->capture_default_str();
  auto* o_nc = loss->add_option("--num-classes", loss_args.num_classes_flag,
                                "expected class count (default: from files)");
  loss_args.binder.bind(o_alpha, "alpha", loss_args.cfg.alpha);
  loss_args.binder.bind(o_d, "d", loss_args.cfg.d.d);
  loss_args.binder.bind(o_crc, "cr_class", loss_args.cfg.cr_class);
  loss_args.binder.bind(o_eps, "dice_eps", loss_args.cfg.dice_eps);
  loss_args.binder.bind(o_nc, "num_classes", loss_args.num_classes_flag);
  loss->callback([&]() { run_loss(loss_args); });

  GradcheckArgs gc_args;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the analytic gradient");
  gc->add_option("--dims", gc_args.dims, "volume dims (1 or 3 values)")
      ->delimiter(',')
      ->capture_default_str();
  gc->add_option("--classes", gc_args.classes, "number of classes")->capture_default_str();
  gc->add_option("--d", gc_args.d, "CR window radius")->capture_default_str();
  gc->add_option("--alpha", gc_args.alpha, "CR weight")->capture_default_str();
  gc->add_option("--cr-class", gc_args.cr_class, "CR class (default min(2, classes-1))");
  gc->add_option("--seed", gc_args.seed, "rng seed")->capture_default_str();
  gc->add_option("--step", gc_args.h, "central-difference step h")->capture_default_str();
  gc->add_option("--samples", gc_args.samples, "coordinates to probe")->capture_default_str();
  gc->add_option("--threshold", gc_args.threshold, "max relative error to accept")
      ->capture_default_str();
  gc->add_flag("--corrupt-gradient", gc_args.corrupt, "negative control: damage the gradient")
      ->group("");  // hidden
  gc->callback([&]() { run_gradcheck(gc_args); });

  MetricsArgs met_args;
  auto* met = app.add_subcommand("metrics", "DSC/HD/AVD/components for two label volumes");
  met->add_option("prediction", met_args.pred_path, "predicted label volume")->required();
  met->add_option("reference", met_args.gt_path, "ground-truth label volume")->required();
  met->add_option("--classes", met_args.classes, "number of classes")->capture_default_str();
  met->add_option("--format", met_args.format, "json | table | both")->capture_default_str();
  met->callback([&]() { run_metrics(met_args); });

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "time naive vs separable max-pooling, CSV to stdout");
  bench->add_option("--dims", bench_args.dims, "volume dims (1 or 3 values)")
      ->delimiter(',')
      ->capture_default_str();
  bench->add_option("--d-list", bench_args.d_list, "window radii to time")
      ->delimiter(',')
      ->capture_default_str();
  bench->add_option("--reps", bench_args.reps, "repetitions per row")->capture_default_str();
  bench->add_option("--seed", bench_args.seed, "rng seed")->capture_default_str();
  bench->callback([&]() { run_bench(bench_args); });

  StudyArgs study_args;
  auto* study = app.add_subcommand("study", "outlier-suppression study on synthetic phantoms");
  study->add_option("--config", study_args.config_path, "JSON config file (flags win)");
  study->add_option("--alphas", study_args.alphas, "CR weights to sweep (must include 0)")
      ->delimiter(',')
      ->capture_default_str();
  study->add_option("--seeds", study_args.seeds, "phantom seeds")->delimiter(',')->capture_default_str();
  study->add_option("--out-dir", study_args.out_dir, "report directory")->capture_default_str();
  study->add_option("--jobs", study_args.jobs, "parallel runs (0 = all cores)")->capture_default_str();
  auto* s_dims = study->add_option("--dims", study_args.phantom_dims, "phantom dims (1 or 3 values)")
                     ->delimiter(',')
                     ->capture_default_str();
  auto* s_orad = study->add_option("--organ-radius", study_args.phantom.organ_radius_vox,
                                   "kidney sphere radius [vox]")
                     ->capture_default_str();
  auto* s_trad = study->add_option("--tumor-radius", study_args.phantom.tumor_radius_vox,
                                   "tumor sphere radius [vox]")
                     ->capture_default_str();
  auto* s_spk =
      study->add_option("--speckles", study_args.phantom.speckle_count, "outlier blob count")
          ->capture_default_str();
  auto* s_spks = study->add_option("--speckle-size", study_args.phantom.speckle_size_vox,
                                   "outlier blob radius [vox]")
                     ->capture_default_str();
  auto* s_lr = study->add_option("--learning-rate", study_args.opt.learning_rate, "GD step size")
                   ->capture_default_str();
  auto* s_it = study->add_option("--iterations", study_args.opt.iterations, "GD iterations")
                   ->capture_default_str();
  auto* s_d = study->add_option("--d", study_args.loss.d.d, "CR window radius")->capture_default_str();
  auto* s_crc = study->add_option("--cr-class", study_args.loss.cr_class, "CR / tumor class")
                    ->capture_default_str();
  study_args.binder.bind(s_dims, "dims", study_args.phantom_dims);
  study_args.binder.bind(s_orad, "organ_radius_vox", study_args.phantom.organ_radius_vox);
  study_args.binder.bind(s_trad, "tumor_radius_vox", study_args.phantom.tumor_radius_vox);
  study_args.binder.bind(s_spk, "speckle_count", study_args.phantom.speckle_count);
  study_args.binder.bind(s_spks, "speckle_size_vox", study_args.phantom.speckle_size_vox);
  study_args.binder.bind(s_lr, "learning_rate", study_args.opt.learning_rate);
  study_args.binder.bind(s_it, "iterations", study_args.opt.iterations);
  study_args.binder.bind(s_d, "d", study_args.loss.d.d);
  study_args.binder.bind(s_crc, "cr_class", study_args.loss.cr_class);
  study->callback([&]() { run_study(study_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const crseg::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const crseg::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const crseg::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
