#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "crseg/morphology.hpp"
#include "crseg/volume.hpp"

namespace crseg {

/// Per-class, per-voxel unconstrained scores, class-major: data[c*N + v].
/// Stored in double precision so analytic gradients survive finite-difference
/// scrutiny.
struct LogitField {
  VolumeGeometry geom;
  int num_classes = 2;
  std::vector<double> data;

  static LogitField zeros(const VolumeGeometry& geom, int num_classes);

  std::size_t size() const { return data.size(); }
  double at(int c, std::size_t v) const { return data[static_cast<std::size_t>(c) * geom.voxel_count() + v]; }
  double& at(int c, std::size_t v) { return data[static_cast<std::size_t>(c) * geom.voxel_count() + v]; }

  void validate() const;
};

/// Per-class, per-voxel probabilities; per-voxel class sums equal 1.
struct ProbField {
  VolumeGeometry geom;
  int num_classes = 2;
  std::vector<double> data;

  double at(int c, std::size_t v) const { return data[static_cast<std::size_t>(c) * geom.voxel_count() + v]; }
  double& at(int c, std::size_t v) { return data[static_cast<std::size_t>(c) * geom.voxel_count() + v]; }

  void validate() const;
};

struct LossConfig {
  double alpha = 1.0;      // weight of the contour-regularization term
  WindowRadius d{1};       // contour window radius
  int cr_class = 2;        // class whose probability field is regularized
  double dice_eps = 1e-5;  // additive smoothing in the soft-Dice ratio
  int num_classes = 5;

  void validate() const;
};

struct LossReport {
  double dice = 0.0;
  double ce = 0.0;
  double cr = 0.0;
  double alpha = 0.0;
  double total = 0.0;  // dice + ce + alpha * cr

  /// {"dice":…, "ce":…, "cr":…, "alpha":…, "total":…}
  std::string to_json() const;
};

/// Numerically stable (max-shifted) softmax across classes, per voxel.
ProbField softmax(const LogitField& logits);

/// Voxelwise argmax over classes.
LabelVolume argmax_labels(const ProbField& p);
LabelVolume argmax_labels(const LogitField& logits);

struct ValueGrad {
  double value = 0.0;
  std::vector<double> grad;  // same layout as the differentiated field
};

/// Soft Dice loss over foreground classes, averaged:
///   1 - (1/(C-1)) * sum_c (2*sum p_c*y_c + eps) / (sum p_c + sum y_c + eps).
/// Gradient is with respect to p.
ValueGrad dice_loss(const ProbField& p, const LabelVolume& y, const LossConfig& cfg);

/// Mean voxelwise negative log-likelihood, computed via log-sum-exp.
/// Gradient is with respect to the logits: (softmax - onehot) / N.
ValueGrad cross_entropy_loss(const LogitField& logits, const LabelVolume& y);

/// Contour-regularization loss: the l2 norm of the windowed max-minus-min of
/// the cr_class probability field. The gradient routes, per window, +g/|g|_2
/// to the argmax voxel and -g/|g|_2 to the argmin voxel; all other classes
/// get zero gradient.
ValueGrad cr_loss(const ProbField& p, const LossConfig& cfg);

/// Composite objective: dice + ce + alpha * cr, with the gradient taken with
/// respect to the logits (Dice and CR chained through the softmax Jacobian).
std::pair<LossReport, std::vector<double>> total_loss(const LogitField& logits, const LabelVolume& y,
                                                      const LossConfig& cfg);

/// Central-difference check of an analytic gradient on `samples` randomly
/// chosen coordinates. Returns the worst relative error.
double finite_diff_check(const std::function<double(const LogitField&)>& f,
                         const std::vector<double>& analytic_grad, const LogitField& at, double h,
                         int samples, std::uint64_t seed);

/// Convenience wrapper checking total_loss at the given point.
double finite_diff_check(const LogitField& logits, const LabelVolume& y, const LossConfig& cfg,
                         double h = 1e-3, int samples = 200, std::uint64_t seed = 1);

/// Seeded standard-normal logits / uniform labels, for checks and fixtures.
LogitField random_logits(const VolumeGeometry& geom, int num_classes, std::uint64_t seed,
                         double scale = 1.0);
LabelVolume random_labels(const VolumeGeometry& geom, int num_classes, std::uint64_t seed);

// A logit field on disk is one f32 volume per class: <stem>.c0, <stem>.c1, …
// (each an ordinary volume file pair). Class count is probed from the files.
void save_logit_field(const LogitField& logits, const std::string& stem);
LogitField load_logit_field(const std::string& stem, int expect_classes = 0);

}  // namespace crseg
