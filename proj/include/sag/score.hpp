#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "sag/dataset.hpp"
#include "sag/errors.hpp"
#include "sag/model.hpp"
#include "sag/tensor.hpp"

namespace sag {

/// How the per-class point score folds the per-sample gradients:
/// `abs_of_mean` takes |class mean| (the default), `mean_of_abs` averages
/// magnitudes instead and therefore cannot cancel opposing signs. Kept as an
/// explicit switch for ablations.
enum class DeltaVariant { abs_of_mean, mean_of_abs };

inline const char* to_string(DeltaVariant v) {
  return v == DeltaVariant::abs_of_mean ? "abs-of-mean" : "mean-of-abs";
}

/// Per-class, per-time-step gradient magnitude profile. delta is [C, m],
/// every entry finite and >= 0.
struct ClassGradientProfile {
  Tensor delta;
  std::vector<std::size_t> class_counts;

  std::size_t classes() const { return delta.dim(0); }
  std::size_t length() const { return delta.dim(1); }
};

/// Detector verdict over one gradient profile.
struct SagReport {
  std::vector<double> sag;  // one score per class, each in [1/m, 1]
  double epsilon = 0.0;
  bool detected = false;
  std::optional<int> detected_class;  // argmax class, present iff detected
};

/// Point-shortcut score: delta[c][t] = |mean over class-c samples of G[i][t]|
/// (or mean of |G[i][t]| under the mean_of_abs variant). G is the n x m
/// matrix of per-sample input gradients.
inline ClassGradientProfile point_shortcut_score(const Tensor& gradients, const std::vector<int>& labels,
                                                 int class_count, DeltaVariant variant = DeltaVariant::abs_of_mean) {
  if (gradients.rank() != 2) throw dimension_error("point_shortcut_score: gradients must be [n, m]");
  const std::size_t n = gradients.dim(0), m = gradients.dim(1);
  if (labels.size() != n)
    throw dimension_error("point_shortcut_score: " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(n) + " gradient rows");
  if (class_count < 2) throw class_error("point_shortcut_score: class_count must be >= 2");
  for (int y : labels) {
    if (y < 0 || y >= class_count)
      throw label_error("point_shortcut_score: label " + std::to_string(y) + " outside [0, " +
                        std::to_string(class_count) + ")");
  }
  if (!gradients.all_finite()) throw input_error("point_shortcut_score: non-finite gradient entry");

  ClassGradientProfile profile;
  profile.class_counts.assign(static_cast<std::size_t>(class_count), 0);
  for (int y : labels) ++profile.class_counts[static_cast<std::size_t>(y)];
  for (int c = 0; c < class_count; ++c) {
    if (profile.class_counts[static_cast<std::size_t>(c)] == 0)
      throw class_error("point_shortcut_score: class " + std::to_string(c) + " has no samples");
  }

  profile.delta = Tensor::zeros({static_cast<std::size_t>(class_count), m});
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    for (std::size_t t = 0; t < m; ++t) {
      const double g = gradients.at(i, t);
      profile.delta.at(c, t) += (variant == DeltaVariant::mean_of_abs) ? std::abs(g) : g;
    }
  }
  for (std::size_t c = 0; c < static_cast<std::size_t>(class_count); ++c) {
    const double inv = 1.0 / static_cast<double>(profile.class_counts[c]);
    for (std::size_t t = 0; t < m; ++t) {
      profile.delta.at(c, t) = std::abs(profile.delta.at(c, t) * inv);
    }
  }
  return profile;
}

/// Concentration score per class: max over time of delta divided by its sum
/// over time. 1/m for a flat profile, 1 when all mass sits on one point.
inline std::vector<double> sag_scores(const ClassGradientProfile& profile) {
  const std::size_t classes = profile.classes(), m = profile.length();
  std::vector<double> out(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    double mx = 0.0, sum = 0.0;
    for (std::size_t t = 0; t < m; ++t) {
      const double d = profile.delta.at(c, t);
      if (d < 0.0 || !std::isfinite(d))
        throw input_error("sag: profile entry for class " + std::to_string(c) + " must be finite and >= 0");
      mx = std::max(mx, d);
      sum += d;
    }
    if (sum <= 0.0)
      throw degenerate_score_error("sag: class " + std::to_string(c) +
                                   " has an all-zero gradient profile; score undefined");
    out[c] = mx / sum;
  }
  return out;
}

/// Threshold the per-class scores: a shortcut is reported iff some class
/// score strictly exceeds epsilon; the flagged class is the argmax (lowest
/// index on exact ties).
inline SagReport detect(const std::vector<double>& scores, double epsilon) {
  if (scores.empty()) throw input_error("detect: empty score vector");
  if (!(epsilon > 0.0) || !(epsilon < 1.0)) throw contract_error("detect: epsilon must lie in (0, 1)");
  SagReport report;
  report.sag = scores;
  report.epsilon = epsilon;
  std::size_t best = 0;
  for (std::size_t c = 1; c < scores.size(); ++c) {
    if (scores[c] > scores[best]) best = c;
  }
  report.detected = scores[best] > epsilon;
  if (report.detected) report.detected_class = static_cast<int>(best);
  return report;
}

/// Gradient profile -> scores -> verdict for a trained model, measured on
/// the training split only.
inline SagReport score_pipeline(const ResidualCNN1D& model, const LabeledSeriesSet& train_set,
                                double epsilon, DeltaVariant variant = DeltaVariant::abs_of_mean) {
  const Tensor g = input_gradients(model, train_set);
  const ClassGradientProfile profile = point_shortcut_score(g, train_set.labels, train_set.class_count, variant);
  return detect(sag_scores(profile), epsilon);
}

}  // namespace sag
