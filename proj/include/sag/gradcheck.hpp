#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "sag/errors.hpp"
#include "sag/tensor.hpp"

namespace sag {

/// One evaluation of a scalar function plus every ReLU pre-activation it
/// went through (see Tape::relu_input_values).
struct ProbeOutcome {
  double value = 0.0;
  std::vector<double> relu_values;
};

using ScalarProbe = std::function<ProbeOutcome(const Tensor&)>;

struct FdReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::vector<std::size_t> excluded;  // coordinates skipped near a ReLU kink
};

namespace detail {

/// A coordinate is kink-free when no ReLU pre-activation that reacts to the
/// perturbation changes sign or comes within `tol` of zero. Units the
/// perturbation does not reach (identical values in both probes) are fine
/// even when they sit exactly on the kink.
inline bool kink_free(const std::vector<double>& plus, const std::vector<double>& minus, double tol) {
  if (plus.size() != minus.size()) return false;
  for (std::size_t i = 0; i < plus.size(); ++i) {
    const double a = plus[i], b = minus[i];
    if (a == b) continue;
    if (std::abs(a) <= tol || std::abs(b) <= tol) return false;
    if ((a > 0.0) != (b > 0.0)) return false;
  }
  return true;
}

}  // namespace detail

/// Central-difference check of `analytic` (the tape gradient of `probe` at
/// `x`) on the given coordinates. A coordinate whose +/- step evaluations
/// land on different sides of a ReLU kink, or within 1e-6 of one, is reported
/// in `excluded` instead of failing: the subgradient convention makes the
/// comparison meaningless there. Relative error uses max(1, |fd|, |grad|) as
/// denominator.
inline FdReport finite_difference_check(const ScalarProbe& probe, const Tensor& x,
                                        const Tensor& analytic, double step,
                                        const std::vector<std::size_t>& coords,
                                        double kink_tol = 1e-6) {
  if (!x.same_shape(analytic)) {
    throw dimension_error("finite_difference_check: gradient shape " +
                          Tensor::shape_string(analytic.shape) + " != input shape " +
                          Tensor::shape_string(x.shape));
  }
  FdReport report;
  Tensor probe_point = x;
  for (std::size_t i : coords) {
    const double saved = probe_point.data[i];
    probe_point.data[i] = saved + step;
    const ProbeOutcome plus = probe(probe_point);
    probe_point.data[i] = saved - step;
    const ProbeOutcome minus = probe(probe_point);
    probe_point.data[i] = saved;

    if (!detail::kink_free(plus.relu_values, minus.relu_values, kink_tol)) {
      report.excluded.push_back(i);
      continue;
    }
    const double fd = (plus.value - minus.value) / (2.0 * step);
    const double g = analytic.data[i];
    const double denom = std::max({1.0, std::abs(fd), std::abs(g)});
    report.max_rel_error = std::max(report.max_rel_error, std::abs(fd - g) / denom);
    ++report.checked;
  }
  return report;
}

/// Check every coordinate of x.
inline FdReport finite_difference_check(const ScalarProbe& probe, const Tensor& x,
                                        const Tensor& analytic, double step, double kink_tol = 1e-6) {
  std::vector<std::size_t> coords(x.size());
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  return finite_difference_check(probe, x, analytic, step, coords, kink_tol);
}

}  // namespace sag
