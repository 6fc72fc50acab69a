#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sag/dataset.hpp"
#include "sag/errors.hpp"

namespace sag {

/// How the planted value is chosen: an absolute literal, or relative to the
/// pre-injection set as (global max) + k * (global population std). The
/// relative form is resolved once over the whole set, so every target row
/// receives the identical value.
struct Amplitude {
  enum class Kind { absolute, relative };
  Kind kind = Kind::relative;
  double value = 2.0;  // literal for absolute, k for relative

  static Amplitude absolute(double v) { return {Kind::absolute, v}; }
  static Amplitude relative(double k) { return {Kind::relative, k}; }
};

/// A point shortcut: overwrite [position, position+width) of every row of
/// one class with a fixed value.
struct ShortcutSpec {
  int target_class = 1;
  std::size_t position = 0;
  std::size_t width = 1;
  Amplitude amplitude = Amplitude::relative(2.0);
};

/// Exact record of what inject() changed.
struct InjectionReceipt {
  std::vector<std::uint8_t> mask;  // n * m, 1 where a cell was written
  ShortcutSpec spec;
  double injected_value = 0.0;
};

struct InjectionResult {
  LabeledSeriesSet set;
  InjectionReceipt receipt;
};

/// Plant the shortcut into every row of the target class. All other cells
/// are bit-identical to the input.
inline InjectionResult inject(const LabeledSeriesSet& set, const ShortcutSpec& spec) {
  if (spec.target_class < 0 || spec.target_class >= set.class_count)
    throw class_error("inject: target class " + std::to_string(spec.target_class) + " outside [0, " +
                      std::to_string(set.class_count) + ")");
  if (spec.width < 1) throw bounds_error("inject: width must be >= 1");
  if (spec.position + spec.width > set.length)
    throw bounds_error("inject: window [" + std::to_string(spec.position) + ", " +
                       std::to_string(spec.position + spec.width) + ") outside series of length " +
                       std::to_string(set.length));

  double resolved = spec.amplitude.value;
  if (spec.amplitude.kind == Amplitude::Kind::relative) {
    double mx = set.values.front();
    double mean = 0.0;
    for (double v : set.values) {
      mx = std::max(mx, v);
      mean += v;
    }
    mean /= static_cast<double>(set.values.size());
    double var = 0.0;
    for (double v : set.values) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(set.values.size()));
    resolved = mx + spec.amplitude.value * sd;
  }

  InjectionResult out{set, InjectionReceipt{}};
  out.receipt.mask.assign(set.size() * set.length, 0);
  out.receipt.spec = spec;
  out.receipt.injected_value = resolved;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.labels[i] != spec.target_class) continue;
    for (std::size_t t = spec.position; t < spec.position + spec.width; ++t) {
      out.set.at(i, t) = resolved;
      out.receipt.mask[i * set.length + t] = 1;
    }
  }
  return out;
}

/// True iff `after` carries the receipt's value on every masked cell and is
/// bit-identical to `before` everywhere else.
inline bool verify_receipt(const LabeledSeriesSet& before, const LabeledSeriesSet& after,
                           const InjectionReceipt& receipt) {
  if (before.size() != after.size() || before.length != after.length)
    throw dimension_error("verify_receipt: before is " + std::to_string(before.size()) + "x" +
                          std::to_string(before.length) + ", after is " + std::to_string(after.size()) +
                          "x" + std::to_string(after.length));
  if (receipt.mask.size() != before.values.size())
    throw dimension_error("verify_receipt: mask size " + std::to_string(receipt.mask.size()) +
                          " != n*m = " + std::to_string(before.values.size()));
  for (std::size_t i = 0; i < before.values.size(); ++i) {
    if (receipt.mask[i]) {
      if (after.values[i] != receipt.injected_value) return false;
    } else {
      if (after.values[i] != before.values[i]) return false;
    }
  }
  return true;
}

}  // namespace sag
