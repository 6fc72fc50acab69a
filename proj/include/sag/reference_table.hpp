#pragma once

#include <cstddef>
#include <cstdint>

namespace sag {

/// Integrity and expected-summary constants for the bundled reference score
/// table (data/reference_scores.csv): 24 two-class UCR datasets scored under
/// regular and shortcut training. The replay command refuses a table whose
/// bytes do not hash to kReferenceTableChecksum, and at epsilon 0.15 the
/// recomputed summary must match the expectations below exactly.
inline constexpr std::uint64_t kReferenceTableChecksum = 0xa7c82806e92f2939ull;
inline constexpr std::size_t kReferenceTableRows = 24;
inline constexpr double kReferenceEpsilon = 0.15;

struct ReferenceSummary {
  std::size_t regular_class_correct[2];
  std::size_t shortcut_class_correct[2];
  // accuracies rounded to 3 decimals, as reported
  double regular_class_accuracy[2];
  double shortcut_class_accuracy[2];
  double regular_dataset_accuracy;
  double shortcut_dataset_accuracy;
};

inline constexpr ReferenceSummary kExpectedReferenceSummary = {
    {24, 24}, {20, 19}, {1.000, 1.000}, {0.833, 0.792}, 1.000, 0.792,
};

}  // namespace sag
