#pragma once

#include <stdexcept>
#include <string>

namespace sag {

/// Base class for every error thrown by this library.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
struct io_error : error {
  using error::error;
};

/// Malformed input file (message carries the offending line/row number).
struct format_error : error {
  using error::error;
};

/// Train/test label sets disagree, or a label is outside {0..C-1}.
struct label_error : error {
  using error::error;
};

/// A dataset that must be non-empty is empty, or violates its invariants.
struct dataset_error : error {
  using error::error;
};

/// Tensor or matrix shapes are inconsistent for the requested operation.
struct dimension_error : error {
  using error::error;
};

/// A class id is out of range, or a class has no samples.
struct class_error : error {
  using error::error;
};

/// A time index or window falls outside the series.
struct bounds_error : error {
  using error::error;
};

/// An argument value is invalid (non-finite entries, empty vectors, ...).
struct input_error : error {
  using error::error;
};

/// An API precondition was violated (non-scalar loss, bad threshold, ...).
struct contract_error : error {
  using error::error;
};

/// A non-finite value showed up inside a numeric kernel.
struct numeric_error : error {
  using error::error;
};

/// Training produced a non-finite loss; message names the epoch.
struct divergence_error : error {
  using error::error;
};

/// A score is mathematically undefined (all-zero gradient profile row).
struct degenerate_score_error : error {
  using error::error;
};

}  // namespace sag
