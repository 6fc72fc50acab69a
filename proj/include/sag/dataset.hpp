#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sag/errors.hpp"
#include "sag/rng.hpp"

namespace sag {

/// n univariate series of length m with integer class labels in {0..C-1}.
/// Values are stored row-major in one flat buffer. Immutable by convention:
/// every operation returns a new set.
struct LabeledSeriesSet {
  std::string name;
  std::size_t length = 0;              // m
  std::vector<double> values;          // n * m, row-major
  std::vector<int> labels;             // n entries
  int class_count = 0;                 // C

  std::size_t size() const { return labels.size(); }  // n

  double at(std::size_t i, std::size_t t) const { return values[i * length + t]; }
  double& at(std::size_t i, std::size_t t) { return values[i * length + t]; }

  const double* row(std::size_t i) const { return values.data() + i * length; }

  /// Throws unless every type invariant holds.
  void validate() const {
    if (length < 2) throw dataset_error(name + ": series length must be >= 2, got " + std::to_string(length));
    if (labels.empty()) throw dataset_error(name + ": empty dataset");
    if (values.size() != labels.size() * length)
      throw dimension_error(name + ": " + std::to_string(values.size()) + " values != n*m = " +
                            std::to_string(labels.size() * length));
    if (class_count < 2) throw class_error(name + ": class_count must be >= 2, got " + std::to_string(class_count));
    std::vector<std::size_t> seen(static_cast<std::size_t>(class_count), 0);
    for (int l : labels) {
      if (l < 0 || l >= class_count)
        throw label_error(name + ": label " + std::to_string(l) + " outside [0, " +
                          std::to_string(class_count) + ")");
      ++seen[static_cast<std::size_t>(l)];
    }
    for (int c = 0; c < class_count; ++c) {
      if (seen[static_cast<std::size_t>(c)] == 0)
        throw class_error(name + ": class " + std::to_string(c) + " has no samples");
    }
    for (double v : values) {
      if (!std::isfinite(v)) throw input_error(name + ": non-finite value in series data");
    }
  }
};

struct DatasetSplit {
  LabeledSeriesSet train;
  LabeledSeriesSet test;

  void validate() const {
    train.validate();
    test.validate();
    if (train.length != test.length)
      throw dimension_error("split: train length " + std::to_string(train.length) + " != test length " +
                            std::to_string(test.length));
    if (train.class_count != test.class_count)
      throw class_error("split: train classes " + std::to_string(train.class_count) + " != test classes " +
                        std::to_string(test.class_count));
  }
};

/// Waveform family of the positive class in make_synthetic. Class 0 is always
/// a plain sine; `sine_bump` adds a Gaussian bump at the series midpoint to
/// class 1, `sine` makes both classes draw from the same distribution (a
/// non-separable control).
enum class WaveFamily { sine, sine_bump };

struct SyntheticSpec {
  std::size_t n_per_class = 20;
  std::size_t length = 64;
  WaveFamily positive_family = WaveFamily::sine_bump;
  double noise_sigma = 0.1;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_per_class < 4) throw input_error("synthetic: n_per_class must be >= 4");
    if (length < 16) throw input_error("synthetic: length must be >= 16");
    if (!(noise_sigma >= 0.0)) throw input_error("synthetic: noise sigma must be >= 0");
  }
};

namespace detail {

inline std::vector<double> parse_series_line(const std::string& line) {
  std::vector<double> fields;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) {
    try {
      std::size_t consumed = 0;
      const double v = std::stod(tok, &consumed);
      if (consumed != tok.size()) throw std::invalid_argument(tok);
      fields.push_back(v);
    } catch (const std::exception&) {
      throw format_error("unparsable field '" + tok + "'");
    }
  }
  return fields;
}

struct RawSeriesFile {
  std::vector<double> raw_labels;
  std::vector<double> values;
  std::size_t length = 0;
};

inline RawSeriesFile read_ucr_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  RawSeriesFile out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    std::vector<double> fields;
    try {
      fields = parse_series_line(line);
    } catch (const format_error& e) {
      throw format_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (fields.size() < 3)
      throw format_error(path.string() + ":" + std::to_string(line_no) +
                         ": need a label plus at least 2 values, got " + std::to_string(fields.size()) +
                         " fields");
    const std::size_t m = fields.size() - 1;
    if (out.length == 0) {
      out.length = m;
    } else if (m != out.length) {
      throw format_error(path.string() + ":" + std::to_string(line_no) + ": ragged row, " +
                         std::to_string(m) + " values where " + std::to_string(out.length) + " expected");
    }
    out.raw_labels.push_back(fields[0]);
    out.values.insert(out.values.end(), fields.begin() + 1, fields.end());
  }
  if (out.raw_labels.empty()) throw dataset_error(path.string() + ": empty dataset");
  return out;
}

}  // namespace detail

/// Load a `<prefix>_TRAIN.tsv` / `<prefix>_TEST.tsv` pair in the UCR archive
/// convention (one sample per line: label, then m values, whitespace
/// separated). Raw labels - whatever their encoding, e.g. {-1,1} or {1,2} -
/// are remapped to {0..C-1} by ascending order of the distinct raw values,
/// identically for both files.
inline DatasetSplit load_ucr_tsv(const std::filesystem::path& prefix) {
  const std::string stem = prefix.string();
  const detail::RawSeriesFile train_raw = detail::read_ucr_file(stem + "_TRAIN.tsv");
  const detail::RawSeriesFile test_raw = detail::read_ucr_file(stem + "_TEST.tsv");
  if (train_raw.length != test_raw.length)
    throw dimension_error(stem + ": train length " + std::to_string(train_raw.length) +
                          " != test length " + std::to_string(test_raw.length));

  std::vector<double> distinct = train_raw.raw_labels;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::map<double, int> remap;
  for (std::size_t i = 0; i < distinct.size(); ++i) remap[distinct[i]] = static_cast<int>(i);

  const auto apply = [&](const detail::RawSeriesFile& raw, const std::string& which) {
    LabeledSeriesSet set;
    set.name = prefix.filename().string() + "_" + which;
    set.length = raw.length;
    set.values = raw.values;
    set.labels.reserve(raw.raw_labels.size());
    for (double l : raw.raw_labels) {
      const auto it = remap.find(l);
      if (it == remap.end())
        throw label_error(stem + ": " + which + " label " + std::to_string(l) +
                          " never appears in the train file");
      set.labels.push_back(it->second);
    }
    set.class_count = static_cast<int>(distinct.size());
    return set;
  };

  DatasetSplit split{apply(train_raw, "TRAIN"), apply(test_raw, "TEST")};
  split.validate();
  return split;
}

/// Rescale each row independently to mean 0 and population standard
/// deviation 1. Rows with std below 1e-8 are only mean-centered.
inline LabeledSeriesSet z_normalize(const LabeledSeriesSet& set) {
  LabeledSeriesSet out = set;
  const std::size_t m = set.length;
  for (std::size_t i = 0; i < set.size(); ++i) {
    double mean = 0.0;
    for (std::size_t t = 0; t < m; ++t) mean += set.at(i, t);
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t t = 0; t < m; ++t) {
      const double d = set.at(i, t) - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / static_cast<double>(m));
    if (sd < 1e-8) {
      for (std::size_t t = 0; t < m; ++t) out.at(i, t) = set.at(i, t) - mean;
    } else {
      for (std::size_t t = 0; t < m; ++t) out.at(i, t) = (set.at(i, t) - mean) / sd;
    }
  }
  return out;
}

/// Per-class sample counts; entry c is the number of rows labelled c.
inline std::vector<std::size_t> class_counts(const LabeledSeriesSet& set) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(set.class_count), 0);
  for (int l : set.labels) ++counts[static_cast<std::size_t>(l)];
  return counts;
}

namespace detail {

inline double base_sine(std::size_t t, std::size_t m) {
  return std::sin(2.0 * std::numbers::pi * 2.0 * static_cast<double>(t) / static_cast<double>(m));
}

inline double centered_bump(std::size_t t, std::size_t m) {
  const double center = (static_cast<double>(m) - 1.0) / 2.0;
  const double width = static_cast<double>(m) / 16.0;
  const double z = (static_cast<double>(t) - center) / width;
  return std::exp(-0.5 * z * z);
}

inline LabeledSeriesSet synth_half(const SyntheticSpec& spec, SplitStream stream, const std::string& which) {
  LabeledSeriesSet set;
  set.name = "synthetic_" + which;
  set.length = spec.length;
  set.class_count = 2;
  const std::size_t n = 2 * spec.n_per_class;
  set.values.resize(n * spec.length);
  set.labels.resize(n);
  for (int cls = 0; cls < 2; ++cls) {
    SplitStream class_stream = stream.child(static_cast<std::uint64_t>(cls));
    for (std::size_t k = 0; k < spec.n_per_class; ++k) {
      SplitStream sample = class_stream.child(k);
      const std::size_t i = static_cast<std::size_t>(cls) * spec.n_per_class + k;
      set.labels[i] = cls;
      for (std::size_t t = 0; t < spec.length; ++t) {
        double v = base_sine(t, spec.length);
        if (cls == 1 && spec.positive_family == WaveFamily::sine_bump) v += centered_bump(t, spec.length);
        if (spec.noise_sigma > 0.0) v += spec.noise_sigma * sample.next_normal();
        set.at(i, t) = v;
      }
    }
  }
  return set;
}

}  // namespace detail

/// Deterministic two-class synthetic benchmark. Class 0 is a fixed sine plus
/// i.i.d. Gaussian noise; class 1 additionally carries a Gaussian bump at the
/// series midpoint (see WaveFamily). The first time step carries no class
/// information, so a point feature planted there is a pure shortcut. Train
/// and test come from the same process on disjoint random streams.
inline DatasetSplit make_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SplitStream root(spec.seed);
  DatasetSplit split{detail::synth_half(spec, root.child(0), "train"),
                     detail::synth_half(spec, root.child(1), "test")};
  split.validate();
  return split;
}

}  // namespace sag
