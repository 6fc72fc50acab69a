#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sag/errors.hpp"
#include "sag/score.hpp"

namespace sag {

enum class Regime { regular, shortcut };

inline const char* to_string(Regime r) { return r == Regime::regular ? "regular" : "shortcut"; }

/// One dataset's detector verdict plus the ground truth for that run.
struct DetectionOutcome {
  std::string dataset;
  Regime regime = Regime::regular;
  std::optional<int> true_shortcut_class;  // present iff regime == shortcut
  SagReport report;

  void validate() const {
    if (regime == Regime::shortcut && !true_shortcut_class)
      throw input_error(dataset + ": shortcut outcome needs the true shortcut class");
    if (regime == Regime::regular && true_shortcut_class)
      throw input_error(dataset + ": regular outcome must not carry a shortcut class");
  }
};

namespace detail {

inline void check_outcomes(const std::vector<DetectionOutcome>& outcomes, Regime regime) {
  if (outcomes.empty()) throw input_error("metrics: need at least one outcome");
  const std::size_t classes = outcomes.front().report.sag.size();
  for (const auto& o : outcomes) {
    o.validate();
    if (o.regime != regime)
      throw input_error("metrics: outcome '" + o.dataset + "' is " + to_string(o.regime) +
                        ", expected " + to_string(regime));
    if (o.report.sag.size() != classes)
      throw input_error("metrics: outcome '" + o.dataset + "' has " + std::to_string(o.report.sag.size()) +
                        " classes, expected " + std::to_string(classes));
  }
}

inline bool class_correct(const DetectionOutcome& o, int class_id) {
  const double score = o.report.sag.at(static_cast<std::size_t>(class_id));
  const bool should_fire = o.regime == Regime::shortcut && class_id == *o.true_shortcut_class;
  return should_fire ? score > o.report.epsilon : score <= o.report.epsilon;
}

inline bool dataset_correct(const DetectionOutcome& o) {
  if (o.regime == Regime::regular) return !o.report.detected;
  // Shortcut regime: the true class's own score must clear the threshold.
  // Which class wins the argmax does not matter for the dataset-level call.
  return o.report.sag.at(static_cast<std::size_t>(*o.true_shortcut_class)) > o.report.epsilon;
}

}  // namespace detail

/// Fraction of outcomes where class `class_id` is judged correctly: in a
/// shortcut regime the true shortcut class must exceed its report's epsilon
/// and every other class must not; in a regular regime no class may.
inline double class_detection_accuracy(const std::vector<DetectionOutcome>& outcomes, Regime regime,
                                       int class_id) {
  detail::check_outcomes(outcomes, regime);
  std::size_t correct = 0;
  for (const auto& o : outcomes) {
    if (detail::class_correct(o, class_id)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(outcomes.size());
}

/// Fraction of outcomes judged correctly at whole-dataset level: a regular
/// dataset must yield no detection; a shortcut dataset is correct when its
/// true class's score exceeds epsilon.
inline double dataset_detection_accuracy(const std::vector<DetectionOutcome>& outcomes, Regime regime) {
  detail::check_outcomes(outcomes, regime);
  std::size_t correct = 0;
  for (const auto& o : outcomes) {
    if (detail::dataset_correct(o)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(outcomes.size());
}

struct RegimeMetrics {
  std::vector<std::size_t> class_correct;  // per class
  std::vector<double> class_accuracy;      // per class
  std::size_t dataset_correct = 0;
  double dataset_accuracy = 0.0;
};

/// The six summary numbers over a two-regime benchmark collection.
struct MetricSummary {
  std::size_t n_datasets = 0;
  RegimeMetrics regular;
  RegimeMetrics shortcut;
};

inline MetricSummary summarize_outcomes(const std::vector<DetectionOutcome>& regular,
                                        const std::vector<DetectionOutcome>& shortcut) {
  detail::check_outcomes(regular, Regime::regular);
  detail::check_outcomes(shortcut, Regime::shortcut);
  if (regular.size() != shortcut.size())
    throw input_error("metrics: regime collections differ in size");
  MetricSummary s;
  s.n_datasets = regular.size();
  const std::size_t classes = regular.front().report.sag.size();
  const auto fill = [&](const std::vector<DetectionOutcome>& outcomes, RegimeMetrics& rm) {
    rm.class_correct.assign(classes, 0);
    rm.class_accuracy.assign(classes, 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
      for (const auto& o : outcomes) {
        if (detail::class_correct(o, static_cast<int>(c))) ++rm.class_correct[c];
      }
      rm.class_accuracy[c] = static_cast<double>(rm.class_correct[c]) / static_cast<double>(outcomes.size());
    }
    rm.dataset_correct = 0;
    for (const auto& o : outcomes) {
      if (detail::dataset_correct(o)) ++rm.dataset_correct;
    }
    rm.dataset_accuracy = static_cast<double>(rm.dataset_correct) / static_cast<double>(outcomes.size());
  };
  fill(regular, s.regular);
  fill(shortcut, s.shortcut);
  return s;
}

// --- bundled reference score table ------------------------------------------

/// One row of the bundled benchmark: per-class scores for the same dataset
/// under regular and shortcut training.
struct ScoreTableRow {
  std::string dataset;
  double regular_c0 = 0.0, regular_c1 = 0.0;
  double shortcut_c0 = 0.0, shortcut_c1 = 0.0;
};

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

/// Parse a `dataset,reg_c0,reg_c1,sc_c0,sc_c1` CSV (header required).
inline std::vector<ScoreTableRow> parse_score_table(const std::string& content) {
  std::istringstream in(content);
  std::string line;
  if (!std::getline(in, line)) throw format_error("score table: empty file");
  std::vector<ScoreTableRow> rows;
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty() || line == "\r") continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    ScoreTableRow row;
    std::string field;
    if (!std::getline(ls, row.dataset, ',')) throw format_error("score table row " + std::to_string(row_no) + ": missing dataset name");
    double* slots[4] = {&row.regular_c0, &row.regular_c1, &row.shortcut_c0, &row.shortcut_c1};
    for (double* slot : slots) {
      if (!std::getline(ls, field, ','))
        throw format_error("score table row " + std::to_string(row_no) + ": expected 5 fields");
      try {
        std::size_t consumed = 0;
        *slot = std::stod(field, &consumed);
        if (consumed != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw format_error("score table row " + std::to_string(row_no) + ": bad number '" + field + "'");
      }
    }
    if (std::getline(ls, field, ','))
      throw format_error("score table row " + std::to_string(row_no) + ": trailing fields");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw format_error("score table: no data rows");
  return rows;
}

inline std::vector<ScoreTableRow> load_score_table(const std::filesystem::path& path) {
  return parse_score_table(read_file_bytes(path));
}

/// Rebuild detection outcomes from a score table (shortcut regime: true
/// class 1, matching the benchmark's injection convention) and compute the
/// summary metrics at the given threshold.
inline MetricSummary replay_score_table(const std::vector<ScoreTableRow>& rows, double epsilon) {
  if (!(epsilon > 0.0)) throw input_error("replay: epsilon must be > 0");
  std::vector<DetectionOutcome> regular, shortcut;
  regular.reserve(rows.size());
  shortcut.reserve(rows.size());
  const auto make_report = [epsilon](double c0, double c1) {
    SagReport r;
    r.sag = {c0, c1};
    r.epsilon = epsilon;
    const std::size_t best = c1 > c0 ? 1 : 0;
    r.detected = r.sag[best] > epsilon;
    if (r.detected) r.detected_class = static_cast<int>(best);
    return r;
  };
  for (const auto& row : rows) {
    regular.push_back({row.dataset, Regime::regular, std::nullopt, make_report(row.regular_c0, row.regular_c1)});
    shortcut.push_back({row.dataset, Regime::shortcut, 1, make_report(row.shortcut_c0, row.shortcut_c1)});
  }
  return summarize_outcomes(regular, shortcut);
}

}  // namespace sag
