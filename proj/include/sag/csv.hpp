#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sag/errors.hpp"
#include "sag/metrics.hpp"
#include "sag/model.hpp"
#include "sag/score.hpp"

namespace sag {

/// Shortest round-trip decimal form of a double. Keeps CSV output
/// byte-reproducible without dumping 17 digits everywhere.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string format_fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return std::string(buf);
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);  // binary: no newline translation
  if (!out) throw io_error("cannot write " + path.string());
  return out;
}

inline void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw io_error("write failed for " + path.string());
}

}  // namespace detail

/// `epoch,train_loss,test_loss,train_acc,test_acc`, one row per epoch.
inline void write_train_record_csv(const std::filesystem::path& path, const TrainRecord& record) {
  auto out = detail::open_out(path);
  out << "epoch,train_loss,test_loss,train_acc,test_acc\n";
  for (std::size_t e = 0; e < record.train_loss.size(); ++e) {
    out << (e + 1) << ',' << format_double(record.train_loss[e]) << ',' << format_double(record.test_loss[e])
        << ',' << format_double(record.train_acc[e]) << ',' << format_double(record.test_acc[e]) << '\n';
  }
  detail::finish(out, path);
}

/// One row: `dataset,regime,sag_class0,...,epsilon,detected,detected_class`.
/// detected is 0/1; detected_class is empty when nothing fired.
inline void write_sag_report_csv(const std::filesystem::path& path, const std::string& dataset,
                                 const std::string& regime, const SagReport& report) {
  auto out = detail::open_out(path);
  out << "dataset,regime";
  for (std::size_t c = 0; c < report.sag.size(); ++c) out << ",sag_class" << c;
  out << ",epsilon,detected,detected_class\n";
  out << dataset << ',' << regime;
  for (double s : report.sag) out << ',' << format_double(s);
  out << ',' << format_double(report.epsilon) << ',' << (report.detected ? 1 : 0) << ',';
  if (report.detected_class) out << *report.detected_class;
  out << '\n';
  detail::finish(out, path);
}

/// `t,delta_class0,...,delta_class{C-1}`, one row per time step.
inline void write_delta_profile_csv(const std::filesystem::path& path, const ClassGradientProfile& profile) {
  auto out = detail::open_out(path);
  out << "t";
  for (std::size_t c = 0; c < profile.classes(); ++c) out << ",delta_class" << c;
  out << '\n';
  for (std::size_t t = 0; t < profile.length(); ++t) {
    out << t;
    for (std::size_t c = 0; c < profile.classes(); ++c) out << ',' << format_double(profile.delta.at(c, t));
    out << '\n';
  }
  detail::finish(out, path);
}

/// `regime,class,correct,n_datasets,class_accuracy,dataset_correct,dataset_accuracy`.
inline void write_metric_summary_csv(const std::filesystem::path& path, const MetricSummary& s) {
  auto out = detail::open_out(path);
  out << "regime,class,correct,n_datasets,class_accuracy,dataset_correct,dataset_accuracy\n";
  const auto rows = [&](const char* regime, const RegimeMetrics& rm) {
    for (std::size_t c = 0; c < rm.class_correct.size(); ++c) {
      out << regime << ',' << c << ',' << rm.class_correct[c] << ',' << s.n_datasets << ','
          << format_fixed(rm.class_accuracy[c], 3) << ',' << rm.dataset_correct << ','
          << format_fixed(rm.dataset_accuracy, 3) << '\n';
    }
  };
  rows("regular", s.regular);
  rows("shortcut", s.shortcut);
  detail::finish(out, path);
}

}  // namespace sag
