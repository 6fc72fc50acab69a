#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sag/errors.hpp"

namespace sag {

/// One polyline; x is the index 0..n-1.
struct SvgSeries {
  std::string label;
  std::vector<double> y;
};

struct SvgChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<SvgSeries> series;
};

/// Minimal static SVG 1.1 line chart: fixed 720x440 viewBox, plot frame,
/// min/max axis labels, one polyline per series, legend in the top-right.
/// No dependencies, byte-deterministic output.
inline void write_line_chart(const std::filesystem::path& path, const SvgChart& chart) {
  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  constexpr double kW = 720, kH = 440;
  constexpr double kLeft = 64, kRight = 24, kTop = 40, kBottom = 44;
  const double plot_w = kW - kLeft - kRight;
  const double plot_h = kH - kTop - kBottom;

  std::size_t n = 0;
  double lo = 0.0, hi = 1.0;
  bool first = true;
  for (const auto& s : chart.series) {
    n = std::max(n, s.y.size());
    for (double v : s.y) {
      if (first) {
        lo = hi = v;
        first = false;
      } else {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (n < 1) throw input_error("svg: need at least 1 point");
  if (hi - lo < 1e-12) {
    hi += 0.5;
    lo -= 0.5;
  }

  const auto fx = [&](std::size_t i, std::size_t len) {
    if (len < 2) return kLeft + plot_w / 2.0;
    return kLeft + plot_w * static_cast<double>(i) / static_cast<double>(len - 1);
  };
  const auto fy = [&](double v) { return kTop + plot_h * (1.0 - (v - lo) / (hi - lo)); };
  const auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return std::string(buf);
  };

  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 720 440\" "
         "font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"720\" height=\"440\" fill=\"white\"/>\n";
  out << "<text x=\"360\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << chart.title << "</text>\n";
  out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << plot_w << "\" height=\"" << plot_h
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  // axis extremes
  out << "<text x=\"" << kLeft - 6 << "\" y=\"" << kTop + 10 << "\" text-anchor=\"end\">" << num(hi)
      << "</text>\n";
  out << "<text x=\"" << kLeft - 6 << "\" y=\"" << kTop + plot_h << "\" text-anchor=\"end\">" << num(lo)
      << "</text>\n";
  out << "<text x=\"" << kLeft << "\" y=\"" << kH - 14 << "\">0</text>\n";
  out << "<text x=\"" << kLeft + plot_w << "\" y=\"" << kH - 14 << "\" text-anchor=\"end\">" << (n - 1)
      << "</text>\n";
  out << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kH - 14 << "\" text-anchor=\"middle\">"
      << chart.x_label << "</text>\n";
  out << "<text x=\"18\" y=\"" << kTop + plot_h / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << kTop + plot_h / 2 << ")\">" << chart.y_label << "</text>\n";

  for (std::size_t si = 0; si < chart.series.size(); ++si) {
    const auto& s = chart.series[si];
    if (s.y.empty()) continue;
    const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
    char buf[64];
    if (s.y.size() == 1) {
      std::snprintf(buf, sizeof(buf), "%.2f\" cy=\"%.2f", fx(0, 1), fy(s.y[0]));
      out << "<circle cx=\"" << buf << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    } else {
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < s.y.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", fx(i, s.y.size()), fy(s.y[i]));
        out << buf;
      }
      out << "\"/>\n";
    }
    const double ly = kTop + 14 + 16 * static_cast<double>(si);
    out << "<line x1=\"" << kLeft + plot_w - 150 << "\" y1=\"" << ly - 4 << "\" x2=\"" << kLeft + plot_w - 126
        << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
    out << "<text x=\"" << kLeft + plot_w - 120 << "\" y=\"" << ly << "\">" << s.label << "</text>\n";
  }
  out << "</svg>\n";
  out.flush();
  if (!out) throw io_error("write failed for " + path.string());
}

}  // namespace sag
