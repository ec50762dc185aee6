#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "fes/error.hpp"
#include "fes/io.hpp"

namespace fes {
namespace svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  snprintf(buf, sizeof buf, "%.4g", v);
  return std::string(buf);
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                 "#ff7f0e", "#8c564b", "#17becf"};
  return colors[i % 7];
}

} // namespace detail

/// Minimal line plot; data-only rendering, no interactivity.
inline void line_plot(const std::vector<Series>& series, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::filesystem::path& path) {
  require_arg(!series.empty(), "line plot needs at least one series");
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (ymin == ymax) {
    ymin -= 1.0;
    ymax += 1.0;
  }
  if (xmin == xmax) xmax += 1.0;
  const double w = 640, h = 400, ml = 60, mr = 140, mt = 40, mb = 50;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
  auto py = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
         "viewBox=\"0 0 640 400\">\n";
  out += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  out += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" + title +
         "</text>\n";
  out += "<line x1=\"" + detail::num(ml) + "\" y1=\"" + detail::num(h - mb) + "\" x2=\"" +
         detail::num(w - mr) + "\" y2=\"" + detail::num(h - mb) + "\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + detail::num(ml) + "\" y1=\"" + detail::num(mt) + "\" x2=\"" +
         detail::num(ml) + "\" y2=\"" + detail::num(h - mb) + "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    double xv = xmin + (xmax - xmin) * k / 4.0;
    double yv = ymin + (ymax - ymin) * k / 4.0;
    out += "<text x=\"" + detail::num(px(xv)) + "\" y=\"" + detail::num(h - mb + 18) +
           "\" text-anchor=\"middle\" font-size=\"11\">" + detail::num(xv) + "</text>\n";
    out += "<text x=\"" + detail::num(ml - 8) + "\" y=\"" + detail::num(py(yv) + 4) +
           "\" text-anchor=\"end\" font-size=\"11\">" + detail::num(yv) + "</text>\n";
  }
  out += "<text x=\"" + detail::num((ml + w - mr) / 2) + "\" y=\"" + detail::num(h - 12) +
         "\" text-anchor=\"middle\" font-size=\"12\">" + x_label + "</text>\n";
  out += "<text x=\"16\" y=\"" + detail::num((mt + h - mb) / 2) +
         "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 " +
         detail::num((mt + h - mb) / 2) + ")\">" + y_label + "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      pts += detail::num(px(s.x[i]));
      pts += ',';
      pts += detail::num(py(s.y[i]));
      pts += ' ';
    }
    out += "<polyline fill=\"none\" stroke=\"" + std::string(detail::palette(si)) +
           "\" stroke-width=\"1.6\" points=\"" + pts + "\"/>\n";
    double ly = mt + 16.0 * static_cast<double>(si);
    out += "<line x1=\"" + detail::num(w - mr + 10) + "\" y1=\"" + detail::num(ly) + "\" x2=\"" +
           detail::num(w - mr + 30) + "\" y2=\"" + detail::num(ly) + "\" stroke=\"" +
           detail::palette(si) + "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + detail::num(w - mr + 34) + "\" y=\"" + detail::num(ly + 4) +
           "\" font-size=\"11\">" + s.label + "</text>\n";
  }
  out += "</svg>\n";
  io::write_text(path, out);
}

/// Heatmap of a row-major matrix; values clamped at zero for display only.
inline void heatmap(const std::vector<double>& m, int rows, int cols, const std::string& title,
                    const std::filesystem::path& path) {
  require_arg(rows > 0 && cols > 0 && m.size() == static_cast<std::size_t>(rows) * cols,
              "heatmap matrix size mismatch");
  double vmax = 0.0;
  for (double v : m) vmax = std::max(vmax, v);
  if (vmax <= 0.0) vmax = 1.0;
  double cell = std::min(640.0 / cols, 320.0 / rows);
  double w = cols * cell + 40, h = rows * cell + 60;

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::num(w) + "\" height=\"" +
         detail::num(h) + "\">\n";
  out += "<rect width=\"" + detail::num(w) + "\" height=\"" + detail::num(h) +
         "\" fill=\"white\"/>\n";
  out += "<text x=\"" + detail::num(w / 2) + "\" y=\"20\" text-anchor=\"middle\" "
         "font-size=\"14\">" + title + "</text>\n";
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double v = std::max(0.0, m[static_cast<std::size_t>(r) * cols + c]) / vmax;
      int red = static_cast<int>(255 * v);
      int blue = static_cast<int>(255 * (1.0 - v));
      int green = static_cast<int>(80 * (1.0 - std::abs(2 * v - 1)));
      char color[8];
      snprintf(color, sizeof color, "#%02x%02x%02x", red, green, blue);
      out += "<rect x=\"" + detail::num(20 + c * cell) + "\" y=\"" + detail::num(30 + r * cell) +
             "\" width=\"" + detail::num(cell) + "\" height=\"" + detail::num(cell) +
             "\" fill=\"" + color + "\"/>\n";
    }
  }
  out += "</svg>\n";
  io::write_text(path, out);
}

} // namespace svg
} // namespace fes
