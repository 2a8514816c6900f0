#pragma once

// Minimal static SVG charts for loss curves and per-class scores.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace sympoint {

struct PlotSeries {
  std::string name;
  std::vector<double> values;
};

namespace plot_detail {

inline constexpr const char* kPalette[] = {"#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#42d4f4", "#808000"};

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

}  // namespace plot_detail

/// One polyline per series over x = 1..n, shared y axis from 0 to the max.
inline std::string svg_line_chart(const std::string& title, const std::string& xlabel,
                                  const std::vector<PlotSeries>& series) {
  using namespace plot_detail;
  const double w = 640, h = 400, left = 60, right = 120, top = 40, bottom = 50;
  std::size_t n = 0;
  double ymax = 0.0;
  for (const auto& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values)
      if (std::isfinite(v)) ymax = std::max(ymax, v);
  }
  if (ymax <= 0) ymax = 1;
  const double pw = w - left - right, ph = h - top - bottom;
  auto px = [&](std::size_t i) { return left + (n > 1 ? pw * double(i) / double(n - 1) : pw / 2); };
  auto py = [&](double v) { return top + ph * (1.0 - v / ymax); };
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + num(w / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
         escape(title) + "</text>\n";
  out += "<line x1=\"" + num(left) + "\" y1=\"" + num(top + ph) + "\" x2=\"" + num(left + pw) + "\" y2=\"" +
         num(top + ph) + "\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" + num(left) + "\" y2=\"" + num(top + ph) +
         "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = ymax * k / 4.0;
    out += "<text x=\"" + num(left - 6) + "\" y=\"" + num(py(v) + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + num(v) + "</text>\n";
  }
  out += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(h - 12) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + escape(xlabel) + " (1-" +
         std::to_string(n) + ")</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % std::size(kPalette)];
    std::string pts;
    for (std::size_t i = 0; i < series[s].values.size(); ++i) {
      const double v = series[s].values[i];
      if (!std::isfinite(v)) continue;
      pts += (pts.empty() ? "" : " ") + num(px(i)) + "," + num(py(v));
    }
    out += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    const double ly = top + 16.0 * double(s);
    out += "<line x1=\"" + num(left + pw + 10) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(left + pw + 30) + "\" y2=\"" +
           num(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + num(left + pw + 36) + "\" y=\"" + num(ly + 4) +
           "\" font-family=\"sans-serif\" font-size=\"12\">" + escape(series[s].name) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

/// Vertical bars with values in [0, 1].
inline std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& names,
                                 const std::vector<double>& values) {
  using namespace plot_detail;
  const double w = std::max(320.0, 60.0 * double(names.size()) + 80.0), h = 320, left = 50, top = 40, bottom = 60;
  const double ph = h - top - bottom;
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + num(w / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
         escape(title) + "</text>\n";
  out += "<line x1=\"" + num(left) + "\" y1=\"" + num(top + ph) + "\" x2=\"" + num(w - 20) + "\" y2=\"" +
         num(top + ph) + "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < names.size() && i < values.size(); ++i) {
    const double v = std::clamp(values[i], 0.0, 1.0);
    const double x = left + 10 + 60.0 * double(i);
    out += "<rect x=\"" + num(x) + "\" y=\"" + num(top + ph * (1 - v)) + "\" width=\"40\" height=\"" + num(ph * v) +
           "\" fill=\"" + kPalette[i % std::size(kPalette)] + "\"/>\n";
    out += "<text x=\"" + num(x + 20) + "\" y=\"" + num(top + ph * (1 - v) - 4) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + num(values[i]) + "</text>\n";
    out += "<text x=\"" + num(x + 20) + "\" y=\"" + num(top + ph + 16) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + escape(names[i]) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace sympoint
