#ifndef LIRO_PLOT_HPP
#define LIRO_PLOT_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "liro/error.hpp"

namespace liro::plot {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

struct Extent {
  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
};

inline Extent extent_of(const std::vector<Series>& series) {
  Extent e{1e300, -1e300, 1e300, -1e300};
  bool any = false;
  for (const auto& s : series) {
    for (auto [x, y] : s.points) {
      e.xmin = std::min(e.xmin, x);
      e.xmax = std::max(e.xmax, x);
      e.ymin = std::min(e.ymin, y);
      e.ymax = std::max(e.ymax, y);
      any = true;
    }
  }
  if (!any) throw Error(ErrorKind::kValidation, "nothing to plot");
  return e;
}

struct PlotStyle {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool equal_aspect = false;  ///< one unit is the same length on both axes
  int width = 800;
  int height = 600;
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

/// Deterministic SVG with one polyline per series on a fixed viewport. The
/// data extent is recorded in the <desc> element.
inline std::string line_plot(const std::vector<Series>& series, const PlotStyle& style = {}) {
  using detail::num;
  static constexpr std::array<const char*, 6> kColors = {"#1f77b4", "#d62728", "#2ca02c",
                                                         "#ff7f0e", "#9467bd", "#8c564b"};
  const Extent data = extent_of(series);
  const double left = 70, right = 20, top = 40, bottom = 50;
  const double pw = style.width - left - right, ph = style.height - top - bottom;
  double xspan = std::max(data.xmax - data.xmin, 1e-9), yspan = std::max(data.ymax - data.ymin, 1e-9);
  double sx = pw / xspan, sy = ph / yspan;
  double x0 = data.xmin, y0 = data.ymin;
  if (style.equal_aspect) {
    const double s = std::min(sx, sy);
    x0 -= (pw / s - xspan) / 2;
    y0 -= (ph / s - yspan) / 2;
    sx = sy = s;
  }
  auto px = [&](double x) { return left + (x - x0) * sx; };
  auto py = [&](double y) { return top + ph - (y - y0) * sy; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << style.width << "\" height=\"" << style.height
    << "\" viewBox=\"0 0 " << style.width << ' ' << style.height << "\">\n";
  o << "<desc>extent " << detail::label(data.xmin) << ' ' << detail::label(data.xmax) << ' '
    << detail::label(data.ymin) << ' ' << detail::label(data.ymax) << "</desc>\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << style.width << "\" height=\"" << style.height << "\" fill=\"white\"/>\n";
  o << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
    << "\" fill=\"none\" stroke=\"#888\"/>\n";
  if (!style.title.empty()) {
    o << "<text x=\"" << num(style.width / 2.0) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << detail::escape(style.title) << "</text>\n";
  }
  o << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(style.height - 12.0)
    << "\" text-anchor=\"middle\" font-size=\"13\">" << detail::escape(style.x_label) << "</text>\n";
  o << "<text x=\"16\" y=\"" << num(top + ph / 2) << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 "
    << num(top + ph / 2) << ")\">" << detail::escape(style.y_label) << "</text>\n";
  // Axis labels at the corners of the data range.
  o << "<text x=\"" << num(px(data.xmin)) << "\" y=\"" << num(top + ph + 16) << "\" font-size=\"11\">"
    << detail::label(data.xmin) << "</text>\n";
  o << "<text x=\"" << num(px(data.xmax)) << "\" y=\"" << num(top + ph + 16) << "\" font-size=\"11\" text-anchor=\"end\">"
    << detail::label(data.xmax) << "</text>\n";
  o << "<text x=\"" << num(left - 4) << "\" y=\"" << num(py(data.ymin)) << "\" font-size=\"11\" text-anchor=\"end\">"
    << detail::label(data.ymin) << "</text>\n";
  o << "<text x=\"" << num(left - 4) << "\" y=\"" << num(py(data.ymax) + 10) << "\" font-size=\"11\" text-anchor=\"end\">"
    << detail::label(data.ymax) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kColors[k % kColors.size()];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[k].points.size(); ++i) {
      const auto [x, y] = series[k].points[i];
      o << (i ? " " : "") << num(px(x)) << ',' << num(py(y));
    }
    o << "\"/>\n";
    o << "<text x=\"" << num(left + 10) << "\" y=\"" << num(top + 16 + 16.0 * k) << "\" font-size=\"12\" fill=\"" << color
      << "\">" << detail::escape(series[k].name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace liro::plot

#endif  // LIRO_PLOT_HPP
