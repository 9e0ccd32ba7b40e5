#include "reidlab/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace reidlab {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 50;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                   "#9467bd", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::vector<double>& x, const std::vector<Series>& series,
                           bool log_y) {
  auto ty = [&](double v) { return log_y ? std::log10(v) : v; };
  auto usable = [&](double v) { return std::isfinite(v) && (!log_y || v > 0.0); };

  double x0 = x.empty() ? 0.0 : *std::min_element(x.begin(), x.end());
  double x1 = x.empty() ? 1.0 : *std::max_element(x.begin(), x.end());
  double y0 = std::numeric_limits<double>::infinity(), y1 = -y0;
  for (const auto& s : series)
    for (double v : s.y)
      if (usable(v)) {
        y0 = std::min(y0, ty(v));
        y1 = std::max(y1, ty(v));
      }
  if (!std::isfinite(y0)) y0 = 0.0, y1 = 1.0;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  if (x1 - x0 < 1e-12) x1 = x0 + 1.0;

  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double v) { return kLeft + (v - x0) / (x1 - x0) * pw; };
  auto py = [&](double v) { return kTop + (1.0 - (ty(v) - y0) / (y1 - y0)) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << escape(title) << "</text>\n";
  svg << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\""
      << ph << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fy = y0 + (y1 - y0) * i / 4.0;
    const double yy = kTop + (1.0 - i / 4.0) * ph;
    const double label = log_y ? std::pow(10.0, fy) : fy;
    svg << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + pw << "\" y1=\"" << yy
        << "\" y2=\"" << yy << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << yy + 4 << "\" text-anchor=\"end\">"
        << num(label) << "</text>\n";
    const double fx = x0 + (x1 - x0) * i / 4.0;
    svg << "<text x=\"" << px(fx) << "\" y=\"" << kTop + ph + 18
        << "\" text-anchor=\"middle\">" << num(fx) << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 10
      << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kColors[si % std::size(kColors)];
    std::string points;
    auto flush = [&] {
      if (!points.empty())
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\""
            << points << "\"/>\n";
      points.clear();
    };
    for (std::size_t i = 0; i < std::min(x.size(), s.y.size()); ++i) {
      if (!usable(s.y[i])) {
        flush();
        continue;
      }
      points += num(px(x[i])) + "," + num(py(s.y[i])) + " ";
    }
    flush();
    const double ly = kTop + 10 + 18.0 * static_cast<double>(si);
    svg << "<line x1=\"" << kLeft + pw + 10 << "\" x2=\"" << kLeft + pw + 30 << "\" y1=\"" << ly
        << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << kLeft + pw + 35 << "\" y=\"" << ly + 4 << "\">" << escape(s.name)
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace reidlab
