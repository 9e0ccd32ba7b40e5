#pragma once

#include <string>
#include <vector>

namespace reidlab {

struct Series {
  std::string name;
  std::vector<double> y;  // NaN entries break the line
};

// Standalone SVG line chart sharing one x axis across all series.
std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::vector<double>& x, const std::vector<Series>& series,
                           bool log_y = false);

}  // namespace reidlab
