#pragma once

#include <string>
#include <vector>

namespace geomlab {

struct SvgSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

// Static line chart (axes, ticks, legend, one polyline per series).
void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<SvgSeries>& series);

}  // namespace geomlab
