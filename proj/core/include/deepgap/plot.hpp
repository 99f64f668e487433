#pragma once

#include <span>
#include <string>
#include <vector>

namespace deepgap {

struct PlotSeries {
  std::string label;
  std::vector<double> values;
};

/// Minimal standalone SVG line chart; x is the sample index.
std::string line_chart_svg(const std::string& title, std::span<const PlotSeries> series);

/// Vertical bar chart, one bar per label.
std::string bar_chart_svg(const std::string& title, std::span<const std::string> labels,
                          std::span<const double> values);

}  // namespace deepgap
