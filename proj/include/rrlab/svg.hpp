#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rrlab/ensemble.hpp"
#include "rrlab/numerics.hpp"

namespace rrlab {

// Figures are plain SVG. Each carries a <metadata> block with the color scale
// (heatmaps) and a generation timestamp taken from SOURCE_DATE_EPOCH when it
// is set, so output can be pinned for byte comparisons.

std::string svg_timestamp();

// K x K grid, every cell annotated with its value to two decimals. Colors map
// linearly from the matrix minimum (light) to its maximum (dark blue).
std::string heatmap_svg(const Matrix& m, const std::string& title, const std::string& row_label = "prompt",
                        const std::string& col_label = "response");

struct LineSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

std::string line_chart_svg(const std::vector<LineSeries>& series, const std::string& title, const std::string& x_label,
                           const std::string& y_label, double y_min, double y_max);

// One bar per source spanning [min, max] with a tick at the mean.
std::string range_bars_svg(const RewardRangeStats& stats, const std::string& title);

std::string xml_escape(const std::string& s);

}  // namespace rrlab
