#pragma once

#include <string>
#include <vector>

namespace tsgen {

/// Renders a rows x cols grid as an SVG heatmap (diverging blue-white-red
/// scale centered on zero when values are signed, white-to-red otherwise).
std::string svg_heatmap(const std::vector<std::vector<double>>& grid,
                        const std::string& title = "", int cell_px = 48);

/// Grouped bar chart: one group per label, one bar per series.
std::string svg_bar_chart(const std::vector<std::string>& labels,
                          const std::vector<std::string>& series_names,
                          const std::vector<std::vector<double>>& values,
                          const std::string& title = "");

void write_text_file(const std::string& path, const std::string& content);

}  // namespace tsgen
