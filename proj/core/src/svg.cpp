#include "tsgen/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tsgen/errors.hpp"

namespace tsgen {

namespace {

std::string rgb(int r, int g, int b) {
    std::ostringstream s;
    s << "rgb(" << r << "," << g << "," << b << ")";
    return s.str();
}

// t in [-1,1]: blue (negative) -> white -> red (positive)
std::string diverging_color(double t) {
    t = std::clamp(t, -1.0, 1.0);
    if (t >= 0) {
        const int c = static_cast<int>(std::lround(255 * (1.0 - t)));
        return rgb(255, c, c);
    }
    const int c = static_cast<int>(std::lround(255 * (1.0 + t)));
    return rgb(c, c, 255);
}

}  // namespace

std::string svg_heatmap(const std::vector<std::vector<double>>& grid,
                        const std::string& title, int cell_px) {
    const int rows = static_cast<int>(grid.size());
    const int cols = rows ? static_cast<int>(grid[0].size()) : 0;
    double amax = 0.0;
    for (const auto& row : grid)
        for (double v : row) amax = std::max(amax, std::abs(v));
    if (amax == 0.0) amax = 1.0;

    const int top = title.empty() ? 8 : 28;
    const int width = cols * cell_px + 16;
    const int height = rows * cell_px + top + 8;

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\">\n";
    if (!title.empty())
        s << "<text x=\"8\" y=\"18\" font-family=\"monospace\" font-size=\"14\">" << title
          << "</text>\n";
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const double v = grid[r][c];
            s << "<rect x=\"" << 8 + c * cell_px << "\" y=\"" << top + r * cell_px
              << "\" width=\"" << cell_px << "\" height=\"" << cell_px << "\" fill=\""
              << diverging_color(v / amax) << "\" stroke=\"#999\"/>\n";
            std::ostringstream label;
            label.precision(3);
            label << v;
            s << "<text x=\"" << 8 + c * cell_px + 4 << "\" y=\"" << top + r * cell_px + cell_px / 2 + 4
              << "\" font-family=\"monospace\" font-size=\"10\">" << label.str() << "</text>\n";
        }
    }
    s << "</svg>\n";
    return s.str();
}

std::string svg_bar_chart(const std::vector<std::string>& labels,
                          const std::vector<std::string>& series_names,
                          const std::vector<std::vector<double>>& values,
                          const std::string& title) {
    const int ngroups = static_cast<int>(labels.size());
    const int nseries = static_cast<int>(series_names.size());
    double vmax = 0.0;
    for (const auto& row : values)
        for (double v : row) vmax = std::max(vmax, v);
    if (vmax == 0.0) vmax = 1.0;

    const int bar_w = 26, gap = 24, plot_h = 220, top = 40, left = 50;
    const int group_w = nseries * bar_w + gap;
    const int width = left + ngroups * group_w + 20;
    const int height = top + plot_h + 60;

    static const char* palette[] = {"#4878d0", "#ee854a", "#6acc64", "#d65f5f",
                                    "#956cb4", "#8c613c"};

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\">\n";
    if (!title.empty())
        s << "<text x=\"" << left << "\" y=\"22\" font-family=\"monospace\" font-size=\"14\">"
          << title << "</text>\n";
    s << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << width - 10
      << "\" y2=\"" << top + plot_h << "\" stroke=\"#333\"/>\n";
    for (int g = 0; g < ngroups; ++g) {
        for (int k = 0; k < nseries; ++k) {
            const double v = (g < static_cast<int>(values.size()) &&
                              k < static_cast<int>(values[g].size()))
                                 ? values[g][k]
                                 : 0.0;
            const int h = static_cast<int>(std::lround(plot_h * v / vmax));
            const int x = left + g * group_w + k * bar_w;
            s << "<rect x=\"" << x << "\" y=\"" << top + plot_h - h << "\" width=\""
              << bar_w - 3 << "\" height=\"" << h << "\" fill=\"" << palette[k % 6]
              << "\"/>\n";
        }
        s << "<text x=\"" << left + g * group_w << "\" y=\"" << top + plot_h + 16
          << "\" font-family=\"monospace\" font-size=\"11\">" << labels[g] << "</text>\n";
    }
    for (int k = 0; k < nseries; ++k) {
        const int y = top + plot_h + 34 + 14 * (k / 4);
        const int x = left + (k % 4) * 140;
        s << "<rect x=\"" << x << "\" y=\"" << y - 9 << "\" width=\"10\" height=\"10\" fill=\""
          << palette[k % 6] << "\"/>\n";
        s << "<text x=\"" << x + 14 << "\" y=\"" << y << "\" font-family=\"monospace\" "
          << "font-size=\"11\">" << series_names[k] << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write file: " + path);
    out << content;
}

}  // namespace tsgen
