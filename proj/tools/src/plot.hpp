#ifndef S2QN_TOOLS_PLOT_HPP
#define S2QN_TOOLS_PLOT_HPP

#include <string>
#include <utility>
#include <vector>

namespace s2qn::tools {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (x, y)
};

// Self-contained SVG line chart, no external assets. In log mode points with
// y <= 0 are dropped; non-finite points break the line. Output is a pure
// function of the input, so replays produce identical files.
std::string render_line_plot(const std::vector<Series>& series,
                             const std::string& x_label,
                             const std::string& y_label, bool log_y);

}  // namespace s2qn::tools

#endif  // S2QN_TOOLS_PLOT_HPP
