#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace s2qn::tools {
namespace {

constexpr double kWidth = 860.0;
constexpr double kHeight = 520.0;
constexpr double kLeft = 72.0;
constexpr double kRight = 24.0;
constexpr double kTop = 24.0;
constexpr double kBottom = 52.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                "#9467bd", "#ff7f0e", "#8c564b"};
constexpr int kPaletteSize = 6;

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

}  // namespace

std::string render_line_plot(const std::vector<Series>& series,
                             const std::string& x_label,
                             const std::string& y_label, bool log_y) {
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;

  // Range over plottable points only. log mode works in log10(y).
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  auto usable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!log_y || y > 0.0);
  };
  for (const auto& s : series)
    for (auto [x, y] : s.points)
      if (usable(x, y)) {
        double ty = log_y ? std::log10(y) : y;
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, ty);
        ymax = std::max(ymax, ty);
      }

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kWidth) +
         "\" height=\"" + fmt(kHeight) + "\" viewBox=\"0 0 " + fmt(kWidth) +
         " " + fmt(kHeight) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  if (!std::isfinite(xmin)) {
    svg += "<text x=\"" + fmt(kWidth / 2) + "\" y=\"" + fmt(kHeight / 2) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\">no plottable "
           "data</text>\n</svg>\n";
    return svg;
  }
  if (xmax <= xmin) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (ymax <= ymin) {
    ymin -= 1.0;
    ymax += 1.0;
  }

  auto px = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * plot_w; };
  auto py = [&](double ty) {
    return kTop + (1.0 - (ty - ymin) / (ymax - ymin)) * plot_h;
  };

  // Gridlines and tick labels. Log axis prefers integer decades when at
  // least two fall inside the range.
  struct Tick {
    double t;           // position in transformed coordinates
    std::string label;
  };
  std::vector<Tick> yticks;
  if (log_y) {
    double lo = std::ceil(ymin - 1e-9), hi = std::floor(ymax + 1e-9);
    if (hi - lo >= 1.0) {
      for (double d = lo; d <= hi + 1e-9; d += std::max(1.0, std::floor((hi - lo) / 6.0)))
        yticks.push_back({d, "1e" + fmt(d)});
    }
  }
  if (yticks.empty())
    for (int i = 0; i <= 4; ++i) {
      double t = ymin + (ymax - ymin) * i / 4.0;
      yticks.push_back({t, log_y ? fmt(std::pow(10.0, t)) : fmt(t)});
    }

  for (const auto& tk : yticks) {
    double y = py(tk.t);
    svg += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(y) + "\" x2=\"" +
           fmt(kWidth - kRight) + "\" y2=\"" + fmt(y) +
           "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + fmt(kLeft - 6) + "\" y=\"" + fmt(y + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">" +
           escape(tk.label) + "</text>\n";
  }
  for (int i = 0; i <= 5; ++i) {
    double x = xmin + (xmax - xmin) * i / 5.0;
    double xp = px(x);
    svg += "<line x1=\"" + fmt(xp) + "\" y1=\"" + fmt(kTop) + "\" x2=\"" +
           fmt(xp) + "\" y2=\"" + fmt(kHeight - kBottom) +
           "\" stroke=\"#eeeeee\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + fmt(xp) + "\" y=\"" + fmt(kHeight - kBottom + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
           fmt(x) + "</text>\n";
  }

  // Axes
  svg += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(kTop) + "\" x2=\"" +
         fmt(kLeft) + "\" y2=\"" + fmt(kHeight - kBottom) +
         "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  svg += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(kHeight - kBottom) +
         "\" x2=\"" + fmt(kWidth - kRight) + "\" y2=\"" +
         fmt(kHeight - kBottom) + "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  svg += "<text x=\"" + fmt(kLeft + plot_w / 2) + "\" y=\"" +
         fmt(kHeight - 14) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" +
         escape(x_label) + "</text>\n";
  svg += "<text x=\"16\" y=\"" + fmt(kTop + plot_h / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
         "transform=\"rotate(-90 16 " +
         fmt(kTop + plot_h / 2) + ")\">" + escape(y_label) + "</text>\n";

  for (size_t si = 0; si < series.size(); ++si) {
    const char* color = kPalette[si % kPaletteSize];
    std::string d;
    bool open = false;
    for (auto [x, y] : series[si].points) {
      if (!usable(x, y)) {
        open = false;
        continue;
      }
      double ty = log_y ? std::log10(y) : y;
      d += (open ? " L " : " M ");
      d += fmt(px(x)) + " " + fmt(py(ty));
      open = true;
    }
    if (!d.empty())
      svg += "<path fill=\"none\" stroke=\"" + std::string(color) +
             "\" stroke-width=\"1.8\" d=\"" + d + "\"/>\n";

    double ly = kTop + 18.0 + 18.0 * static_cast<double>(si);
    double lx = kWidth - kRight - 170.0;
    svg += "<rect x=\"" + fmt(lx) + "\" y=\"" + fmt(ly - 9) +
           "\" width=\"12\" height=\"12\" fill=\"" + color + "\"/>\n";
    svg += "<text x=\"" + fmt(lx + 18) + "\" y=\"" + fmt(ly + 2) +
           "\" font-family=\"sans-serif\" font-size=\"12\">" +
           escape(series[si].label) + "</text>\n";
  }

  svg += "</svg>\n";
  return svg;
}

}  // namespace s2qn::tools
