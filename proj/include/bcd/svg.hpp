#pragma once

// Self-contained SVG line plots: polyline series with optional symmetric
// error bars, labeled axes with ticks, and a legend.  No external assets.

#include <string>
#include <vector>

namespace bcd {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> err;  // optional symmetric error bars; empty or same size as y
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 640;
  int height = 420;
};

std::string render_line_plot(const PlotSpec& spec, const std::vector<PlotSeries>& series);
void write_line_plot(const std::string& path, const PlotSpec& spec,
                     const std::vector<PlotSeries>& series);

}  // namespace bcd
