#include "bcd/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bcd {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
constexpr int kPaletteSize = 8;

std::string escape_xml(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// Round-ish tick step covering the span with 4-8 ticks.
double tick_step(double span) {
  if (!(span > 0.0)) return 1.0;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double norm = raw / mag;
  double step = 10.0;
  if (norm <= 1.0) step = 1.0;
  else if (norm <= 2.0) step = 2.0;
  else if (norm <= 5.0) step = 5.0;
  return step * mag;
}

}  // namespace

std::string render_line_plot(const PlotSpec& spec, const std::vector<PlotSeries>& series) {
  for (const PlotSeries& s : series) {
    if (s.x.size() != s.y.size())
      throw std::invalid_argument("svg: series '" + s.label + "' has mismatched x/y lengths");
    if (!s.err.empty() && s.err.size() != s.y.size())
      throw std::invalid_argument("svg: series '" + s.label + "' has mismatched error length");
    if (s.x.empty()) throw std::invalid_argument("svg: series '" + s.label + "' is empty");
  }
  if (series.empty()) throw std::invalid_argument("svg: no series to plot");

  double x_min = series[0].x[0], x_max = x_min;
  double y_min = series[0].y[0], y_max = y_min;
  for (const PlotSeries& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x_min = std::min(x_min, s.x[i]);
      x_max = std::max(x_max, s.x[i]);
      const double e = s.err.empty() ? 0.0 : s.err[i];
      y_min = std::min(y_min, s.y[i] - e);
      y_max = std::max(y_max, s.y[i] + e);
    }
  if (x_max == x_min) { x_min -= 0.5; x_max += 0.5; }
  if (y_max == y_min) { y_min -= 0.5; y_max += 0.5; }
  const double y_pad = 0.05 * (y_max - y_min);
  y_min -= y_pad;
  y_max += y_pad;

  const double ml = 64, mr = 16, mt = 40, mb = 48;
  const double pw = spec.width - ml - mr;
  const double ph = spec.height - mt - mb;
  const auto px = [&](double x) { return ml + (x - x_min) / (x_max - x_min) * pw; };
  const auto py = [&](double y) { return mt + ph - (y - y_min) / (y_max - y_min) * ph; };

  std::ostringstream os;
  os.precision(8);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << spec.width << "\" height=\""
     << spec.height << "\" viewBox=\"0 0 " << spec.width << " " << spec.height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << spec.width / 2.0 << "\" y=\"22\" text-anchor=\"middle\" "
     << "font-family=\"sans-serif\" font-size=\"15\" font-weight=\"bold\">"
     << escape_xml(spec.title) << "</text>\n";

  // Axes frame.
  os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"#333\" stroke-width=\"1\"/>\n";

  // Ticks and grid lines.
  const double xs = tick_step(x_max - x_min);
  for (double t = std::ceil(x_min / xs) * xs; t <= x_max + 1e-9 * xs; t += xs) {
    const double X = px(t);
    os << "<line x1=\"" << X << "\" y1=\"" << mt << "\" x2=\"" << X << "\" y2=\"" << mt + ph
       << "\" stroke=\"#ddd\" stroke-width=\"0.5\"/>\n";
    os << "<line x1=\"" << X << "\" y1=\"" << mt + ph << "\" x2=\"" << X << "\" y2=\""
       << mt + ph + 4 << "\" stroke=\"#333\"/>\n";
    os << "<text x=\"" << X << "\" y=\"" << mt + ph + 18
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(t)
       << "</text>\n";
  }
  const double ys = tick_step(y_max - y_min);
  for (double t = std::ceil(y_min / ys) * ys; t <= y_max + 1e-9 * ys; t += ys) {
    const double Y = py(t);
    os << "<line x1=\"" << ml << "\" y1=\"" << Y << "\" x2=\"" << ml + pw << "\" y2=\"" << Y
       << "\" stroke=\"#ddd\" stroke-width=\"0.5\"/>\n";
    os << "<line x1=\"" << ml - 4 << "\" y1=\"" << Y << "\" x2=\"" << ml << "\" y2=\"" << Y
       << "\" stroke=\"#333\"/>\n";
    os << "<text x=\"" << ml - 7 << "\" y=\"" << Y + 4
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(t)
       << "</text>\n";
  }

  // Axis labels.
  os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << spec.height - 10
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
     << escape_xml(spec.x_label) << "</text>\n";
  os << "<text x=\"16\" y=\"" << mt + ph / 2
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 16 "
     << mt + ph / 2 << ")\">" << escape_xml(spec.y_label) << "</text>\n";

  // Series.
  for (std::size_t si = 0; si < series.size(); ++si) {
    const PlotSeries& s = series[si];
    const char* color = kPalette[si % kPaletteSize];
    if (!s.err.empty()) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        const double X = px(s.x[i]);
        os << "<line x1=\"" << X << "\" y1=\"" << py(s.y[i] - s.err[i]) << "\" x2=\"" << X
           << "\" y2=\"" << py(s.y[i] + s.err[i]) << "\" stroke=\"" << color
           << "\" stroke-width=\"1\"/>\n";
        os << "<line x1=\"" << X - 3 << "\" y1=\"" << py(s.y[i] - s.err[i]) << "\" x2=\"" << X + 3
           << "\" y2=\"" << py(s.y[i] - s.err[i]) << "\" stroke=\"" << color << "\"/>\n";
        os << "<line x1=\"" << X - 3 << "\" y1=\"" << py(s.y[i] + s.err[i]) << "\" x2=\"" << X + 3
           << "\" y2=\"" << py(s.y[i] + s.err[i]) << "\" stroke=\"" << color << "\"/>\n";
      }
    }
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      os << (i ? " " : "") << px(s.x[i]) << "," << py(s.y[i]);
    os << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      os << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"2.6\" fill=\""
         << color << "\"/>\n";
  }

  // Legend (top-right inside the frame).
  const double lx = ml + pw - 150, ly0 = mt + 10;
  for (std::size_t si = 0; si < series.size(); ++si) {
    const double ly = ly0 + 16.0 * static_cast<double>(si);
    os << "<line x1=\"" << lx << "\" y1=\"" << ly << "\" x2=\"" << lx + 22 << "\" y2=\"" << ly
       << "\" stroke=\"" << kPalette[si % kPaletteSize] << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << lx + 28 << "\" y=\"" << ly + 4
       << "\" font-family=\"sans-serif\" font-size=\"12\">" << escape_xml(series[si].label)
       << "</text>\n";
  }

  os << "</svg>\n";
  return os.str();
}

void write_line_plot(const std::string& path, const PlotSpec& spec,
                     const std::vector<PlotSeries>& series) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("svg: cannot open " + path + " for writing");
  os << render_line_plot(spec, series);
  if (!os) throw std::runtime_error("svg: write failed for " + path);
}

}  // namespace bcd
