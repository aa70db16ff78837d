#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "casft/common.hpp"

namespace casft {

/// Minimal static line chart (SVG) for sweep outputs: one polyline per series
/// over a shared x axis.
inline void write_line_svg(const std::string& path, const std::string& title,
                           const std::vector<double>& xs,
                           const std::map<std::string, std::vector<double>>& series) {
  if (xs.empty()) throw CasftError("write_line_svg: no points");
  const double w = 640, h = 420, ml = 70, mr = 20, mt = 40, mb = 50;
  double ymin = 1e300, ymax = -1e300;
  for (const auto& [name, ys] : series)
    for (double y : ys) {
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (ymin == ymax) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const double xmin = *std::min_element(xs.begin(), xs.end());
  const double xmax = *std::max_element(xs.begin(), xs.end());
  const double xspan = xmax > xmin ? xmax - xmin : 1.0;

  auto px = [&](double x) { return ml + (x - xmin) / xspan * (w - ml - mr); };
  auto py = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };

  std::ofstream f(path);
  if (!f) throw CasftError("cannot write " + path);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
    << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
  f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  f << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title
    << "</text>\n";
  f << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\"" << h - mb
    << "\" stroke=\"black\"/>\n";
  f << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
    << "\" stroke=\"black\"/>\n";

  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  int ci = 0;
  double legend_y = mt + 4;
  for (const auto& [name, ys] : series) {
    const char* color = colors[ci++ % 4];
    f << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < xs.size() && i < ys.size(); ++i)
      f << px(xs[i]) << "," << py(ys[i]) << " ";
    f << "\"/>\n";
    for (std::size_t i = 0; i < xs.size() && i < ys.size(); ++i)
      f << "<circle cx=\"" << px(xs[i]) << "\" cy=\"" << py(ys[i]) << "\" r=\"3\" fill=\"" << color
        << "\"/>\n";
    f << "<text x=\"" << w - mr - 120 << "\" y=\"" << legend_y << "\" font-size=\"12\" fill=\""
      << color << "\">" << name << "</text>\n";
    legend_y += 16;
  }
  for (std::size_t i = 0; i < xs.size(); ++i)
    f << "<text x=\"" << px(xs[i]) << "\" y=\"" << h - mb + 18
      << "\" text-anchor=\"middle\" font-size=\"11\">" << xs[i] << "</text>\n";
  char buf[32];
  for (int i = 0; i <= 4; ++i) {
    const double y = ymin + (ymax - ymin) * i / 4.0;
    std::snprintf(buf, sizeof(buf), "%.3g", y);
    f << "<text x=\"" << ml - 8 << "\" y=\"" << py(y) + 4
      << "\" text-anchor=\"end\" font-size=\"11\">" << buf << "</text>\n";
  }
  f << "</svg>\n";
}

}  // namespace casft
