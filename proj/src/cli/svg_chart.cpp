// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cstdio>
#include <string>

#include "emotag/cli/commands.hpp"

namespace emotag {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string f1_bar_chart_svg(const std::vector<LabelReportRow>& rows, const ArtifactHeader& header,
                             std::string_view title) {
  constexpr double kLeft = 60, kTop = 40, kPlotH = 300, kBar = 22, kGap = 6, kBottom = 110;
  const double width = kLeft + static_cast<double>(rows.size()) * (kBar + kGap) + 20;
  const double height = kTop + kPlotH + kBottom;

  std::string r = header.render();
  // the header is a text comment line; inside SVG it becomes an XML comment
  r = "<!-- " + r.substr(2, r.size() - 3) + " -->\n";
  r += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" + num(height) +
       "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  r += "<text x=\"" + num(width / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) +
       "</text>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double v = tick / 4.0;
    const double y = kTop + kPlotH * (1.0 - v);
    r += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(y) + "\" x2=\"" + num(width - 10) + "\" y2=\"" + num(y) +
         "\" stroke=\"#ddd\"/>\n";
    r += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(y + 4) + "\" text-anchor=\"end\">" + tick_label(v) + "</text>\n";
  }
  r += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) + "\" y2=\"" +
       num(kTop + kPlotH) + "\" stroke=\"#000\"/>\n";
  r += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop + kPlotH) + "\" x2=\"" + num(width - 10) + "\" y2=\"" +
       num(kTop + kPlotH) + "\" stroke=\"#000\"/>\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double x = kLeft + kGap + static_cast<double>(i) * (kBar + kGap);
    const double h = kPlotH * std::clamp(rows[i].f1, 0.0, 1.0);
    r += "<rect x=\"" + num(x) + "\" y=\"" + num(kTop + kPlotH - h) + "\" width=\"" + num(kBar) + "\" height=\"" +
         num(h) + "\" fill=\"#4c72b0\"><title>" + escape(rows[i].label) + " " + format_g9(rows[i].f1) +
         "</title></rect>\n";
    const double lx = x + kBar / 2, ly = kTop + kPlotH + 8;
    r += "<text x=\"" + num(lx) + "\" y=\"" + num(ly) + "\" text-anchor=\"end\" transform=\"rotate(-60 " + num(lx) +
         " " + num(ly) + ")\">" + escape(rows[i].label) + "</text>\n";
  }
  r += "</svg>\n";
  return r;
}

}  // namespace emotag
