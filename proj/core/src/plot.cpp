#include "deepgap/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace deepgap {
namespace {

constexpr double kWidth = 800, kHeight = 360, kLeft = 60, kRight = 160, kTop = 40, kBottom = 40;
constexpr const char* kColors[] = {"#222222", "#d62728", "#1f77b4", "#2ca02c", "#9467bd",
                                   "#ff7f0e"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string header(const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
         num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n" +
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<text x=\"" + num(kLeft) +
         "\" y=\"20\" font-size=\"14\">" + escape(title) + "</text>\n";
}

}  // namespace

std::string line_chart_svg(const std::string& title, std::span<const PlotSeries> series) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  std::size_t n = 0;
  for (const auto& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](std::size_t i) { return kLeft + (n > 1 ? plot_w * i / (n - 1.0) : 0.0); };
  auto py = [&](double v) { return kTop + plot_h * (hi - v) / (hi - lo); };

  std::string svg = header(title);
  svg += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop + plot_h) + "\" x2=\"" +
         num(kLeft + plot_w) + "\" y2=\"" + num(kTop + plot_h) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) +
         "\" y2=\"" + num(kTop + plot_h) + "\" stroke=\"black\"/>\n";
  svg += "<text x=\"4\" y=\"" + num(kTop + 4) + "\">" + num(hi) + "</text>\n";
  svg += "<text x=\"4\" y=\"" + num(kTop + plot_h) + "\">" + num(lo) + "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kColors[k % std::size(kColors)];
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" points=\"";
    for (std::size_t i = 0; i < series[k].values.size(); ++i) {
      svg += (i ? " " : "") + num(px(i)) + "," + num(py(series[k].values[i]));
    }
    svg += "\"/>\n";
    const double ly = kTop + 16.0 * k;
    svg += "<line x1=\"" + num(kWidth - kRight + 10) + "\" y1=\"" + num(ly) + "\" x2=\"" +
           num(kWidth - kRight + 30) + "\" y2=\"" + num(ly) + "\" stroke=\"" + color + "\"/>\n";
    svg += "<text x=\"" + num(kWidth - kRight + 35) + "\" y=\"" + num(ly + 4) + "\">" +
           escape(series[k].label) + "</text>\n";
  }
  return svg + "</svg>\n";
}

std::string bar_chart_svg(const std::string& title, std::span<const std::string> labels,
                          std::span<const double> values) {
  double hi = 0.0;
  for (double v : values) {
    hi = std::max(hi, v);
  }
  if (!(hi > 0.0)) {
    hi = 1.0;
  }
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  const double slot = values.empty() ? plot_w : plot_w / static_cast<double>(values.size());
  std::string svg = header(title);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double h = plot_h * values[i] / hi;
    const double x = kLeft + slot * i + slot * 0.15;
    svg += "<rect x=\"" + num(x) + "\" y=\"" + num(kTop + plot_h - h) + "\" width=\"" +
           num(slot * 0.7) + "\" height=\"" + num(h) + "\" fill=\"" +
           kColors[(i + 1) % std::size(kColors)] + "\"/>\n";
    svg += "<text x=\"" + num(x) + "\" y=\"" + num(kTop + plot_h - h - 4) + "\">" +
           num(values[i]) + "</text>\n";
    svg += "<text x=\"" + num(x) + "\" y=\"" + num(kTop + plot_h + 16) + "\">" +
           escape(i < labels.size() ? labels[i] : "") + "</text>\n";
  }
  return svg + "</svg>\n";
}

}  // namespace deepgap
