#include "fmlkit/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "fmlkit/common.hpp"

namespace fmlkit::svg {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// "Nice" tick spacing covering [lo, hi] with about `target` intervals.
std::vector<double> linear_ticks(double lo, double hi, int target) {
  const double raw = (hi - lo) / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step) ticks.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
  return ticks;
}

}  // namespace

std::string render(const LineChart& chart) {
  const double left = 80, right = 20, top = 40, bottom = 60;
  const double pw = chart.width - left - right;
  const double ph = chart.height - top - bottom;
  const bool with_legend = chart.series.size() > 1 || (!chart.series.empty() && !chart.series[0].label.empty());

  auto usable = [&](double x, double y) { return std::isfinite(x) && std::isfinite(y) && (!chart.log_y || y > 0.0); };
  auto ty = [&](double y) { return chart.log_y ? std::log10(y) : y; };

  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : chart.series) {
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) {
    const double pad = std::abs(y0) > 0 ? 0.1 * std::abs(y0) : 1.0;
    y0 -= pad;
    y1 += pad;
  }
  if (chart.log_y) {
    y0 = std::floor(y0);
    y1 = std::ceil(y1);
    if (y1 <= y0) y1 = y0 + 1;
  } else {
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
  }
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (ty(y) - y0) / (y1 - y0)) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << chart.width << "\" height=\"" << chart.height
    << "\" viewBox=\"0 0 " << chart.width << ' ' << chart.height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!chart.title.empty()) {
    o << "<text x=\"" << num(chart.width / 2.0) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << escape(chart.title) << "</text>\n";
  }

  // grid and ticks
  o << "<g stroke=\"#dddddd\" stroke-width=\"1\">\n";
  const auto xt = linear_ticks(x0, x1, 8);
  std::vector<double> yt;
  if (chart.log_y) {
    for (double e = y0; e <= y1 + 1e-9; e += 1.0) yt.push_back(e);
  } else {
    yt = linear_ticks(y0, y1, 6);
  }
  for (double t : xt) o << "<line x1=\"" << num(px(t)) << "\" y1=\"" << num(top) << "\" x2=\"" << num(px(t)) << "\" y2=\"" << num(top + ph) << "\"/>\n";
  for (double t : yt) {
    const double yy = top + (1.0 - (t - y0) / (y1 - y0)) * ph;
    o << "<line x1=\"" << num(left) << "\" y1=\"" << num(yy) << "\" x2=\"" << num(left + pw) << "\" y2=\"" << num(yy) << "\"/>\n";
  }
  o << "</g>\n";
  o << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : xt) {
    o << "<text x=\"" << num(px(t)) << "\" y=\"" << num(top + ph + 16) << "\" text-anchor=\"middle\">" << tick_label(t)
      << "</text>\n";
  }
  for (double t : yt) {
    const double yy = top + (1.0 - (t - y0) / (y1 - y0)) * ph;
    const std::string label = chart.log_y ? "1e" + tick_label(t) : tick_label(t);
    o << "<text x=\"" << num(left - 6) << "\" y=\"" << num(yy + 4) << "\" text-anchor=\"end\">" << label << "</text>\n";
  }
  if (!chart.x_label.empty()) {
    o << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(chart.height - 18.0) << "\" text-anchor=\"middle\">"
      << escape(chart.x_label) << "</text>\n";
  }
  if (!chart.y_label.empty()) {
    o << "<text transform=\"translate(18," << num(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(chart.y_label) << "</text>\n";
  }

  for (std::size_t si = 0; si < chart.series.size(); ++si) {
    const Series& s = chart.series[si];
    const std::string color = s.color.empty() ? kPalette[si % std::size(kPalette)] : s.color;
    std::vector<std::string> runs;
    std::string current;
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!usable(s.x[i], s.y[i])) {
        if (!current.empty()) runs.push_back(std::move(current));
        current.clear();
        continue;
      }
      if (!current.empty()) current += ' ';
      current += num(px(s.x[i])) + "," + num(py(s.y[i]));
    }
    if (!current.empty()) runs.push_back(std::move(current));
    for (const auto& pts : runs) {
      o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"";
      if (s.dashed) o << " stroke-dasharray=\"6,4\"";
      o << " points=\"" << pts << "\"/>\n";
    }
    if (with_legend) {
      const double ly = top + 14 + 16.0 * static_cast<double>(si);
      const double lx = left + pw - 170;
      o << "<line x1=\"" << num(lx) << "\" y1=\"" << num(ly - 4) << "\" x2=\"" << num(lx + 24) << "\" y2=\"" << num(ly - 4)
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"" << (s.dashed ? " stroke-dasharray=\"6,4\"" : "") << "/>\n";
      o << "<text x=\"" << num(lx + 30) << "\" y=\"" << num(ly) << "\">" << escape(s.label) << "</text>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

void write(const LineChart& chart, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing", path);
  out << render(chart);
}

}  // namespace fmlkit::svg
