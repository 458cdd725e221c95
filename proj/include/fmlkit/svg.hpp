#pragma once

#include <string>
#include <vector>

namespace fmlkit::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color;  // empty = palette
  bool dashed = false;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;
  int width = 800;
  int height = 480;
  std::vector<Series> series;
};

/// Standalone SVG document. Non-finite points (and non-positive ones on a
/// log axis) break the polyline instead of being drawn.
std::string render(const LineChart& chart);
void write(const LineChart& chart, const std::string& path);

}  // namespace fmlkit::svg
