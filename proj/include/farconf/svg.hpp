#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "farconf/synth.hpp"

namespace farconf {

struct PlotStyle {
  std::string title;
  std::string x_label = "x0";
  std::string y_label = "x1";
  int width = 560;
  int height = 480;
};

struct ScatterSeries {
  std::string label;
  std::string color = "#1f77b4";
  std::vector<std::array<double, 2>> points;
  double radius = 2.0;
};

struct ScatterData {
  std::vector<ScatterSeries> series;
  std::optional<Box2> bounds;  // data extent (padded) when unset
};

// Each point becomes one <circle class="marker">.
std::string render_scatter(const ScatterData& data, const PlotStyle& style);

struct HeatmapData {
  Box2 box;
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::vector<double> values;  // row-major over (iy, ix), y increasing with iy
  std::pair<double, double> range{0.0, 1.0};
  // Categorical maps colour values by integer index and label them in the legend.
  bool categorical = false;
  std::vector<std::string> category_labels;
  std::vector<ScatterSeries> overlay;
};

// Cells are <rect class="cell">; horizontally adjacent cells of equal colour
// are merged.
std::string render_heatmap(const HeatmapData& data, const PlotStyle& style);

// Continuous colour scale on [0, 1] as "#rrggbb".
std::string colormap(double t);
std::string category_color(std::size_t index);

}  // namespace farconf
