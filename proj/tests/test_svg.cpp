#include <gtest/gtest.h>

#include <cmath>
#include <regex>
#include <set>

#include "farconf/error.hpp"
#include "farconf/svg.hpp"

using namespace farconf;

namespace {

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

void expect_document(const std::string& svg) {
  EXPECT_EQ(svg.rfind("<?xml", 0), 0u);
  EXPECT_EQ(count(svg, "<svg "), 1u);
  EXPECT_NE(svg.find("</svg>\n"), std::string::npos);
  EXPECT_EQ(svg.find("nan"), std::string::npos);
  EXPECT_EQ(count(svg, "<g"), count(svg, "</g>"));
}

}  // namespace

TEST(Scatter, EmptyIsValidDocument) {
  const std::string svg = render_scatter({}, PlotStyle{});
  expect_document(svg);
  EXPECT_EQ(count(svg, "class=\"marker\""), 0u);
}

TEST(Scatter, OneMarkerPerPoint) {
  ScatterData d;
  d.series.push_back({"a", "#ff0000", {{0, 0}, {1, 1}}, 2.0});
  d.series.push_back({"b", "#00ff00", {{-3, 2}}, 2.0});
  PlotStyle style;
  style.title = "a < b & c";
  const std::string svg = render_scatter(d, style);
  expect_document(svg);
  EXPECT_EQ(count(svg, "class=\"marker\""), 3u);
  EXPECT_NE(svg.find("a &lt; b &amp; c"), std::string::npos);
}

TEST(Scatter, MarkersInsidePlotArea) {
  ScatterData d;
  d.bounds = Box2{{-1, 1}, {-1, 1}};
  d.series.push_back({"s", "#000000", {{-1, -1}, {1, 1}, {0, 0}}, 2.0});
  const std::string svg = render_scatter(d, PlotStyle{});
  const std::regex re("class=\"marker\" cx=\"([0-9.]+)\" cy=\"([0-9.]+)\"");
  std::size_t n = 0;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), re); it != std::sregex_iterator(); ++it) {
    const double cx = std::stod((*it)[1]), cy = std::stod((*it)[2]);
    EXPECT_GE(cx, 0.0);
    EXPECT_LE(cx, 560.0);
    EXPECT_GE(cy, 0.0);
    EXPECT_LE(cy, 480.0);
    ++n;
  }
  EXPECT_EQ(n, 3u);
}

TEST(Heatmap, ConstantFieldIsOneColour) {
  HeatmapData h;
  h.box = Box2{};
  h.nx = 11;
  h.ny = 9;
  h.values.assign(99, 0.5);
  const std::string svg = render_heatmap(h, PlotStyle{});
  expect_document(svg);
  const std::regex re("class=\"cell\"[^>]*fill=\"(#[0-9a-f]{6})\"");
  std::set<std::string> colours;
  std::size_t cells = 0;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), re); it != std::sregex_iterator(); ++it) {
    colours.insert((*it)[1]);
    ++cells;
  }
  EXPECT_EQ(colours.size(), 1u);
  EXPECT_EQ(*colours.begin(), colormap(std::round(0.5 * 63) / 63));
  // one merged run per row
  EXPECT_EQ(cells, 9u);
}

TEST(Heatmap, Categorical) {
  HeatmapData h;
  h.nx = 2;
  h.ny = 2;
  h.values = {0, 1, 1, 2};
  h.categorical = true;
  h.category_labels = {"class 0", "class 1", "reject"};
  const std::string svg = render_heatmap(h, PlotStyle{});
  expect_document(svg);
  EXPECT_NE(svg.find(category_color(2)), std::string::npos);
  EXPECT_NE(svg.find("reject"), std::string::npos);
}

TEST(Heatmap, DimensionErrors) {
  HeatmapData h;
  h.nx = 3;
  h.ny = 3;
  h.values.assign(8, 0.0);
  EXPECT_THROW(render_heatmap(h, PlotStyle{}), DimensionError);
  h.nx = 1;
  h.ny = 8;
  EXPECT_THROW(render_heatmap(h, PlotStyle{}), DimensionError);
}

TEST(Colormap, EndpointsAndFormat) {
  const std::regex hex("#[0-9a-f]{6}");
  for (double t : {0.0, 0.25, 0.5, 1.0}) EXPECT_TRUE(std::regex_match(colormap(t), hex)) << t;
  EXPECT_NE(colormap(0.0), colormap(1.0));
  EXPECT_EQ(colormap(-3.0), colormap(0.0));
  EXPECT_EQ(colormap(7.0), colormap(1.0));
}
