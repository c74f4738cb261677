#include "farconf/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "farconf/error.hpp"

namespace farconf {

namespace {

constexpr double kMarginLeft = 56;
constexpr double kMarginRight = 110;
constexpr double kMarginTop = 34;
constexpr double kMarginBottom = 48;
constexpr int kColorLevels = 64;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

// Maps data coordinates into the plot rectangle.
struct Frame {
  Box2 box;
  double left, top, width, height;

  double px(double x) const { return left + (x - box.x.first) / (box.x.second - box.x.first) * width; }
  double py(double y) const { return top + height - (y - box.y.first) / (box.y.second - box.y.first) * height; }
};

Frame make_frame(const Box2& box, const PlotStyle& style) {
  return {box, kMarginLeft, kMarginTop, style.width - kMarginLeft - kMarginRight,
          style.height - kMarginTop - kMarginBottom};
}

void open_document(std::string& out, const PlotStyle& style) {
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(style.width) +
         "\" height=\"" + std::to_string(style.height) + "\" viewBox=\"0 0 " +
         std::to_string(style.width) + " " + std::to_string(style.height) +
         "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!style.title.empty()) {
    out += "<text x=\"" + num(style.width / 2.0) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" +
           escape(style.title) + "</text>\n";
  }
}

void draw_axes(std::string& out, const Frame& f, const PlotStyle& style) {
  out += "<g class=\"axes\" stroke=\"black\" fill=\"none\">\n";
  out += "<rect x=\"" + num(f.left) + "\" y=\"" + num(f.top) + "\" width=\"" + num(f.width) +
         "\" height=\"" + num(f.height) + "\"/>\n";
  constexpr int kTicks = 5;
  for (int i = 0; i < kTicks; ++i) {
    const double tx = f.box.x.first + (f.box.x.second - f.box.x.first) * i / (kTicks - 1);
    const double ty = f.box.y.first + (f.box.y.second - f.box.y.first) * i / (kTicks - 1);
    const double x = f.px(tx);
    const double y = f.py(ty);
    out += "<line x1=\"" + num(x) + "\" y1=\"" + num(f.top + f.height) + "\" x2=\"" + num(x) +
           "\" y2=\"" + num(f.top + f.height + 4) + "\"/>\n";
    out += "<line x1=\"" + num(f.left - 4) + "\" y1=\"" + num(y) + "\" x2=\"" + num(f.left) +
           "\" y2=\"" + num(y) + "\"/>\n";
    out += "<text stroke=\"none\" fill=\"black\" x=\"" + num(x) + "\" y=\"" +
           num(f.top + f.height + 16) + "\" text-anchor=\"middle\">" + num(tx) + "</text>\n";
    out += "<text stroke=\"none\" fill=\"black\" x=\"" + num(f.left - 6) + "\" y=\"" + num(y + 4) +
           "\" text-anchor=\"end\">" + num(ty) + "</text>\n";
  }
  out += "</g>\n";
  out += "<text x=\"" + num(f.left + f.width / 2) + "\" y=\"" + num(f.top + f.height + 34) +
         "\" text-anchor=\"middle\">" + escape(style.x_label) + "</text>\n";
  out += "<text x=\"14\" y=\"" + num(f.top + f.height / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
         num(f.top + f.height / 2) + ")\">" + escape(style.y_label) + "</text>\n";
}

void draw_markers(std::string& out, const Frame& f, const std::vector<ScatterSeries>& series) {
  out += "<g clip-path=\"url(#plot-area)\">\n";
  for (const auto& s : series) {
    out += "<g class=\"series\" fill=\"" + escape(s.color) + "\">\n";
    for (const auto& p : s.points) {
      out += "<circle class=\"marker\" cx=\"" + num(f.px(p[0])) + "\" cy=\"" + num(f.py(p[1])) +
             "\" r=\"" + num(s.radius) + "\"/>\n";
    }
    out += "</g>\n";
  }
  out += "</g>\n";
}

void draw_series_legend(std::string& out, const Frame& f, const std::vector<ScatterSeries>& series,
                        double y0) {
  double y = y0;
  for (const auto& s : series) {
    if (s.label.empty()) continue;
    const double x = f.left + f.width + 12;
    out += "<circle cx=\"" + num(x + 5) + "\" cy=\"" + num(y - 4) + "\" r=\"4\" fill=\"" +
           escape(s.color) + "\"/>\n";
    out += "<text x=\"" + num(x + 14) + "\" y=\"" + num(y) + "\">" + escape(s.label) + "</text>\n";
    y += 16;
  }
}

void clip_path(std::string& out, const Frame& f) {
  out += "<defs><clipPath id=\"plot-area\"><rect x=\"" + num(f.left) + "\" y=\"" + num(f.top) +
         "\" width=\"" + num(f.width) + "\" height=\"" + num(f.height) + "\"/></clipPath></defs>\n";
}

Box2 scatter_bounds(const ScatterData& data) {
  if (data.bounds) return *data.bounds;
  double xlo = INFINITY, xhi = -INFINITY, ylo = INFINITY, yhi = -INFINITY;
  for (const auto& s : data.series) {
    for (const auto& p : s.points) {
      xlo = std::min(xlo, p[0]);
      xhi = std::max(xhi, p[0]);
      ylo = std::min(ylo, p[1]);
      yhi = std::max(yhi, p[1]);
    }
  }
  if (!std::isfinite(xlo)) return Box2{{-1.0, 1.0}, {-1.0, 1.0}};
  const double px = std::max(1e-9, 0.05 * (xhi - xlo)) + (xhi == xlo ? 1.0 : 0.0);
  const double py = std::max(1e-9, 0.05 * (yhi - ylo)) + (yhi == ylo ? 1.0 : 0.0);
  return Box2{{xlo - px, xhi + px}, {ylo - py, yhi + py}};
}

}  // namespace

std::string colormap(double t) {
  // Viridis sampled at five stops, linearly interpolated.
  static constexpr std::array<std::array<double, 3>, 5> stops{{{68, 1, 84},
                                                               {59, 82, 139},
                                                               {33, 145, 140},
                                                               {94, 201, 98},
                                                               {253, 231, 37}}};
  if (!std::isfinite(t)) t = 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double pos = t * (stops.size() - 1);
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(pos), stops.size() - 2);
  const double w = pos - static_cast<double>(i);
  char buf[8];
  std::array<int, 3> rgb{};
  for (int c = 0; c < 3; ++c) rgb[c] = static_cast<int>(std::lround(stops[i][c] * (1 - w) + stops[i + 1][c] * w));
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
  return buf;
}

std::string category_color(std::size_t index) {
  static constexpr std::array<const char*, 8> palette{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                                      "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  return palette[index % palette.size()];
}

std::string render_scatter(const ScatterData& data, const PlotStyle& style) {
  const Frame f = make_frame(scatter_bounds(data), style);
  std::string out;
  open_document(out, style);
  clip_path(out, f);
  draw_markers(out, f, data.series);
  draw_axes(out, f, style);
  draw_series_legend(out, f, data.series, f.top + 10);
  out += "</svg>\n";
  return out;
}

std::string render_heatmap(const HeatmapData& data, const PlotStyle& style) {
  if (data.nx < 2 || data.ny < 2 || data.values.size() != data.nx * data.ny) {
    throw DimensionError("render_heatmap: values do not match an nx x ny grid (nx, ny >= 2)");
  }
  const Frame f = make_frame(data.box, style);
  const double span = data.range.second - data.range.first;
  const auto color_of = [&](double v) {
    if (data.categorical) return category_color(static_cast<std::size_t>(std::max(0.0, v)));
    const double t = span > 0 ? (v - data.range.first) / span : 0.0;
    const double q = std::round(std::clamp(t, 0.0, 1.0) * (kColorLevels - 1)) / (kColorLevels - 1);
    return colormap(q);
  };

  // Cell (ix, iy) covers the lattice point's Voronoi cell.
  const double cw = f.width / static_cast<double>(data.nx - 1);
  const double ch = f.height / static_cast<double>(data.ny - 1);

  std::string out;
  open_document(out, style);
  clip_path(out, f);
  out += "<g class=\"heatmap\" clip-path=\"url(#plot-area)\" shape-rendering=\"crispEdges\">\n";
  for (std::size_t iy = 0; iy < data.ny; ++iy) {
    const double cy = f.top + f.height - ch * static_cast<double>(iy);
    std::size_t ix = 0;
    while (ix < data.nx) {
      const std::string color = color_of(data.values[iy * data.nx + ix]);
      std::size_t end = ix + 1;
      while (end < data.nx && color_of(data.values[iy * data.nx + end]) == color) ++end;
      const double x0 = f.left + cw * (static_cast<double>(ix) - 0.5);
      const double w = cw * static_cast<double>(end - ix);
      out += "<rect class=\"cell\" x=\"" + num(x0) + "\" y=\"" + num(cy - ch / 2) + "\" width=\"" +
             num(w + 0.01) + "\" height=\"" + num(ch + 0.01) + "\" fill=\"" + color + "\"/>\n";
      ix = end;
    }
  }
  out += "</g>\n";
  draw_markers(out, f, data.overlay);
  draw_axes(out, f, style);

  const double lx = f.left + f.width + 14;
  if (data.categorical) {
    double y = f.top + 10;
    for (std::size_t i = 0; i < data.category_labels.size(); ++i) {
      out += "<rect x=\"" + num(lx) + "\" y=\"" + num(y - 9) + "\" width=\"10\" height=\"10\" fill=\"" +
             category_color(i) + "\"/>\n";
      out += "<text x=\"" + num(lx + 14) + "\" y=\"" + num(y) + "\">" + escape(data.category_labels[i]) +
             "</text>\n";
      y += 16;
    }
    draw_series_legend(out, f, data.overlay, y + 8);
  } else {
    out += "<defs><linearGradient id=\"scale\" x1=\"0\" y1=\"1\" x2=\"0\" y2=\"0\">\n";
    for (int i = 0; i <= 4; ++i) {
      out += "<stop offset=\"" + num(i / 4.0) + "\" stop-color=\"" + colormap(i / 4.0) + "\"/>\n";
    }
    out += "</linearGradient></defs>\n";
    const double bar_h = std::min(160.0, f.height);
    out += "<rect class=\"colorbar\" x=\"" + num(lx) + "\" y=\"" + num(f.top) + "\" width=\"14\" height=\"" +
           num(bar_h) + "\" fill=\"url(#scale)\" stroke=\"black\"/>\n";
    out += "<text x=\"" + num(lx + 18) + "\" y=\"" + num(f.top + 8) + "\">" + num(data.range.second) + "</text>\n";
    out += "<text x=\"" + num(lx + 18) + "\" y=\"" + num(f.top + bar_h) + "\">" + num(data.range.first) + "</text>\n";
    draw_series_legend(out, f, data.overlay, f.top + bar_h + 24);
  }
  out += "</svg>\n";
  return out;
}

}  // namespace farconf
