#pragma once

#include "uvforge/core.hpp"
#include "uvforge/png_io.hpp"

// Barebones PNG line charts for loss traces and metric curves.
namespace uvforge::plot {

struct Series {
  std::string label;
  std::vector<double> values;  // x is the index; NaNs are skipped
  Vector3d color = {0.2, 0.4, 0.8};
};

namespace detail {

inline void draw_segment(Image3& img, double x0, double y0, double x1, double y1, const Vector3d& color) {
  const double len = std::hypot(x1 - x0, y1 - y0);
  const int steps = std::max(1, static_cast<int>(std::ceil(len * 2.0)));
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
    const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
    if (x < 0 || x >= img.width || y < 0 || y >= img.height) continue;
    img.set_rgb(y, x, color);
  }
}

}  // namespace detail

inline Image3 line_chart(const std::vector<Series>& series, int width = 640, int height = 400) {
  Image3 img(width, height, Vector3d(1.0, 1.0, 1.0));
  const int margin = 24;
  const int x0 = margin, x1 = width - margin, y0 = margin, y1 = height - margin;
  // axes
  detail::draw_segment(img, x0, y1, x1, y1, Vector3d(0, 0, 0));
  detail::draw_segment(img, x0, y0, x0, y1, Vector3d(0, 0, 0));

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  size_t max_n = 0;
  for (const auto& s : series) {
    max_n = std::max(max_n, s.values.size());
    for (double v : s.values)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  }
  if (!std::isfinite(lo) || max_n < 2) return img;
  if (hi - lo < 1e-12) {
    hi += 1.0;
    lo -= 1.0;
  }

  for (const auto& s : series) {
    double px = 0, py = 0;
    bool have_prev = false;
    for (size_t i = 0; i < s.values.size(); ++i) {
      if (!std::isfinite(s.values[i])) continue;
      const double cx = x0 + (x1 - x0) * (s.values.size() == 1 ? 0.0 : static_cast<double>(i) / (max_n - 1));
      const double cy = y1 - (y1 - y0) * (s.values[i] - lo) / (hi - lo);
      if (have_prev) detail::draw_segment(img, px, py, cx, cy, s.color);
      px = cx;
      py = cy;
      have_prev = true;
    }
  }
  return img;
}

inline void save_chart(const std::string& path, const std::vector<Series>& series, int width = 640,
                       int height = 400) {
  png_io::write_rgb8(path, line_chart(series, width, height));
}

}  // namespace uvforge::plot
