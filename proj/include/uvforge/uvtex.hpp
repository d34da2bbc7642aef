#pragma once

#include <deque>

#include "uvforge/core.hpp"

// UV map representation and the differentiable sampling that assigns texture
// colors to vertices, plus the inverse splat used to build maps from
// per-vertex colors.
//
// Coordinate convention: c = (u, v) addresses the texel-center grid with
// column = u * (W - 1) and row = v * (H - 1). Sampling is bilinear with
// clamp-to-edge addressing; coordinates are clamped into [0,1]^2 first.
namespace uvforge::uvtex {

using UVMap = Image3;

namespace detail {

struct BilinearFootprint {
  int x0, x1, y0, y1;
  double wx, wy;      // fractional weights toward x1 / y1
  bool u_clamped, v_clamped;
};

inline BilinearFootprint footprint(const UVMap& map, double u, double v) {
  BilinearFootprint f{};
  f.u_clamped = u < 0.0 || u > 1.0;
  f.v_clamped = v < 0.0 || v > 1.0;
  u = std::clamp(u, 0.0, 1.0);
  v = std::clamp(v, 0.0, 1.0);
  const double fx = u * (map.width - 1);
  const double fy = v * (map.height - 1);
  f.x0 = static_cast<int>(std::floor(fx));
  f.y0 = static_cast<int>(std::floor(fy));
  f.x0 = std::clamp(f.x0, 0, map.width - 1);
  f.y0 = std::clamp(f.y0, 0, map.height - 1);
  f.x1 = std::min(f.x0 + 1, map.width - 1);
  f.y1 = std::min(f.y0 + 1, map.height - 1);
  f.wx = fx - f.x0;
  f.wy = fy - f.y0;
  return f;
}

}  // namespace detail

/// Bilinear sample at c = (u, v). Continuous and piecewise-smooth in c,
/// exactly linear in the map pixels.
inline Vector3d sample(const UVMap& map, double u, double v) {
  require(std::isfinite(u) && std::isfinite(v), "uvtex::sample: non-finite uv coordinate");
  const auto f = detail::footprint(map, u, v);
  return (1.0 - f.wy) * ((1.0 - f.wx) * map.rgb(f.y0, f.x0) + f.wx * map.rgb(f.y0, f.x1)) +
         f.wy * ((1.0 - f.wx) * map.rgb(f.y1, f.x0) + f.wx * map.rgb(f.y1, f.x1));
}

/// Splat-add the pullback of sample into a map cotangent buffer.
inline void sample_pullback_map(const UVMap& map, double u, double v, const Vector3d& cotangent,
                                Image3& map_cotangent) {
  const auto f = detail::footprint(map, u, v);
  const double w00 = (1.0 - f.wy) * (1.0 - f.wx);
  const double w01 = (1.0 - f.wy) * f.wx;
  const double w10 = f.wy * (1.0 - f.wx);
  const double w11 = f.wy * f.wx;
  for (int c = 0; c < 3; ++c) {
    map_cotangent.at(f.y0, f.x0, c) += w00 * cotangent[c];
    map_cotangent.at(f.y0, f.x1, c) += w01 * cotangent[c];
    map_cotangent.at(f.y1, f.x0, c) += w10 * cotangent[c];
    map_cotangent.at(f.y1, f.x1, c) += w11 * cotangent[c];
  }
}

/// Pullback of sample into (u, v). Zero where the coordinate was clamped.
inline Vector2d sample_pullback_uv(const UVMap& map, double u, double v, const Vector3d& cotangent) {
  const auto f = detail::footprint(map, u, v);
  const Vector3d drow0 = map.rgb(f.y0, f.x1) - map.rgb(f.y0, f.x0);
  const Vector3d drow1 = map.rgb(f.y1, f.x1) - map.rgb(f.y1, f.x0);
  const Vector3d dcol0 = map.rgb(f.y1, f.x0) - map.rgb(f.y0, f.x0);
  const Vector3d dcol1 = map.rgb(f.y1, f.x1) - map.rgb(f.y0, f.x1);
  Vector2d g;
  g[0] = f.u_clamped ? 0.0 : (map.width - 1) * cotangent.dot((1.0 - f.wy) * drow0 + f.wy * drow1);
  g[1] = f.v_clamped ? 0.0 : (map.height - 1) * cotangent.dot((1.0 - f.wx) * dcol0 + f.wx * dcol1);
  return g;
}

/// Row i of the result is sample(map, C.row(i)).
inline MatrixXd sample_all(const UVMap& map, const MatrixXd& coords) {
  require(coords.cols() == 2, "uvtex::sample_all: coords must be n x 2");
  MatrixXd out(coords.rows(), 3);
  for (int i = 0; i < coords.rows(); ++i) out.row(i) = sample(map, coords(i, 0), coords(i, 1)).transpose();
  return out;
}

/// Pullback of sample_all into the map. Accumulation order is the vertex
/// order, so results are deterministic.
inline Image3 sample_all_pullback_map(const UVMap& map, const MatrixXd& coords, const MatrixXd& cotangent) {
  require(cotangent.rows() == coords.rows() && cotangent.cols() == 3, "sample_all_pullback_map: cotangent must be n x 3");
  Image3 map_cot(map.width, map.height, 0.0);
  for (int i = 0; i < coords.rows(); ++i)
    sample_pullback_map(map, coords(i, 0), coords(i, 1), cotangent.row(i).transpose(), map_cot);
  return map_cot;
}

/// Splats each color to its four surrounding texels with bilinear weights,
/// normalizes by accumulated weight, and flood-fills unobserved texels from
/// the nearest written texel (multi-source BFS, row-major seed order).
inline UVMap unwrap(const MatrixXd& colors, const MatrixXd& coords, int width, int height) {
  require(colors.rows() == coords.rows() && colors.cols() == 3 && coords.cols() == 2,
          "uvtex::unwrap: colors must be n x 3 and coords n x 2");
  require(colors.rows() >= 1, "uvtex::unwrap: need at least one vertex");
  require(width >= 1 && height >= 1, "uvtex::unwrap: invalid resolution");
  UVMap map(width, height, 0.0);
  Image1 weight(width, height, 0.0);
  for (int i = 0; i < coords.rows(); ++i) {
    const auto f = detail::footprint(map, coords(i, 0), coords(i, 1));
    const double w[4] = {(1.0 - f.wy) * (1.0 - f.wx), (1.0 - f.wy) * f.wx, f.wy * (1.0 - f.wx), f.wy * f.wx};
    const int xs[4] = {f.x0, f.x1, f.x0, f.x1};
    const int ys[4] = {f.y0, f.y0, f.y1, f.y1};
    for (int k = 0; k < 4; ++k) {
      weight.at(ys[k], xs[k]) += w[k];
      for (int c = 0; c < 3; ++c) map.at(ys[k], xs[k], c) += w[k] * colors(i, c);
    }
  }

  std::deque<std::pair<int, int>> queue;
  std::vector<char> written(static_cast<size_t>(width) * height, 0);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      if (weight.at(y, x) > 1e-12) {
        for (int c = 0; c < 3; ++c) map.at(y, x, c) /= weight.at(y, x);
        written[static_cast<size_t>(y) * width + x] = 1;
        queue.emplace_back(y, x);
      }
    }
  require(!queue.empty(), "uvtex::unwrap: no texel received any weight");

  while (!queue.empty()) {
    const auto [y, x] = queue.front();
    queue.pop_front();
    const int dys[4] = {-1, 1, 0, 0};
    const int dxs[4] = {0, 0, -1, 1};
    for (int k = 0; k < 4; ++k) {
      const int ny = y + dys[k];
      const int nx = x + dxs[k];
      if (ny < 0 || ny >= height || nx < 0 || nx >= width) continue;
      char& mark = written[static_cast<size_t>(ny) * width + nx];
      if (mark) continue;
      mark = 1;
      for (int c = 0; c < 3; ++c) map.at(ny, nx, c) = map.at(y, x, c);
      queue.emplace_back(ny, nx);
    }
  }
  return map;
}

}  // namespace uvforge::uvtex
