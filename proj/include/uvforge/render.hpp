#pragma once

#include <limits>

#include "uvforge/core.hpp"
#include "uvforge/morphable.hpp"
#include "uvforge/uvtex.hpp"

// Differentiable image formation: weak-perspective projection, z-buffer
// rasterization into screen-space buffers, per-pixel Phong shading, and a
// sigmoid-of-signed-squared-distance soft silhouette.
//
// Conventions, shared by every consumer and all the test fixtures:
//  - Screen space is the square viewport [-1,1]^2. Pixel (x, y) has center
//    (-1 + 2(x+0.5)/W, -1 + 2(y+0.5)/H); screen y grows with the row index.
//  - Smaller view-space z is nearer to the camera; the unit vector from a
//    surface point toward the viewer is (0, 0, -1).
//  - Color gradients w.r.t. geometry are interior-only (the winning triangle
//    per pixel is held fixed); geometry-boundary sensitivity comes from the
//    soft silhouette.
namespace uvforge::render {

struct Camera {
  Vector3d rotation = Vector3d::Zero();     // axis-angle, radians * axis
  Vector2d translation = Vector2d::Zero();  // normalized image units
  double log_scale = 0.0;

  static Camera from_params(const Eigen::Matrix<double, 6, 1>& p_c) {
    Camera cam;
    cam.rotation = p_c.head<3>();
    cam.translation = p_c.segment<2>(3);
    cam.log_scale = p_c[5];
    return cam;
  }
};

struct Light {
  Vector3d direction = Vector3d(0, 0, -1);  // consumed normalized
  double ambient = 1.0;
  double diffuse = 0.0;
  double specular = 0.0;

  // Gains are clamped at zero; the matching pullback masks them the same way.
  static Light from_params(const Eigen::Matrix<double, 6, 1>& p_l) {
    Light light;
    light.direction = p_l.head<3>();
    light.ambient = std::max(0.0, p_l[3]);
    light.diffuse = std::max(0.0, p_l[4]);
    light.specular = std::max(0.0, p_l[5]);
    return light;
  }
};

struct RenderConfig {
  double sigma = 1e-4;                      // soft silhouette sharpness, screen units
  Vector3d background = {0.5, 0.5, 0.5};
  double shininess = 16.0;
  Vector3d view_dir = {0.0, 0.0, -1.0};     // toward the viewer
  double score_cap = 30.0;                  // logistic argument clamp for the silhouette
};

struct RasterBuffers {
  int width = 0, height = 0;
  std::vector<int> tri_id;      // -1 = background
  std::vector<double> bary;     // (y*W + x)*3 + k
  std::vector<double> depth;    // +inf on background

  RasterBuffers() = default;
  RasterBuffers(int w, int h)
      : width(w),
        height(h),
        tri_id(static_cast<size_t>(w) * h, -1),
        bary(static_cast<size_t>(w) * h * 3, 0.0),
        depth(static_cast<size_t>(w) * h, std::numeric_limits<double>::infinity()) {}

  int at(int y, int x) const { return tri_id[static_cast<size_t>(y) * width + x]; }
  Vector3d bary_at(int y, int x) const {
    const size_t i = (static_cast<size_t>(y) * width + x) * 3;
    return {bary[i], bary[i + 1], bary[i + 2]};
  }
};

struct RenderOutput {
  Image3 image;
  Image1 silhouette;  // soft coverage in [0,1]
  RasterBuffers raster;
};

inline double pixel_center(int index, int extent) { return -1.0 + 2.0 * (index + 0.5) / extent; }

/// Hard 0/1 coverage from the rasterizer buffers.
inline Image1 hard_coverage(const RasterBuffers& raster) {
  Image1 mask(raster.width, raster.height, 0.0);
  for (int i = 0; i < raster.width * raster.height; ++i) mask.pix[i] = raster.tri_id[i] >= 0 ? 1.0 : 0.0;
  return mask;
}

// ---------------------------------------------------------------------------
// Rotation (axis-angle, Rodrigues with series fallback near zero angle).
// ---------------------------------------------------------------------------

namespace detail {

struct RotationCoeffs {
  double a;       // sin t / t
  double b;       // (1 - cos t) / t^2
  double ap_t;    // a'(t) / t
  double bp_t;    // b'(t) / t
};

inline RotationCoeffs rotation_coeffs(double theta) {
  RotationCoeffs c{};
  const double t2 = theta * theta;
  if (theta < 1e-4) {
    c.a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
    c.b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
    c.ap_t = -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0;
    c.bp_t = -1.0 / 12.0 + t2 / 180.0 - t2 * t2 / 6720.0;
  } else {
    const double s = std::sin(theta);
    const double co = std::cos(theta);
    c.a = s / theta;
    c.b = (1.0 - co) / t2;
    c.ap_t = (theta * co - s) / (t2 * theta);
    c.bp_t = (theta * s - 2.0 * (1.0 - co)) / (t2 * t2);
  }
  return c;
}

inline Eigen::Matrix3d skew(const Vector3d& r) {
  Eigen::Matrix3d k;
  k << 0, -r.z(), r.y(), r.z(), 0, -r.x(), -r.y(), r.x(), 0;
  return k;
}

}  // namespace detail

inline Eigen::Matrix3d rodrigues(const Vector3d& rotation) {
  const double theta = rotation.norm();
  const auto c = detail::rotation_coeffs(theta);
  const Eigen::Matrix3d k = detail::skew(rotation);
  return Eigen::Matrix3d::Identity() + c.a * k + c.b * (k * k);
}

/// Pullback of R = rodrigues(r) given the cotangent matrix G on R,
/// i.e. returns r_bar with r_bar[k] = <dR/dr_k, G>.
inline Vector3d rodrigues_pullback(const Vector3d& rotation, const Eigen::Matrix3d& rot_cotangent) {
  const double theta = rotation.norm();
  const auto c = detail::rotation_coeffs(theta);
  const Eigen::Matrix3d k = detail::skew(rotation);
  const Eigen::Matrix3d k2 = k * k;
  Vector3d grad;
  for (int i = 0; i < 3; ++i) {
    Vector3d e = Vector3d::Zero();
    e[i] = 1.0;
    const Eigen::Matrix3d ek = detail::skew(e);
    const Eigen::Matrix3d dr = c.ap_t * rotation[i] * k + c.a * ek + c.bp_t * rotation[i] * k2 +
                               c.b * (ek * k + k * ek);
    grad[i] = dr.cwiseProduct(rot_cotangent).sum();
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Projection.
// ---------------------------------------------------------------------------

struct Projected {
  MatrixXd screen;  // n x 2
  VectorXd depth;   // n, view-space z
};

/// v' = R v; screen = exp(log_scale) * v'_xy + translation; depth = v'_z.
inline Projected project(const MatrixXd& vertices, const Camera& cam) {
  require(vertices.cols() == 3, "project: vertices must be n x 3");
  const Eigen::Matrix3d rot = rodrigues(cam.rotation);
  const double scale = std::exp(cam.log_scale);
  Projected out;
  out.screen.resize(vertices.rows(), 2);
  out.depth.resize(vertices.rows());
  for (int i = 0; i < vertices.rows(); ++i) {
    const Vector3d v = rot * vertices.row(i).transpose();
    out.screen(i, 0) = scale * v.x() + cam.translation.x();
    out.screen(i, 1) = scale * v.y() + cam.translation.y();
    out.depth[i] = v.z();
  }
  return out;
}

struct ProjectPullback {
  MatrixXd vertices;  // n x 3
  Eigen::Matrix<double, 6, 1> camera = Eigen::Matrix<double, 6, 1>::Zero();  // layout of Camera::from_params
};

inline ProjectPullback project_pullback(const MatrixXd& vertices, const Camera& cam,
                                        const MatrixXd& screen_cotangent, const VectorXd& depth_cotangent) {
  require(screen_cotangent.rows() == vertices.rows() && screen_cotangent.cols() == 2,
          "project_pullback: screen cotangent must be n x 2");
  require(depth_cotangent.size() == vertices.rows(), "project_pullback: depth cotangent size mismatch");
  const Eigen::Matrix3d rot = rodrigues(cam.rotation);
  const double scale = std::exp(cam.log_scale);

  ProjectPullback out;
  out.vertices = MatrixXd::Zero(vertices.rows(), 3);
  Eigen::Matrix3d rot_cot = Eigen::Matrix3d::Zero();
  double scale_cot = 0.0;
  Vector2d translation_cot = Vector2d::Zero();

  for (int i = 0; i < vertices.rows(); ++i) {
    const Vector3d v = vertices.row(i).transpose();
    const Vector3d vp = rot * v;
    const Vector2d sc = screen_cotangent.row(i).transpose();
    Vector3d vp_cot;
    vp_cot << scale * sc.x(), scale * sc.y(), depth_cotangent[i];
    scale_cot += sc.x() * vp.x() + sc.y() * vp.y();
    translation_cot += sc;
    out.vertices.row(i) = (rot.transpose() * vp_cot).transpose();
    rot_cot += vp_cot * v.transpose();
  }

  out.camera.head<3>() = rodrigues_pullback(cam.rotation, rot_cot);
  out.camera.segment<2>(3) = translation_cot;
  out.camera[5] = scale * scale_cot;  // d scale / d log_scale = scale
  return out;
}

// ---------------------------------------------------------------------------
// Barycentric coordinates.
// ---------------------------------------------------------------------------

namespace detail {

inline double cross2(const Vector2d& u, const Vector2d& v) { return u.x() * v.y() - u.y() * v.x(); }
inline Vector2d perp(const Vector2d& w) { return {w.y(), -w.x()}; }

constexpr double kDegenerateArea = 1e-12;

struct Bary {
  double la, lb, lc;
  bool inside() const { return la >= 0.0 && lb >= 0.0 && lc >= 0.0; }
};

inline Bary barycentric(const Vector2d& a, const Vector2d& b, const Vector2d& c, const Vector2d& p,
                        double area2) {
  Bary w{};
  w.la = cross2(c - b, p - b) / area2;
  w.lb = cross2(a - c, p - c) / area2;
  w.lc = cross2(b - a, p - a) / area2;
  return w;
}

/// Pullback of (la, lb, lc) at fixed p into the triangle's screen vertices.
inline void barycentric_pullback(const Vector2d& a, const Vector2d& b, const Vector2d& c, const Vector2d& p,
                                 double area2, const Bary& w, const Vector3d& lambda_cot, Vector2d& a_cot,
                                 Vector2d& b_cot, Vector2d& c_cot) {
  const Vector2d dA_da = perp(b - c);
  const Vector2d dA_db = perp(c - a);
  const Vector2d dA_dc = -perp(b - a);
  // la = cross2(c-b, p-b)/A
  const Vector2d dla_da = (-w.la * dA_da) / area2;
  const Vector2d dla_db = (perp(c - p) - w.la * dA_db) / area2;
  const Vector2d dla_dc = (perp(p - b) - w.la * dA_dc) / area2;
  // lb = cross2(a-c, p-c)/A
  const Vector2d dlb_da = (perp(p - c) - w.lb * dA_da) / area2;
  const Vector2d dlb_db = (-w.lb * dA_db) / area2;
  const Vector2d dlb_dc = (perp(a - p) - w.lb * dA_dc) / area2;
  // lc = cross2(b-a, p-a)/A
  const Vector2d dlc_da = (perp(b - p) - w.lc * dA_da) / area2;
  const Vector2d dlc_db = (perp(p - a) - w.lc * dA_db) / area2;
  const Vector2d dlc_dc = (-w.lc * dA_dc) / area2;

  a_cot += lambda_cot[0] * dla_da + lambda_cot[1] * dlb_da + lambda_cot[2] * dlc_da;
  b_cot += lambda_cot[0] * dla_db + lambda_cot[1] * dlb_db + lambda_cot[2] * dlc_db;
  c_cot += lambda_cot[0] * dla_dc + lambda_cot[1] * dlb_dc + lambda_cot[2] * dlc_dc;
}

struct PixelRange {
  int x_lo, x_hi, y_lo, y_hi;
  bool empty() const { return x_lo > x_hi || y_lo > y_hi; }
};

/// Pixel-index range whose centers can fall within the screen-space box
/// [lo, hi] expanded by pad. Conservative by half a pixel on each side.
inline PixelRange pixel_range(const Vector2d& lo, const Vector2d& hi, double pad, int width, int height) {
  const auto to_px = [](double s, int extent) { return (s + 1.0) * extent / 2.0 - 0.5; };
  PixelRange r{};
  r.x_lo = std::max(0, static_cast<int>(std::floor(to_px(lo.x() - pad, width) - 0.5)));
  r.x_hi = std::min(width - 1, static_cast<int>(std::ceil(to_px(hi.x() + pad, width) + 0.5)));
  r.y_lo = std::max(0, static_cast<int>(std::floor(to_px(lo.y() - pad, height) - 0.5)));
  r.y_hi = std::min(height - 1, static_cast<int>(std::ceil(to_px(hi.y() + pad, height) + 0.5)));
  return r;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Rasterization.
// ---------------------------------------------------------------------------

/// Hard z-buffer rasterization. For each pixel center, among triangles
/// covering it (all barycentrics >= 0) the one with smallest interpolated
/// depth wins; exact depth ties keep the lowest triangle index. Zero-area
/// triangles (|2A| < 1e-12) are skipped.
inline RasterBuffers rasterize(const MatrixXd& screen, const VectorXd& depth, const MatrixXi& triangles,
                               int width, int height) {
  require(width >= 1 && height >= 1, "rasterize: invalid resolution");
  require(screen.rows() == depth.size(), "rasterize: screen/depth size mismatch");
  RasterBuffers buf(width, height);
  for (int j = 0; j < triangles.rows(); ++j) {
    const Vector2d a = screen.row(triangles(j, 0)).transpose();
    const Vector2d b = screen.row(triangles(j, 1)).transpose();
    const Vector2d c = screen.row(triangles(j, 2)).transpose();
    const double area2 = detail::cross2(b - a, c - a);
    if (std::abs(area2) < detail::kDegenerateArea) continue;
    const Vector2d lo = a.cwiseMin(b).cwiseMin(c);
    const Vector2d hi = a.cwiseMax(b).cwiseMax(c);
    const auto range = detail::pixel_range(lo, hi, 0.0, width, height);
    if (range.empty()) continue;
    const Vector3d dz(depth[triangles(j, 0)], depth[triangles(j, 1)], depth[triangles(j, 2)]);
    for (int y = range.y_lo; y <= range.y_hi; ++y) {
      for (int x = range.x_lo; x <= range.x_hi; ++x) {
        const Vector2d p(pixel_center(x, width), pixel_center(y, height));
        const auto w = detail::barycentric(a, b, c, p, area2);
        if (!w.inside()) continue;
        const double z = w.la * dz[0] + w.lb * dz[1] + w.lc * dz[2];
        const size_t idx = static_cast<size_t>(y) * width + x;
        // Triangles arrive in ascending index order, so a strict depth
        // comparison realizes the lowest-index tie-break.
        if (z < buf.depth[idx]) {
          buf.depth[idx] = z;
          buf.tri_id[idx] = j;
          buf.bary[idx * 3 + 0] = w.la;
          buf.bary[idx * 3 + 1] = w.lb;
          buf.bary[idx * 3 + 2] = w.lc;
        }
      }
    }
  }
  return buf;
}

// ---------------------------------------------------------------------------
// Soft silhouette.
// ---------------------------------------------------------------------------

namespace detail {

struct SegmentDistance {
  double dist;
  Vector2d grad_a, grad_b;  // of the unsigned distance
};

inline SegmentDistance point_segment_distance(const Vector2d& p, const Vector2d& a, const Vector2d& b) {
  SegmentDistance out{};
  const Vector2d u = b - a;
  const double len2 = u.squaredNorm();
  if (len2 < 1e-24) {
    const double d = (p - a).norm();
    out.dist = d;
    if (d > 1e-12) {
      out.grad_a = (a - p) / d * 0.5;
      out.grad_b = (a - p) / d * 0.5;
    }
    return out;
  }
  const double t = (p - a).dot(u) / len2;
  if (t <= 0.0) {
    const double d = (p - a).norm();
    out.dist = d;
    if (d > 1e-12) out.grad_a = (a - p) / d;
  } else if (t >= 1.0) {
    const double d = (p - b).norm();
    out.dist = d;
    if (d > 1e-12) out.grad_b = (b - p) / d;
  } else {
    const double cr = cross2(u, p - a);
    const double len = std::sqrt(len2);
    const double d = std::abs(cr) / len;
    out.dist = d;
    if (d > 1e-12) {
      const double s = cr >= 0.0 ? 1.0 : -1.0;
      out.grad_a = s * perp(b - p) / len - d * (a - b) / len2;
      out.grad_b = s * perp(p - a) / len - d * (b - a) / len2;
    }
  }
  return out;
}

struct TriangleDistance {
  double signed_dist;          // positive inside
  int edge;                    // argmin edge, 0:(a,b) 1:(b,c) 2:(c,a)
  SegmentDistance edge_dist;
};

inline TriangleDistance triangle_signed_distance(const Vector2d& p, const Vector2d& a, const Vector2d& b,
                                                 const Vector2d& c, double area2) {
  const SegmentDistance d[3] = {point_segment_distance(p, a, b), point_segment_distance(p, b, c),
                                point_segment_distance(p, c, a)};
  int best = 0;
  for (int k = 1; k < 3; ++k)
    if (d[k].dist < d[best].dist) best = k;
  const auto w = barycentric(a, b, c, p, area2);
  TriangleDistance out{};
  out.signed_dist = w.inside() ? d[best].dist : -d[best].dist;
  out.edge = best;
  out.edge_dist = d[best];
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

/// Per pixel: D_j = logistic(sign(d_j) d_j^2 / sigma) with d_j the signed
/// distance to triangle j's boundary (positive inside); the silhouette is
/// 1 - prod_j (1 - D_j). The logistic argument is clamped to +-score_cap;
/// below -score_cap a triangle contributes nothing and is culled.
inline Image1 soft_silhouette(const MatrixXd& screen, const MatrixXi& triangles, int width, int height,
                              double sigma, double score_cap = 30.0) {
  require(sigma > 0.0, "soft_silhouette: sigma must be > 0");
  Image1 remaining(width, height, 1.0);  // prod (1 - D_j)
  const double cutoff = std::sqrt(score_cap * sigma);
  for (int j = 0; j < triangles.rows(); ++j) {
    const Vector2d a = screen.row(triangles(j, 0)).transpose();
    const Vector2d b = screen.row(triangles(j, 1)).transpose();
    const Vector2d c = screen.row(triangles(j, 2)).transpose();
    const double area2 = detail::cross2(b - a, c - a);
    if (std::abs(area2) < detail::kDegenerateArea) continue;
    const Vector2d lo = a.cwiseMin(b).cwiseMin(c);
    const Vector2d hi = a.cwiseMax(b).cwiseMax(c);
    const auto range = detail::pixel_range(lo, hi, cutoff, width, height);
    if (range.empty()) continue;
    for (int y = range.y_lo; y <= range.y_hi; ++y) {
      for (int x = range.x_lo; x <= range.x_hi; ++x) {
        const Vector2d p(pixel_center(x, width), pixel_center(y, height));
        const auto td = detail::triangle_signed_distance(p, a, b, c, area2);
        const double score = (td.signed_dist >= 0.0 ? 1.0 : -1.0) * td.signed_dist * td.signed_dist / sigma;
        if (score <= -score_cap) continue;
        const double d_val = detail::sigmoid(std::min(score, score_cap));
        remaining.at(y, x) *= 1.0 - d_val;
      }
    }
  }
  Image1 sil(width, height, 0.0);
  for (int i = 0; i < width * height; ++i) sil.pix[i] = 1.0 - remaining.pix[i];
  return sil;
}

/// Pullback of soft_silhouette into screen vertex positions. Recomputes the
/// per-triangle contributions; `silhouette` must be the matching forward
/// output.
inline MatrixXd soft_silhouette_pullback(const MatrixXd& screen, const MatrixXi& triangles, int width,
                                         int height, double sigma, const Image1& silhouette,
                                         const Image1& sil_cotangent, double score_cap = 30.0) {
  MatrixXd screen_cot = MatrixXd::Zero(screen.rows(), 2);
  const double cutoff = std::sqrt(score_cap * sigma);
  for (int j = 0; j < triangles.rows(); ++j) {
    const int ia = triangles(j, 0), ib = triangles(j, 1), ic = triangles(j, 2);
    const Vector2d a = screen.row(ia).transpose();
    const Vector2d b = screen.row(ib).transpose();
    const Vector2d c = screen.row(ic).transpose();
    const double area2 = detail::cross2(b - a, c - a);
    if (std::abs(area2) < detail::kDegenerateArea) continue;
    const Vector2d lo = a.cwiseMin(b).cwiseMin(c);
    const Vector2d hi = a.cwiseMax(b).cwiseMax(c);
    const auto range = detail::pixel_range(lo, hi, cutoff, width, height);
    if (range.empty()) continue;
    for (int y = range.y_lo; y <= range.y_hi; ++y) {
      for (int x = range.x_lo; x <= range.x_hi; ++x) {
        const double cot = sil_cotangent.at(y, x);
        if (cot == 0.0) continue;
        const Vector2d p(pixel_center(x, width), pixel_center(y, height));
        const auto td = detail::triangle_signed_distance(p, a, b, c, area2);
        const double sign = td.signed_dist >= 0.0 ? 1.0 : -1.0;
        const double score = sign * td.signed_dist * td.signed_dist / sigma;
        if (score <= -score_cap || score >= score_cap) continue;  // clamped: zero slope
        const double d_val = detail::sigmoid(score);
        // d sil / d D_j = prod_{k != j} (1 - D_k) = (1 - sil) / (1 - D_j).
        const double dsil_dD = (1.0 - silhouette.at(y, x)) / (1.0 - d_val);
        // d score / d distance = 2 sign |d| / sigma, already signed.
        const double dD_dd = d_val * (1.0 - d_val) * 2.0 * sign * std::abs(td.signed_dist) / sigma;
        const double w = cot * dsil_dD * dD_dd;  // onto the unsigned distance
        Vector2d ga = Vector2d::Zero(), gb = Vector2d::Zero(), gc = Vector2d::Zero();
        switch (td.edge) {
          case 0:
            ga = td.edge_dist.grad_a;
            gb = td.edge_dist.grad_b;
            break;
          case 1:
            gb = td.edge_dist.grad_a;
            gc = td.edge_dist.grad_b;
            break;
          default:
            gc = td.edge_dist.grad_a;
            ga = td.edge_dist.grad_b;
            break;
        }
        screen_cot.row(ia) += (w * ga).transpose();
        screen_cot.row(ib) += (w * gb).transpose();
        screen_cot.row(ic) += (w * gc).transpose();
      }
    }
  }
  return screen_cot;
}

// ---------------------------------------------------------------------------
// Vertex normals.
// ---------------------------------------------------------------------------

/// Area-weighted average of incident face normals, normalized. Vertices with
/// no (non-degenerate) incident face get (0, 0, 1).
inline MatrixXd vertex_normals(const MatrixXd& vertices, const MatrixXi& triangles) {
  MatrixXd accum = MatrixXd::Zero(vertices.rows(), 3);
  for (int j = 0; j < triangles.rows(); ++j) {
    const Vector3d p0 = vertices.row(triangles(j, 0)).transpose();
    const Vector3d p1 = vertices.row(triangles(j, 1)).transpose();
    const Vector3d p2 = vertices.row(triangles(j, 2)).transpose();
    const Vector3d fn = (p1 - p0).cross(p2 - p0);  // |fn| = 2 * area
    for (int k = 0; k < 3; ++k) accum.row(triangles(j, k)) += fn.transpose();
  }
  MatrixXd normals(vertices.rows(), 3);
  for (int i = 0; i < vertices.rows(); ++i) {
    const double len = accum.row(i).norm();
    if (len < 1e-12)
      normals.row(i) << 0, 0, 1;
    else
      normals.row(i) = accum.row(i) / len;
  }
  return normals;
}

inline MatrixXd vertex_normals_pullback(const MatrixXd& vertices, const MatrixXi& triangles,
                                        const MatrixXd& normal_cotangent) {
  // Recompute the unnormalized accumulators, then push through normalize and
  // the per-face cross products.
  MatrixXd accum = MatrixXd::Zero(vertices.rows(), 3);
  for (int j = 0; j < triangles.rows(); ++j) {
    const Vector3d p0 = vertices.row(triangles(j, 0)).transpose();
    const Vector3d p1 = vertices.row(triangles(j, 1)).transpose();
    const Vector3d p2 = vertices.row(triangles(j, 2)).transpose();
    const Vector3d fn = (p1 - p0).cross(p2 - p0);
    for (int k = 0; k < 3; ++k) accum.row(triangles(j, k)) += fn.transpose();
  }
  MatrixXd accum_cot = MatrixXd::Zero(vertices.rows(), 3);
  for (int i = 0; i < vertices.rows(); ++i) {
    const double len = accum.row(i).norm();
    if (len < 1e-12) continue;  // constant default normal
    const Vector3d n = accum.row(i).transpose() / len;
    const Vector3d nc = normal_cotangent.row(i).transpose();
    accum_cot.row(i) = ((nc - n * n.dot(nc)) / len).transpose();
  }
  MatrixXd vert_cot = MatrixXd::Zero(vertices.rows(), 3);
  for (int j = 0; j < triangles.rows(); ++j) {
    const int i0 = triangles(j, 0), i1 = triangles(j, 1), i2 = triangles(j, 2);
    const Vector3d p0 = vertices.row(i0).transpose();
    const Vector3d e1 = vertices.row(i1).transpose() - p0;
    const Vector3d e2 = vertices.row(i2).transpose() - p0;
    const Vector3d fn_cot = (accum_cot.row(i0) + accum_cot.row(i1) + accum_cot.row(i2)).transpose();
    const Vector3d e1_cot = e2.cross(fn_cot);
    const Vector3d e2_cot = fn_cot.cross(e1);
    vert_cot.row(i1) += e1_cot.transpose();
    vert_cot.row(i2) += e2_cot.transpose();
    vert_cot.row(i0) -= (e1_cot + e2_cot).transpose();
  }
  return vert_cot;
}

// ---------------------------------------------------------------------------
// Phong shading.
// ---------------------------------------------------------------------------

/// Per covered pixel: interpolate color and normal by barycentrics
/// (renormalizing the normal), then
///   out = clamp(color * (ambient + diffuse * max(0, n.l)) +
///               specular * max(0, r.v)^shininess, 0, 1)
/// with r the reflection of the light direction about the normal.
/// Background pixels take cfg.background.
inline Image3 shade(const RasterBuffers& raster, const MatrixXi& triangles, const MatrixXd& vertex_colors,
                    const MatrixXd& normals, const Light& light, const RenderConfig& cfg) {
  require(vertex_colors.cols() == 3 && normals.cols() == 3, "shade: attributes must be n x 3");
  const double dir_norm = light.direction.norm();
  require(dir_norm > 1e-12, "shade: light direction must be nonzero");
  const Vector3d l_hat = light.direction / dir_norm;
  const Vector3d v_hat = cfg.view_dir.normalized();
  Image3 image(raster.width, raster.height, cfg.background);
  parallel_for(0, raster.height, [&](int y) {
    for (int x = 0; x < raster.width; ++x) {
      const int tri = raster.at(y, x);
      if (tri < 0) continue;
      const Vector3d w = raster.bary_at(y, x);
      Vector3d color = Vector3d::Zero();
      Vector3d m = Vector3d::Zero();
      for (int k = 0; k < 3; ++k) {
        color += w[k] * vertex_colors.row(triangles(tri, k)).transpose();
        m += w[k] * normals.row(triangles(tri, k)).transpose();
      }
      const double mlen = m.norm();
      const Vector3d n_hat = mlen < 1e-12 ? Vector3d(0, 0, 1) : Vector3d(m / mlen);
      const double ndotl = n_hat.dot(l_hat);
      const double lambert = std::max(0.0, ndotl);
      const Vector3d refl = 2.0 * ndotl * n_hat - l_hat;
      const double rdotv = std::max(0.0, refl.dot(v_hat));
      const double spec = std::pow(rdotv, cfg.shininess);
      for (int c = 0; c < 3; ++c)
        image.at(y, x, c) = clamp01(color[c] * (light.ambient + light.diffuse * lambert) + light.specular * spec);
    }
  });
  return image;
}

struct ShadePullback {
  MatrixXd vertex_colors;  // n x 3
  MatrixXd normals;        // n x 3
  MatrixXd screen;         // n x 2, via the barycentric weights
  Eigen::Matrix<double, 6, 1> light = Eigen::Matrix<double, 6, 1>::Zero();  // direction(3), gains(3)
};

/// Pullback of shade. Geometry sensitivity is interior-only: the triangle id
/// per pixel is held fixed and only the barycentric weights move with the
/// screen vertices.
inline ShadePullback shade_pullback(const RasterBuffers& raster, const MatrixXi& triangles,
                                    const MatrixXd& screen, const MatrixXd& vertex_colors,
                                    const MatrixXd& normals, const Light& light, const RenderConfig& cfg,
                                    const Image3& image_cotangent) {
  const double dir_norm = light.direction.norm();
  require(dir_norm > 1e-12, "shade_pullback: light direction must be nonzero");
  const Vector3d l_hat = light.direction / dir_norm;
  const Vector3d v_hat = cfg.view_dir.normalized();

  ShadePullback out;
  out.vertex_colors = MatrixXd::Zero(vertex_colors.rows(), 3);
  out.normals = MatrixXd::Zero(normals.rows(), 3);
  out.screen = MatrixXd::Zero(screen.rows(), 2);
  Vector3d lhat_cot = Vector3d::Zero();

  for (int y = 0; y < raster.height; ++y) {
    for (int x = 0; x < raster.width; ++x) {
      const int tri = raster.at(y, x);
      if (tri < 0) continue;
      const Vector3d w = raster.bary_at(y, x);
      Vector3d color = Vector3d::Zero();
      Vector3d m = Vector3d::Zero();
      for (int k = 0; k < 3; ++k) {
        color += w[k] * vertex_colors.row(triangles(tri, k)).transpose();
        m += w[k] * normals.row(triangles(tri, k)).transpose();
      }
      const double mlen = m.norm();
      const bool degenerate = mlen < 1e-12;
      const Vector3d n_hat = degenerate ? Vector3d(0, 0, 1) : Vector3d(m / mlen);
      const double ndotl = n_hat.dot(l_hat);
      const double lambert = std::max(0.0, ndotl);
      const Vector3d refl = 2.0 * ndotl * n_hat - l_hat;
      const double rdotv0 = refl.dot(v_hat);
      const double rdotv = std::max(0.0, rdotv0);
      const double spec = std::pow(rdotv, cfg.shininess);

      Vector3d pre_cot = Vector3d::Zero();
      for (int c = 0; c < 3; ++c) {
        const double pre = color[c] * (light.ambient + light.diffuse * lambert) + light.specular * spec;
        // Inclusive clamp subgradient so exact-black/white pixels still move.
        pre_cot[c] = (pre >= 0.0 && pre <= 1.0) ? image_cotangent.at(y, x, c) : 0.0;
      }
      const Vector3d color_cot = pre_cot * (light.ambient + light.diffuse * lambert);
      out.light[3] += pre_cot.dot(color);                    // ambient
      out.light[4] += pre_cot.dot(color) * lambert;          // diffuse
      out.light[5] += pre_cot.sum() * spec;                  // specular
      const double spec_cot = light.specular * pre_cot.sum();
      const double rdotv_cot =
          rdotv0 > 0.0 ? spec_cot * cfg.shininess * std::pow(rdotv, cfg.shininess - 1.0) : 0.0;
      const Vector3d refl_cot = rdotv_cot * v_hat;
      double ndotl_cot = light.diffuse * pre_cot.dot(color) * (ndotl > 0.0 ? 1.0 : 0.0);
      ndotl_cot += refl_cot.dot(2.0 * n_hat);
      const Vector3d nhat_cot = 2.0 * ndotl * refl_cot + ndotl_cot * l_hat;
      lhat_cot += -refl_cot + ndotl_cot * n_hat;

      Vector3d m_cot = Vector3d::Zero();
      if (!degenerate) m_cot = (nhat_cot - n_hat * n_hat.dot(nhat_cot)) / mlen;

      Vector3d lambda_cot = Vector3d::Zero();
      for (int k = 0; k < 3; ++k) {
        const int vi = triangles(tri, k);
        out.vertex_colors.row(vi) += (w[k] * color_cot).transpose();
        out.normals.row(vi) += (w[k] * m_cot).transpose();
        lambda_cot[k] =
            color_cot.dot(vertex_colors.row(vi).transpose()) + m_cot.dot(normals.row(vi).transpose());
      }

      const Vector2d a = screen.row(triangles(tri, 0)).transpose();
      const Vector2d b = screen.row(triangles(tri, 1)).transpose();
      const Vector2d c = screen.row(triangles(tri, 2)).transpose();
      const double area2 = detail::cross2(b - a, c - a);
      if (std::abs(area2) < detail::kDegenerateArea) continue;
      const Vector2d p(pixel_center(x, raster.width), pixel_center(y, raster.height));
      const detail::Bary bw{w[0], w[1], w[2]};
      Vector2d a_cot = Vector2d::Zero(), b_cot = Vector2d::Zero(), c_cot = Vector2d::Zero();
      detail::barycentric_pullback(a, b, c, p, area2, bw, lambda_cot, a_cot, b_cot, c_cot);
      out.screen.row(triangles(tri, 0)) += a_cot.transpose();
      out.screen.row(triangles(tri, 1)) += b_cot.transpose();
      out.screen.row(triangles(tri, 2)) += c_cot.transpose();
    }
  }

  // l_hat = direction / |direction|
  out.light.head<3>() = (lhat_cot - l_hat * l_hat.dot(lhat_cot)) / dir_norm;
  return out;
}

// ---------------------------------------------------------------------------
// Full image formation.
// ---------------------------------------------------------------------------

struct FormImageTape {
  MatrixXd shape;      // n x 3
  MatrixXd screen;     // n x 2
  VectorXd depth;      // n
  MatrixXd normals;    // n x 3
  MatrixXd vcolors;    // n x 3
  Camera camera;
  Light light;
};

/// Renders per-vertex colors under a parameter set. Shared by the UV-map and
/// linear-texture routes.
inline RenderOutput render_colored(const morphable::MorphableModel& model, const MatrixXd& vertex_colors,
                                   const morphable::ParamSet& params, int width, int height,
                                   const RenderConfig& cfg, FormImageTape* tape = nullptr) {
  const MatrixXd shape = morphable::sample_shape(model, params.p_i, params.p_e);
  const Camera cam = Camera::from_params(params.p_c);
  const Light light = Light::from_params(params.p_l);
  const Projected proj = project(shape, cam);
  RenderOutput out;
  out.raster = rasterize(proj.screen, proj.depth, model.triangles, width, height);
  const MatrixXd normals = vertex_normals(shape, model.triangles);
  out.image = shade(out.raster, model.triangles, vertex_colors, normals, light, cfg);
  out.silhouette = soft_silhouette(proj.screen, model.triangles, width, height, cfg.sigma, cfg.score_cap);
  if (tape) {
    tape->shape = shape;
    tape->screen = proj.screen;
    tape->depth = proj.depth;
    tape->normals = normals;
    tape->vcolors = vertex_colors;
    tape->camera = cam;
    tape->light = light;
  }
  return out;
}

/// I(M, C, p): texture colors sampled from the UV map at the model's UV
/// coordinates, then rendered. Single entry point used by fitting and
/// adversarial training.
inline RenderOutput form_image(const morphable::MorphableModel& model, const uvtex::UVMap& map,
                               const morphable::ParamSet& params, int width, int height,
                               const RenderConfig& cfg = {}, FormImageTape* tape = nullptr) {
  const MatrixXd vcolors = uvtex::sample_all(map, model.uv_coords);
  return render_colored(model, vcolors, params, width, height, cfg, tape);
}

struct FormImageGrads {
  MatrixXd vertex_colors;  // route to the UV map or to p_t by the caller
  VectorXd p_i;
  VectorXd p_e;
  Eigen::Matrix<double, 6, 1> p_c = Eigen::Matrix<double, 6, 1>::Zero();
  Eigen::Matrix<double, 6, 1> p_l = Eigen::Matrix<double, 6, 1>::Zero();
};

/// Pullback of render_colored / form_image. image_cotangent drives the shaded
/// color path; sil_cotangent drives the soft-silhouette path. Returns the
/// vertex-color cotangent (push it through uvtex::sample_all_pullback_map or
/// morphable::sample_texture_pullback depending on the texture source) and
/// coefficient cotangents.
inline FormImageGrads render_pullback(const morphable::MorphableModel& model,
                                      const morphable::ParamSet& params, const RenderOutput& output,
                                      const FormImageTape& tape, const Image3& image_cotangent,
                                      const Image1& sil_cotangent, const RenderConfig& cfg = {}) {
  const ShadePullback sp = shade_pullback(output.raster, model.triangles, tape.screen, tape.vcolors,
                                          tape.normals, tape.light, cfg, image_cotangent);
  MatrixXd screen_cot = sp.screen;
  screen_cot += soft_silhouette_pullback(tape.screen, model.triangles, output.raster.width,
                                         output.raster.height, cfg.sigma, output.silhouette, sil_cotangent,
                                         cfg.score_cap);

  MatrixXd vertex_cot = vertex_normals_pullback(tape.shape, model.triangles, sp.normals);
  const VectorXd depth_cot = VectorXd::Zero(tape.depth.size());
  const ProjectPullback pp = project_pullback(tape.shape, tape.camera, screen_cot, depth_cot);
  vertex_cot += pp.vertices;

  FormImageGrads grads;
  grads.vertex_colors = sp.vertex_colors;
  auto [pi_cot, pe_cot] = morphable::sample_shape_pullback(model, vertex_cot);
  grads.p_i = std::move(pi_cot);
  grads.p_e = std::move(pe_cot);
  grads.p_c = pp.camera;
  // Light gains were clamped at zero in Light::from_params.
  grads.p_l.head<3>() = sp.light.head<3>();
  for (int k = 3; k < 6; ++k) grads.p_l[k] = params.p_l[k] > 0.0 ? sp.light[k] : 0.0;
  return grads;
}

}  // namespace uvforge::render
