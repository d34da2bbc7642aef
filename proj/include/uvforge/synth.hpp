#pragma once

#include <map>

#include "uvforge/fit.hpp"
#include "uvforge/gan.hpp"
#include "uvforge/morphable.hpp"
#include "uvforge/render.hpp"

// Synthetic stand-ins: a procedurally generated morphable model (front
// hemisphere of a subdivided icosphere with cylindrical UVs and smooth
// low-frequency eigenbases) and a labeled dataset of rendered "in the wild"
// images with ground-truth parameters and silhouettes.
namespace uvforge::synth {

using morphable::MorphableModel;
using morphable::ParamSet;

struct SynthConfig {
  uint64_t seed = 1;
  int n_subdiv = 2;       // icosphere subdivision level
  int k_i = 8;
  int k_e = 4;
  int k_t = 6;
  int n_samples = 64;
  int image_width = 64;
  int image_height = 64;
  int uv_width = 32;
  int uv_height = 32;
  double coefficient_scale = 1.0;
  std::string attribute_rule = "sign_p_i0";

  void validate() const {
    require(n_subdiv >= 1 && k_i >= 1 && k_e >= 1 && k_t >= 1, "SynthConfig: sizes must be >= 1");
    require(n_samples >= 1, "SynthConfig: n_samples must be >= 1");
    require(image_width >= 1 && image_height >= 1 && uv_width >= 1 && uv_height >= 1,
            "SynthConfig: resolutions must be >= 1");
    require(coefficient_scale >= 0.0, "SynthConfig: coefficient scale must be >= 0");
    require(attribute_rule == "sign_p_i0", "SynthConfig: unknown attribute_rule '" + attribute_rule + "'");
  }
};

namespace detail {

struct Mesh {
  MatrixXd vertices;
  MatrixXi triangles;
};

inline Mesh icosphere(int n_subdiv) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vector3d> verts = {{-1, phi, 0}, {1, phi, 0},   {-1, -phi, 0}, {1, -phi, 0},
                                 {0, -1, phi}, {0, 1, phi},   {0, -1, -phi}, {0, 1, -phi},
                                 {phi, 0, -1}, {phi, 0, 1},   {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& v : verts) v.normalize();
  std::vector<std::array<int, 3>> faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                           {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                           {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                           {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int level = 0; level < n_subdiv; ++level) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      Vector3d m = (verts[a] + verts[b]).normalized();
      verts.push_back(m);
      const int idx = static_cast<int>(verts.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int ab = mid(f[0], f[1]);
      const int bc = mid(f[1], f[2]);
      const int ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }
  Mesh mesh;
  mesh.vertices.resize(static_cast<int>(verts.size()), 3);
  for (size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<int>(i)) = verts[i].transpose();
  mesh.triangles.resize(static_cast<int>(faces.size()), 3);
  for (size_t i = 0; i < faces.size(); ++i)
    for (int j = 0; j < 3; ++j) mesh.triangles(static_cast<int>(i), j) = faces[i][j];
  return mesh;
}

/// Keeps faces whose vertices all satisfy z <= z_cut, re-indexing vertices.
inline Mesh front_hemisphere(const Mesh& mesh, double z_cut) {
  std::vector<int> remap(mesh.vertices.rows(), -1);
  std::vector<std::array<int, 3>> faces;
  for (int f = 0; f < mesh.triangles.rows(); ++f) {
    bool keep = true;
    for (int j = 0; j < 3; ++j)
      if (mesh.vertices(mesh.triangles(f, j), 2) > z_cut) keep = false;
    if (keep) faces.push_back({mesh.triangles(f, 0), mesh.triangles(f, 1), mesh.triangles(f, 2)});
  }
  int next = 0;
  for (const auto& f : faces)
    for (int v : f)
      if (remap[v] < 0) remap[v] = next++;
  Mesh out;
  out.vertices.resize(next, 3);
  for (int v = 0; v < mesh.vertices.rows(); ++v)
    if (remap[v] >= 0) out.vertices.row(remap[v]) = mesh.vertices.row(v);
  out.triangles.resize(static_cast<int>(faces.size()), 3);
  for (size_t f = 0; f < faces.size(); ++f)
    for (int j = 0; j < 3; ++j) out.triangles(static_cast<int>(f), j) = remap[faces[f][j]];
  return out;
}

/// Smooth low-frequency field: each output component is a sum of three
/// random sinusoids of position.
inline VectorXd sinusoid_field(const MatrixXd& positions, Rng& rng, double max_freq) {
  const int n = static_cast<int>(positions.rows());
  VectorXd field(3 * n);
  for (int c = 0; c < 3; ++c) {
    Vector3d omega[3];
    double phase[3], amp[3];
    for (int h = 0; h < 3; ++h) {
      omega[h] = Vector3d(rng.uniform(-max_freq, max_freq), rng.uniform(-max_freq, max_freq),
                          rng.uniform(-max_freq, max_freq));
      phase[h] = rng.uniform(0.0, 2.0 * M_PI);
      amp[h] = rng.uniform(0.3, 1.0);
    }
    for (int i = 0; i < n; ++i) {
      const Vector3d p = positions.row(i).transpose();
      double v = 0.0;
      for (int h = 0; h < 3; ++h) v += amp[h] * std::sin(omega[h].dot(p) + phase[h]);
      field[3 * i + c] = v;
    }
  }
  return field;
}

/// Farthest-point sampling over vertex positions, seeded at vertex 0.
inline std::vector<int> spread_landmarks(const MatrixXd& vertices, int count) {
  const int n = static_cast<int>(vertices.rows());
  require(n >= count, "spread_landmarks: mesh has fewer vertices than landmarks");
  std::vector<int> picked = {0};
  VectorXd dist(n);
  for (int i = 0; i < n; ++i) dist[i] = (vertices.row(i) - vertices.row(0)).norm();
  while (static_cast<int>(picked.size()) < count) {
    int best = 0;
    for (int i = 1; i < n; ++i)
      if (dist[i] > dist[best]) best = i;
    picked.push_back(best);
    for (int i = 0; i < n; ++i) dist[i] = std::min(dist[i], (vertices.row(i) - vertices.row(best)).norm());
  }
  return picked;
}

}  // namespace detail

/// Deterministic synthetic morphable model: front hemisphere of a subdivided
/// icosphere (radius 0.75, facing the viewer), cylindrical UVs, smooth
/// unit-norm eigenbases, and 68 well-spread landmark vertices.
inline MorphableModel make_model(const SynthConfig& cfg) {
  cfg.validate();
  detail::Mesh mesh = detail::icosphere(cfg.n_subdiv);
  mesh = detail::front_hemisphere(mesh, 0.35);
  const double radius = 0.75;
  mesh.vertices *= radius;

  const int n = static_cast<int>(mesh.vertices.rows());
  MorphableModel model;
  model.triangles = mesh.triangles;
  model.mean_shape_id = morphable::to_flat3(mesh.vertices);

  Rng rng(splitmix64(cfg.seed) ^ 0x6d6f64656cULL);

  // Small fixed smooth expression offset so the identity/expression split is
  // exercised even at zero coefficients.
  VectorXd expr_mean = detail::sinusoid_field(mesh.vertices, rng, 2.0);
  model.mean_shape_expr = 0.01 * expr_mean / std::max(1e-12, expr_mean.norm() / std::sqrt(3.0 * n));

  model.id_basis.resize(3 * n, cfg.k_i);
  for (int j = 0; j < cfg.k_i; ++j) {
    VectorXd col = detail::sinusoid_field(mesh.vertices, rng, 3.0);
    model.id_basis.col(j) = col / col.norm();
  }
  model.expr_basis.resize(3 * n, cfg.k_e);
  for (int j = 0; j < cfg.k_e; ++j) {
    VectorXd col = detail::sinusoid_field(mesh.vertices, rng, 4.0);
    model.expr_basis.col(j) = col / col.norm();
  }

  // Procedural skin-tone gradient mean texture, gently modulated.
  VectorXd tex_field = detail::sinusoid_field(mesh.vertices, rng, 2.0);
  model.mean_texture.resize(3 * n);
  const Vector3d base(0.78, 0.62, 0.50);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c)
      model.mean_texture[3 * i + c] = clamp01(base[c] + 0.08 * tex_field[3 * i + c]);

  model.tex_basis.resize(3 * n, cfg.k_t);
  for (int j = 0; j < cfg.k_t; ++j) {
    VectorXd col = detail::sinusoid_field(mesh.vertices, rng, 2.5);
    model.tex_basis.col(j) = col / col.norm();
  }

  // Cylindrical UVs around z: azimuth -> u, height -> v.
  model.uv_coords.resize(n, 2);
  double z_min = mesh.vertices.col(2).minCoeff();
  double z_max = mesh.vertices.col(2).maxCoeff();
  for (int i = 0; i < n; ++i) {
    const double az = std::atan2(mesh.vertices(i, 1), mesh.vertices(i, 0));
    model.uv_coords(i, 0) = (az + M_PI) / (2.0 * M_PI);
    model.uv_coords(i, 1) = (mesh.vertices(i, 2) - z_min) / std::max(1e-12, z_max - z_min);
  }

  model.landmark_indices = detail::spread_landmarks(mesh.vertices, 68);
  model.validate();
  return model;
}

struct SynthDataset {
  std::vector<gan::TrainSample> samples;
  std::vector<int> labels;  // +1 / -1 per sample
};

/// Projected ground-truth landmarks (all visible) for a parameter set.
inline fit::Landmarks landmarks_for(const MorphableModel& model, const ParamSet& params) {
  const MatrixXd shape = morphable::sample_shape(model, params.p_i, params.p_e);
  const MatrixXd lm3d = morphable::landmark_vertices(model, shape);
  const render::Projected proj = render::project(lm3d, render::Camera::from_params(params.p_c));
  fit::Landmarks lm;
  lm.points = proj.screen;
  lm.visible.assign(model.landmark_indices.size(), 1);
  return lm;
}

/// Smooth procedural background from a per-sample RNG stream.
inline Image3 procedural_background(int width, int height, Rng& rng) {
  Image3 bg(width, height, 0.0);
  for (int c = 0; c < 3; ++c) {
    const double fx = rng.uniform(0.5, 3.0), fy = rng.uniform(0.5, 3.0);
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    const double base = rng.uniform(0.25, 0.75);
    const double amp = rng.uniform(0.1, 0.25);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double sx = static_cast<double>(x) / width;
        const double sy = static_cast<double>(y) / height;
        bg.at(y, x, c) = clamp01(base + amp * std::sin(2.0 * M_PI * (fx * sx + fy * sy) + phase));
      }
  }
  return bg;
}

/// Per sample: coefficients ~ N(0, sigma_p^2), camera within |rotation| <=
/// 0.5 rad, light gains in [0.2, 1], rendered with the linear texture and
/// composited over a procedural background. Silhouette is the rasterizer's
/// hard coverage. Deterministic per-sample RNG streams.
inline SynthDataset make_dataset(const MorphableModel& model, const SynthConfig& cfg,
                                 const render::RenderConfig& rcfg = {}) {
  cfg.validate();
  SynthDataset ds;
  ds.samples.resize(cfg.n_samples);
  ds.labels.resize(cfg.n_samples);
  for (int i = 0; i < cfg.n_samples; ++i) {
    Rng rng = Rng::stream(cfg.seed, 0x10000ULL + static_cast<uint64_t>(i));
    ParamSet p;
    p.p_i = rng.gaussian_vector(model.k_i(), cfg.coefficient_scale);
    p.p_e = rng.gaussian_vector(model.k_e(), cfg.coefficient_scale);
    p.p_t = rng.gaussian_vector(model.k_t(), cfg.coefficient_scale);

    const Vector3d axis = rng.unit_vector();
    const double angle = rng.uniform(0.0, 0.5);
    p.p_c.head<3>() = angle * axis;
    p.p_c[3] = rng.uniform(-0.15, 0.15);
    p.p_c[4] = rng.uniform(-0.15, 0.15);
    p.p_c[5] = rng.uniform(std::log(0.85), std::log(1.15));

    Vector3d light_dir(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, -0.2));
    p.p_l.head<3>() = light_dir.normalized();
    for (int k = 3; k < 6; ++k) p.p_l[k] = rng.uniform(0.2, 1.0);

    const MatrixXd vcolors = morphable::sample_texture(model, p.p_t);
    const render::RenderOutput out =
        render::render_colored(model, vcolors, p, cfg.image_width, cfg.image_height, rcfg);
    const Image1 coverage = render::hard_coverage(out.raster);
    const Image3 background = procedural_background(cfg.image_width, cfg.image_height, rng);

    gan::TrainSample sample;
    sample.params = p;
    sample.silhouette = coverage;
    sample.image = Image3(cfg.image_width, cfg.image_height, 0.0);
    for (int y = 0; y < cfg.image_height; ++y)
      for (int x = 0; x < cfg.image_width; ++x) {
        const double m = coverage.at(y, x);
        for (int c = 0; c < 3; ++c)
          sample.image.at(y, x, c) = m * out.image.at(y, x, c) + (1.0 - m) * background.at(y, x, c);
      }
    ds.samples[i] = std::move(sample);
    ds.labels[i] = p.p_i[0] > 0.0 ? 1 : -1;
  }
  return ds;
}

}  // namespace uvforge::synth
