#pragma once

#include <utility>

#include "uvforge/core.hpp"

// Linear statistical face model: shape = mean_id + mean_expr + E_i p_i + E_e p_e,
// texture = mean_tex + E_t p_t. 3n vectors are vertex-major [x0 y0 z0 x1 ...].
namespace uvforge::morphable {

struct MorphableModel {
  VectorXd mean_shape_id;    // 3n
  VectorXd mean_shape_expr;  // 3n
  VectorXd mean_texture;     // 3n, components in [0,1]
  MatrixXd id_basis;         // 3n x k_i
  MatrixXd expr_basis;       // 3n x k_e
  MatrixXd tex_basis;        // 3n x k_t
  MatrixXi triangles;        // m x 3 vertex indices
  MatrixXd uv_coords;        // n x 2 in [0,1]^2
  std::vector<int> landmark_indices;  // 68 vertex indices

  int vertex_count() const { return static_cast<int>(mean_shape_id.size()) / 3; }
  int triangle_count() const { return static_cast<int>(triangles.rows()); }
  int k_i() const { return static_cast<int>(id_basis.cols()); }
  int k_e() const { return static_cast<int>(expr_basis.cols()); }
  int k_t() const { return static_cast<int>(tex_basis.cols()); }

  void validate() const {
    const int n3 = static_cast<int>(mean_shape_id.size());
    require(n3 > 0 && n3 % 3 == 0, "MorphableModel: mean shape length must be a positive multiple of 3");
    require(mean_shape_expr.size() == n3, "MorphableModel: mean_shape_expr length mismatch");
    require(mean_texture.size() == n3, "MorphableModel: mean_texture length mismatch");
    require(id_basis.rows() == n3 && id_basis.cols() >= 1, "MorphableModel: id_basis shape invalid");
    require(expr_basis.rows() == n3 && expr_basis.cols() >= 1, "MorphableModel: expr_basis shape invalid");
    require(tex_basis.rows() == n3 && tex_basis.cols() >= 1, "MorphableModel: tex_basis shape invalid");
    const int n = n3 / 3;
    for (int t = 0; t < triangles.rows(); ++t)
      for (int j = 0; j < 3; ++j)
        require(triangles(t, j) >= 0 && triangles(t, j) < n, "MorphableModel: triangle index out of range");
    require(uv_coords.rows() == n && uv_coords.cols() == 2, "MorphableModel: uv_coords must be n x 2");
    for (int i = 0; i < n; ++i)
      require(uv_coords(i, 0) >= 0.0 && uv_coords(i, 0) <= 1.0 && uv_coords(i, 1) >= 0.0 && uv_coords(i, 1) <= 1.0,
              "MorphableModel: uv coordinate outside [0,1]^2 at vertex " + std::to_string(i));
    for (int idx : landmark_indices)
      require(idx >= 0 && idx < n, "MorphableModel: landmark index out of range");
    for (int i = 0; i < n3; ++i)
      require(mean_texture[i] >= 0.0 && mean_texture[i] <= 1.0, "MorphableModel: mean_texture outside [0,1]");
  }
};

/// Per-image coefficients. p_c = axis-angle rotation (3), image-plane
/// translation (2), log-scale (1). p_l = light direction (3, consumed
/// normalized), ambient, diffuse, specular gains. p_t empty means the
/// texture comes from a UV map instead of the linear model.
struct ParamSet {
  VectorXd p_i;
  VectorXd p_e;
  Eigen::Matrix<double, 6, 1> p_c = Eigen::Matrix<double, 6, 1>::Zero();
  Eigen::Matrix<double, 6, 1> p_l = Eigen::Matrix<double, 6, 1>::Zero();
  VectorXd p_t;  // size 0 = absent

  bool has_texture_coeffs() const { return p_t.size() > 0; }
};

inline MatrixXd to_rows3(const VectorXd& flat) {
  require(flat.size() % 3 == 0, "to_rows3: length must be a multiple of 3");
  const int n = static_cast<int>(flat.size()) / 3;
  MatrixXd rows(n, 3);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) rows(i, c) = flat[3 * i + c];
  return rows;
}

inline VectorXd to_flat3(const MatrixXd& rows) {
  require(rows.cols() == 3, "to_flat3: expected 3 columns");
  VectorXd flat(rows.rows() * 3);
  for (int i = 0; i < rows.rows(); ++i)
    for (int c = 0; c < 3; ++c) flat[3 * i + c] = rows(i, c);
  return flat;
}

/// S = mean_id + mean_expr + E_i p_i + E_e p_e, reshaped to n x 3.
inline MatrixXd sample_shape(const MorphableModel& model, const VectorXd& p_i, const VectorXd& p_e) {
  require(p_i.size() == model.id_basis.cols(), "sample_shape: p_i dimension mismatch");
  require(p_e.size() == model.expr_basis.cols(), "sample_shape: p_e dimension mismatch");
  const VectorXd flat =
      model.mean_shape_id + model.mean_shape_expr + model.id_basis * p_i + model.expr_basis * p_e;
  return to_rows3(flat);
}

/// Pullback of sample_shape: vertex-position cotangent -> (p_i, p_e) cotangents.
inline std::pair<VectorXd, VectorXd> sample_shape_pullback(const MorphableModel& model,
                                                           const MatrixXd& vertex_cotangent) {
  const VectorXd flat = to_flat3(vertex_cotangent);
  return {model.id_basis.transpose() * flat, model.expr_basis.transpose() * flat};
}

/// T = mean_tex + E_t p_t, reshaped to n x 3. Not clamped here; clamping to
/// [0,1] happens at render time so the map stays linear in p_t.
inline MatrixXd sample_texture(const MorphableModel& model, const VectorXd& p_t) {
  require(p_t.size() == model.tex_basis.cols(), "sample_texture: p_t dimension mismatch");
  return to_rows3(model.mean_texture + model.tex_basis * p_t);
}

inline VectorXd sample_texture_pullback(const MorphableModel& model, const MatrixXd& color_cotangent) {
  return model.tex_basis.transpose() * to_flat3(color_cotangent);
}

/// Gathers shape rows at the model's landmark indices, order-preserving.
inline MatrixXd landmark_vertices(const MorphableModel& model, const MatrixXd& shape) {
  require(shape.rows() == model.vertex_count() && shape.cols() == 3, "landmark_vertices: shape must be n x 3");
  MatrixXd out(static_cast<int>(model.landmark_indices.size()), 3);
  for (size_t i = 0; i < model.landmark_indices.size(); ++i) out.row(static_cast<int>(i)) = shape.row(model.landmark_indices[i]);
  return out;
}

/// Pullback of landmark_vertices: scatter-add landmark cotangents into an
/// n x 3 vertex cotangent.
inline MatrixXd landmark_vertices_pullback(const MorphableModel& model, const MatrixXd& landmark_cotangent) {
  MatrixXd out = MatrixXd::Zero(model.vertex_count(), 3);
  for (size_t i = 0; i < model.landmark_indices.size(); ++i)
    out.row(model.landmark_indices[i]) += landmark_cotangent.row(static_cast<int>(i));
  return out;
}

}  // namespace uvforge::morphable
