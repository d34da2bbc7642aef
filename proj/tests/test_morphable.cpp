#include "uvforge/morphable.hpp"

#include "uvforge/grad.hpp"

#include "helpers.hpp"

using namespace uvforge;
using namespace uvforge::morphable;
using Catch::Approx;

TEST_CASE("sample_shape at the origin returns the mean exactly") {
  const auto model = testutil::random_model(21);
  const MatrixXd s = sample_shape(model, VectorXd::Zero(model.k_i()), VectorXd::Zero(model.k_e()));
  const MatrixXd expected = to_rows3(model.mean_shape_id + model.mean_shape_expr);
  CHECK((s - expected).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sample_shape along a basis vector adds the basis column") {
  const auto model = testutil::random_model(22);
  const int k = 1;
  const double c = 2.5;
  VectorXd p_i = VectorXd::Zero(model.k_i());
  p_i[k] = c;
  const MatrixXd s = sample_shape(model, p_i, VectorXd::Zero(model.k_e()));
  const MatrixXd expected =
      to_rows3(model.mean_shape_id + model.mean_shape_expr + c * model.id_basis.col(k));
  CHECK((s - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("sample_shape matches a dense mat-vec oracle") {
  const auto model = testutil::random_model(23);
  Rng rng(1);
  const VectorXd p_i = rng.gaussian_vector(model.k_i());
  const VectorXd p_e = rng.gaussian_vector(model.k_e());
  // element-by-element accumulation, no Eigen products
  VectorXd flat = model.mean_shape_id + model.mean_shape_expr;
  for (int j = 0; j < model.k_i(); ++j)
    for (int r = 0; r < flat.size(); ++r) flat[r] += model.id_basis(r, j) * p_i[j];
  for (int j = 0; j < model.k_e(); ++j)
    for (int r = 0; r < flat.size(); ++r) flat[r] += model.expr_basis(r, j) * p_e[j];
  const MatrixXd s = sample_shape(model, p_i, p_e);
  CHECK((s - to_rows3(flat)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("sample_shape rejects dimension mismatches") {
  const auto model = testutil::random_model(24);
  CHECK_THROWS(sample_shape(model, VectorXd::Zero(model.k_i() + 1), VectorXd::Zero(model.k_e())));
  CHECK_THROWS(sample_texture(model, VectorXd::Zero(model.k_t() + 2)));
}

TEST_CASE("sample_texture basics and oracle") {
  const auto model = testutil::random_model(25);
  CHECK((sample_texture(model, VectorXd::Zero(model.k_t())) - to_rows3(model.mean_texture))
            .cwiseAbs()
            .maxCoeff() == 0.0);
  VectorXd e1 = VectorXd::Zero(model.k_t());
  e1[0] = 1.0;
  CHECK((sample_texture(model, e1) - to_rows3(model.mean_texture + model.tex_basis.col(0)))
            .cwiseAbs()
            .maxCoeff() < 1e-12);

  Rng rng(2);
  const VectorXd p_t = rng.gaussian_vector(model.k_t());
  VectorXd flat = model.mean_texture;
  for (int j = 0; j < model.k_t(); ++j)
    for (int r = 0; r < flat.size(); ++r) flat[r] += model.tex_basis(r, j) * p_t[j];
  CHECK((sample_texture(model, p_t) - to_rows3(flat)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("landmark_vertices gathers rows in index order") {
  auto model = testutil::random_model(26, 90);
  const int n = model.vertex_count();
  MatrixXd shape(n, 3);
  for (int i = 0; i < n; ++i) shape.row(i) << i, 2 * i, 3 * i;

  model.landmark_indices.resize(68);
  for (int i = 0; i < 68; ++i) model.landmark_indices[i] = i;
  MatrixXd lm = landmark_vertices(model, shape);
  for (int i = 0; i < 68; ++i) CHECK(lm(i, 0) == Approx(i));

  // permuted indices come back in index order
  for (int i = 0; i < 68; ++i) model.landmark_indices[i] = 67 - i;
  lm = landmark_vertices(model, shape);
  for (int i = 0; i < 68; ++i) CHECK(lm(i, 0) == Approx(67 - i));
}

TEST_CASE("shape/texture pullbacks equal the transposed bases") {
  const auto model = testutil::random_model(27);
  Rng rng(3);
  const MatrixXd cot = testutil::random_matrix(rng, model.vertex_count(), 3);
  const auto [gi, ge] = sample_shape_pullback(model, cot);
  const VectorXd flat = to_flat3(cot);
  CHECK((gi - model.id_basis.transpose() * flat).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((ge - model.expr_basis.transpose() * flat).cwiseAbs().maxCoeff() < 1e-10);
  const VectorXd gt = sample_texture_pullback(model, cot);
  CHECK((gt - model.tex_basis.transpose() * flat).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("affine linearity identity of sample_shape") {
  const auto model = testutil::random_model(28);
  Rng rng(4);
  const VectorXd p = rng.gaussian_vector(model.k_i());
  const VectorXd q = rng.gaussian_vector(model.k_i());
  const double a = 0.7, b = -1.3;
  const VectorXd zero_e = VectorXd::Zero(model.k_e());
  const MatrixXd mean = sample_shape(model, VectorXd::Zero(model.k_i()), zero_e);
  const MatrixXd lhs = sample_shape(model, a * p + b * q, zero_e);
  const MatrixXd rhs =
      a * sample_shape(model, p, zero_e) + b * sample_shape(model, q, zero_e) + (1.0 - a - b) * mean;
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("gradient of a landmark scalar w.r.t. p_i matches finite differences") {
  const auto model = testutil::random_model(29);
  Rng rng(5);
  const VectorXd p_e = rng.gaussian_vector(model.k_e(), 0.1);
  const MatrixXd weights = testutil::random_matrix(rng, 68, 3);

  auto f = [&](const VectorXd& p_i) {
    const MatrixXd lm = landmark_vertices(model, sample_shape(model, p_i, p_e));
    return (lm.array() * weights.array()).sum();
  };
  auto g = [&](const VectorXd&) {
    const MatrixXd shape_cot = landmark_vertices_pullback(model, weights);
    return sample_shape_pullback(model, shape_cot).first;
  };
  const auto report = grad::gradcheck(f, g, rng.gaussian_vector(model.k_i(), 0.2));
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("model validation rejects broken invariants") {
  auto model = testutil::random_model(30);
  model.triangles(0, 0) = model.vertex_count();
  CHECK_THROWS(model.validate());
  model = testutil::random_model(30);
  model.uv_coords(3, 1) = 1.5;
  CHECK_THROWS(model.validate());
  model = testutil::random_model(30);
  model.mean_texture[0] = -0.1;
  CHECK_THROWS(model.validate());
}
