#pragma once

#include <catch2/catch_amalgamated.hpp>

#include "uvforge/core.hpp"
#include "uvforge/morphable.hpp"
#include "uvforge/synth.hpp"

namespace testutil {

using namespace uvforge;

inline VectorXd random_vector(Rng& rng, int n, double sigma = 1.0) { return rng.gaussian_vector(n, sigma); }

inline MatrixXd random_matrix(Rng& rng, int rows, int cols, double sigma = 1.0) {
  MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = sigma * rng.gaussian();
  return m;
}

/// Small random morphable model for unit tests that do not care about
/// geometry plausibility. Vertices lie roughly in the unit box.
inline morphable::MorphableModel random_model(uint64_t seed, int n = 80, int k_i = 3, int k_e = 2,
                                              int k_t = 2) {
  Rng rng(seed);
  morphable::MorphableModel m;
  m.mean_shape_id = random_vector(rng, 3 * n, 0.3);
  m.mean_shape_expr = random_vector(rng, 3 * n, 0.05);
  m.mean_texture = VectorXd(3 * n);
  for (int i = 0; i < 3 * n; ++i) m.mean_texture[i] = rng.uniform(0.1, 0.9);
  m.id_basis = random_matrix(rng, 3 * n, k_i, 0.1);
  m.expr_basis = random_matrix(rng, 3 * n, k_e, 0.1);
  m.tex_basis = random_matrix(rng, 3 * n, k_t, 0.1);
  m.triangles.resize(n / 3, 3);
  for (int t = 0; t < m.triangles.rows(); ++t)
    for (int j = 0; j < 3; ++j) m.triangles(t, j) = rng.uniform_int(0, n - 1);
  m.uv_coords = MatrixXd(n, 2);
  for (int i = 0; i < n; ++i) {
    m.uv_coords(i, 0) = rng.uniform();
    m.uv_coords(i, 1) = rng.uniform();
  }
  m.landmark_indices.resize(68);
  for (int i = 0; i < 68; ++i) m.landmark_indices[i] = rng.uniform_int(0, n - 1);
  m.validate();
  return m;
}

/// The synthetic hemisphere model, small settings, cached per seed.
inline const morphable::MorphableModel& hemisphere_model() {
  static const morphable::MorphableModel model = [] {
    synth::SynthConfig cfg;
    cfg.seed = 11;
    cfg.n_subdiv = 2;
    return synth::make_model(cfg);
  }();
  return model;
}

inline morphable::ParamSet mild_params(const morphable::MorphableModel& model, uint64_t seed,
                                       double coeff_sigma = 0.3) {
  Rng rng(seed);
  morphable::ParamSet p;
  p.p_i = rng.gaussian_vector(model.k_i(), coeff_sigma);
  p.p_e = rng.gaussian_vector(model.k_e(), coeff_sigma);
  p.p_t = rng.gaussian_vector(model.k_t(), coeff_sigma);
  p.p_c << rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.1, 0.1),
      rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1);
  p.p_l << rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), -1.0, rng.uniform(0.3, 0.8),
      rng.uniform(0.2, 0.6), rng.uniform(0.05, 0.3);
  return p;
}

inline Image3 random_image(Rng& rng, int w, int h) {
  Image3 img(w, h, 0.0);
  for (double& v : img.pix) v = rng.uniform();
  return img;
}

inline Image1 random_mask(Rng& rng, int w, int h, double fill_prob = 0.7) {
  Image1 m(w, h, 0.0);
  for (double& v : m.pix) v = rng.uniform() < fill_prob ? 1.0 : 0.0;
  return m;
}

}  // namespace testutil
