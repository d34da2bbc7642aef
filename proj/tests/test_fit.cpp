#include "uvforge/fit.hpp"

#include "uvforge/grad.hpp"
#include "uvforge/synth.hpp"

#include "helpers.hpp"

using namespace uvforge;
using namespace uvforge::fit;
using Catch::Approx;

// ---------------------------------------------------------------------------
// e_pix
// ---------------------------------------------------------------------------

TEST_CASE("e_pix is zero for identical images") {
  Rng rng(80);
  const Image3 img = testutil::random_image(rng, 7, 5);
  const Image1 mask(7, 5, 1.0);
  CHECK(e_pix(img, img, mask) == 0.0);
}

TEST_CASE("e_pix of black vs white under a full mask is sqrt(3)") {
  const Image3 black(6, 6, 0.0);
  const Image3 white(6, 6, 1.0);
  const Image1 mask(6, 6, 1.0);
  CHECK(e_pix(black, white, mask) == Approx(std::sqrt(3.0)).margin(1e-12));
}

TEST_CASE("e_pix matches a direct-summation oracle") {
  Rng rng(81);
  const Image3 a = testutil::random_image(rng, 9, 8);
  const Image3 b = testutil::random_image(rng, 9, 8);
  const Image1 mask = testutil::random_mask(rng, 9, 8);
  double sum = 0.0;
  int count = 0;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 9; ++x) {
      if (mask.at(y, x) == 0.0) continue;
      double d2 = 0.0;
      for (int c = 0; c < 3; ++c) d2 += (a.at(y, x, c) - b.at(y, x, c)) * (a.at(y, x, c) - b.at(y, x, c));
      sum += std::sqrt(d2);
      ++count;
    }
  REQUIRE(count > 0);
  CHECK(std::abs(e_pix(a, b, mask) - sum / count) < 1e-10);
}

TEST_CASE("e_pix rejects an empty foreground") {
  const Image3 img(4, 4, 0.5);
  const Image1 empty(4, 4, 0.0);
  CHECK_THROWS_WITH(e_pix(img, img, empty), Catch::Matchers::ContainsSubstring("empty foreground"));
}

TEST_CASE("e_pix pullback matches finite differences") {
  Rng rng(82);
  const Image3 target = testutil::random_image(rng, 6, 6);
  const Image3 rendered = testutil::random_image(rng, 6, 6);
  const Image1 mask = testutil::random_mask(rng, 6, 6);
  auto unpack = [&](const VectorXd& x) {
    Image3 img = rendered;
    for (long i = 0; i < x.size(); ++i) img.pix[i] = x[i];
    return img;
  };
  auto f = [&](const VectorXd& x) { return e_pix(target, unpack(x), mask); };
  auto g = [&](const VectorXd& x) {
    const Image3 cot = e_pix_pullback(target, unpack(x), mask);
    return VectorXd(Eigen::Map<const VectorXd>(cot.pix.data(), static_cast<long>(cot.pix.size())));
  };
  const VectorXd x0 = Eigen::Map<const VectorXd>(rendered.pix.data(), static_cast<long>(rendered.pix.size()));
  CHECK(grad::gradcheck(f, g, x0).max_rel_error < 1e-3);
}

TEST_CASE("e_pix of a render w.r.t. an 8x8 UV map passes gradcheck") {
  const auto& model = testutil::hemisphere_model();
  const morphable::ParamSet p = testutil::mild_params(model, 15);
  Rng rng(83);
  uvtex::UVMap map(8, 8, 0.0);
  for (double& v : map.pix) v = rng.uniform(0.2, 0.8);
  const int w = 16, h = 16;
  const Image3 target = testutil::random_image(rng, w, h);
  const render::RenderOutput base = render::form_image(model, map, p, w, h);
  const Image1 mask = render::hard_coverage(base.raster);
  const Image1 zero_sil(w, h, 0.0);

  auto unpack = [&](const VectorXd& x) {
    uvtex::UVMap m = map;
    for (long i = 0; i < x.size(); ++i) m.pix[i] = x[i];
    return m;
  };
  auto f = [&](const VectorXd& x) {
    return e_pix(target, render::form_image(model, unpack(x), p, w, h).image, mask);
  };
  auto g = [&](const VectorXd& x) {
    const uvtex::UVMap m = unpack(x);
    render::FormImageTape tape;
    const render::RenderOutput out = render::form_image(model, m, p, w, h, render::RenderConfig{}, &tape);
    const Image3 img_cot = e_pix_pullback(target, out.image, mask);
    const render::FormImageGrads grads = render::render_pullback(model, p, out, tape, img_cot, zero_sil);
    const Image3 mc = uvtex::sample_all_pullback_map(m, model.uv_coords, grads.vertex_colors);
    return VectorXd(Eigen::Map<const VectorXd>(mc.pix.data(), static_cast<long>(mc.pix.size())));
  };
  const VectorXd x0 = Eigen::Map<const VectorXd>(map.pix.data(), static_cast<long>(map.pix.size()));
  CHECK(grad::gradcheck(f, g, x0).max_rel_error < 1e-3);
}

// ---------------------------------------------------------------------------
// e_lm
// ---------------------------------------------------------------------------

TEST_CASE("e_lm vanishes when projections hit the targets") {
  const auto& model = testutil::hemisphere_model();
  const morphable::ParamSet p = testutil::mild_params(model, 16);
  const MatrixXd shape = morphable::sample_shape(model, p.p_i, p.p_e);
  const render::Camera cam = render::Camera::from_params(p.p_c);
  const Landmarks lm = synth::landmarks_for(model, p);
  CHECK(e_lm(lm, shape, cam, model) == Approx(0.0).margin(1e-15));
}

TEST_CASE("e_lm with a uniform unit offset equals one") {
  const auto& model = testutil::hemisphere_model();
  const morphable::ParamSet p = testutil::mild_params(model, 17);
  const MatrixXd shape = morphable::sample_shape(model, p.p_i, p.p_e);
  const render::Camera cam = render::Camera::from_params(p.p_c);
  Landmarks lm = synth::landmarks_for(model, p);
  for (int i = 0; i < lm.points.rows(); ++i) lm.points(i, 0) += 1.0;
  CHECK(e_lm(lm, shape, cam, model) == Approx(1.0).margin(1e-12));
}

TEST_CASE("e_lm errors with zero visible landmarks") {
  const auto& model = testutil::hemisphere_model();
  const morphable::ParamSet p = testutil::mild_params(model, 18);
  const MatrixXd shape = morphable::sample_shape(model, p.p_i, p.p_e);
  Landmarks lm = synth::landmarks_for(model, p);
  lm.visible.assign(lm.visible.size(), 0);
  CHECK_THROWS(e_lm(lm, shape, render::Camera::from_params(p.p_c), model));
}

TEST_CASE("e_lm gradient w.r.t. p_i matches finite differences") {
  const auto& model = testutil::hemisphere_model();
  const morphable::ParamSet truth = testutil::mild_params(model, 19);
  const Landmarks lm = synth::landmarks_for(model, truth);
  morphable::ParamSet p = truth;
  Rng rng(84);
  p.p_i += rng.gaussian_vector(model.k_i(), 0.2);
  const render::Camera cam = render::Camera::from_params(p.p_c);

  auto f = [&](const VectorXd& pi) {
    return e_lm(lm, morphable::sample_shape(model, pi, p.p_e), cam, model);
  };
  auto g = [&](const VectorXd& pi) {
    return e_lm_pullback(lm, morphable::sample_shape(model, pi, p.p_e), cam, model).p_i;
  };
  CHECK(grad::gradcheck(f, g, p.p_i).max_rel_error < 1e-4);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
  FitConfig cfg;
  AdamState state(3);
  const VectorXd p0 = Vector3d(1, 2, 3);
  const VectorXd p1 = adam_step(p0, VectorXd::Zero(3), state, cfg);
  CHECK((p1 - p0).norm() == 0.0);
  CHECK(state.t == 1);
}

TEST_CASE("first adam step moves by about lr in the gradient sign") {
  FitConfig cfg;
  cfg.lr = 0.01;
  for (const double g0 : {5.0, -0.7, 120.0}) {
    AdamState state(1);
    VectorXd p = VectorXd::Zero(1);
    VectorXd grad(1);
    grad[0] = g0;
    const VectorXd p1 = adam_step(p, grad, state, cfg);
    CHECK(p1[0] == Approx(-cfg.lr * (g0 > 0 ? 1.0 : -1.0)).epsilon(1e-4));
  }
}

TEST_CASE("first adam update is invariant to positive gradient scaling") {
  FitConfig cfg;
  VectorXd grad(2);
  grad << 3.0, -0.2;
  AdamState s1(2), s2(2);
  const VectorXd a = adam_step(VectorXd::Zero(2), grad, s1, cfg);
  const VectorXd b = adam_step(VectorXd::Zero(2), 100.0 * grad, s2, cfg);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("adam minimizes (x-3)^2 from zero") {
  FitConfig cfg;
  cfg.lr = 0.01;
  AdamState state(1);
  VectorXd x = VectorXd::Zero(1);
  for (int t = 0; t < 5000; ++t) {
    VectorXd grad(1);
    grad[0] = 2.0 * (x[0] - 3.0);
    x = adam_step(x, grad, state, cfg);
  }
  CHECK(std::abs(x[0] - 3.0) < 1e-2);
}

TEST_CASE("adam rejects non-finite gradients") {
  FitConfig cfg;
  AdamState state(2);
  VectorXd grad(2);
  grad << 1.0, std::numeric_limits<double>::infinity();
  CHECK_THROWS(adam_step(VectorXd::Zero(2), grad, state, cfg));
}

// ---------------------------------------------------------------------------
// fit_shape / fit_texture_light
// ---------------------------------------------------------------------------

namespace {

struct SelfFitScene {
  morphable::ParamSet truth;
  Image3 target;
  Landmarks landmarks;
};

SelfFitScene make_scene(uint64_t seed, int size) {
  const auto& model = testutil::hemisphere_model();
  SelfFitScene s;
  s.truth = testutil::mild_params(model, seed);
  const MatrixXd vcolors = morphable::sample_texture(model, s.truth.p_t);
  s.target = render::render_colored(model, vcolors, s.truth, size, size, render::RenderConfig{}).image;
  s.landmarks = synth::landmarks_for(model, s.truth);
  return s;
}

}  // namespace

TEST_CASE("fit_shape at the ground truth is a fixed point") {
  const auto& model = testutil::hemisphere_model();
  const SelfFitScene s = make_scene(31, 24);
  FitConfig cfg;
  cfg.steps = 3;
  const FitResult r = fit_shape(s.target, s.landmarks, model, s.truth, cfg);
  CHECK(r.trace.front().total < 1e-6);
  CHECK((r.params.p_i - s.truth.p_i).cwiseAbs().maxCoeff() < 1e-4);
  CHECK((r.params.p_c - s.truth.p_c).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("fit_shape recovers from a perturbed initialization") {
  const auto& model = testutil::hemisphere_model();
  const SelfFitScene s = make_scene(32, 32);
  Rng rng(85);
  morphable::ParamSet init = s.truth;
  init.p_i += rng.gaussian_vector(model.k_i(), 0.1);
  init.p_e += rng.gaussian_vector(model.k_e(), 0.1);
  init.p_t += rng.gaussian_vector(model.k_t(), 0.1);
  for (int k = 0; k < 6; ++k) init.p_c[k] += 0.02 * rng.gaussian();
  FitConfig cfg;
  cfg.steps = 150;
  const FitResult r = fit_shape(s.target, s.landmarks, model, init, cfg);
  CHECK(r.best_loss < 0.1 * r.trace.front().total);
}

TEST_CASE("fit_shape rejects zero steps and tracks the best iterate") {
  const auto& model = testutil::hemisphere_model();
  const SelfFitScene s = make_scene(33, 16);
  FitConfig cfg;
  cfg.steps = 0;
  CHECK_THROWS(fit_shape(s.target, s.landmarks, model, s.truth, cfg));

  cfg.steps = 10;
  const FitResult r = fit_shape(s.target, s.landmarks, model, s.truth, cfg);
  for (const auto& row : r.trace) CHECK(r.best_loss <= row.total);
}

TEST_CASE("fit_texture_light self-reconstructs a linear texture") {
  const auto& model = testutil::hemisphere_model();
  const SelfFitScene s = make_scene(34, 24);
  FitConfig cfg;
  cfg.steps = 400;
  cfg.lr = 0.02;
  const TextureFitResult r = fit_texture_light(s.target, s.truth, model, make_linear_color_source(model),
                                               VectorXd::Zero(model.k_t()), cfg);
  CHECK(r.best_loss < 1e-3);
}

TEST_CASE("fit_texture_light reaches a representable all-gray target") {
  const auto& model = testutil::hemisphere_model();
  morphable::ParamSet p = testutil::mild_params(model, 35);
  p.p_l << 0, 0, -1, 1.0, 0.0, 0.0;  // ambient-only
  const Image3 target(24, 24, Vector3d(0.5, 0.5, 0.5));

  // constant-capable source: single parameter, uniform gray color offset
  VertexColorSource src;
  src.dim = 1;
  const int n = model.vertex_count();
  src.colors = [n](const VectorXd& t) { return MatrixXd(MatrixXd::Constant(n, 3, t[0])); };
  src.pullback = [](const VectorXd&, const MatrixXd& cot) {
    VectorXd g(1);
    g[0] = cot.sum();
    return g;
  };
  FitConfig cfg;
  cfg.steps = 300;
  cfg.lr = 0.05;
  const TextureFitResult r = fit_texture_light(target, p, model, src, VectorXd::Zero(1), cfg);
  const Image1 mask = render::hard_coverage(r.best_render.raster);
  double max_resid = 0.0;
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) {
      if (mask.at(y, x) == 0.0) continue;
      for (int c = 0; c < 3; ++c)
        max_resid = std::max(max_resid, std::abs(r.best_render.image.at(y, x, c) - 0.5));
    }
  CHECK(max_resid < 1e-3);
}
