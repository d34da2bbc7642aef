#pragma once

#include <functional>

#include "uvforge/core.hpp"
#include "uvforge/render.hpp"

// Analysis-by-synthesis parameter estimation: pixel and landmark energies,
// Adam, joint shape fitting, and the fixed-geometry texture+light fit.
namespace uvforge::fit {

using morphable::MorphableModel;
using morphable::ParamSet;
using render::RenderConfig;
using render::RenderOutput;

struct FitConfig {
  double lr = 0.01;
  int steps = 1;
  double lambda_lm = 1.0;
  double lambda_pix = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double prior_weight = 0.0;  // optional L2 prior on (p_i, p_e, p_t)

  void validate() const {
    require(lr > 0.0, "FitConfig: lr must be > 0");
    require(steps >= 1, "FitConfig: steps must be >= 1");
    require(lambda_lm >= 0.0 && lambda_pix >= 0.0, "FitConfig: weights must be >= 0");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "FitConfig: betas must be in [0,1)");
    require(prior_weight >= 0.0, "FitConfig: prior weight must be >= 0");
  }
};

struct Landmarks {
  MatrixXd points;             // 68 x 2, screen coordinates
  std::vector<char> visible;   // 68 flags

  int count() const { return static_cast<int>(points.rows()); }
  int visible_count() const {
    int n = 0;
    for (char v : visible) n += v ? 1 : 0;
    return n;
  }
};

// ---------------------------------------------------------------------------
// Energies.
// ---------------------------------------------------------------------------

/// E_pix = (1/|F|) sum_{mask=1} |target - rendered|_2 per pixel over RGB.
inline double e_pix(const Image3& target, const Image3& rendered, const Image1& mask) {
  require(target.same_shape(rendered) && target.width == mask.width && target.height == mask.height,
          "e_pix: dimension mismatch");
  double sum = 0.0;
  int fg = 0;
  for (int y = 0; y < target.height; ++y)
    for (int x = 0; x < target.width; ++x) {
      if (mask.at(y, x) == 0.0) continue;
      ++fg;
      sum += (target.rgb(y, x) - rendered.rgb(y, x)).norm();
    }
  require(fg > 0, "e_pix: empty foreground");
  return sum / fg;
}

inline double e_pix(const Image3& target, const RenderOutput& rendered, const Image1& mask) {
  return e_pix(target, rendered.image, mask);
}

/// Pullback of e_pix into the rendered image (cotangent 1). Subgradient 0
/// at zero residual.
inline Image3 e_pix_pullback(const Image3& target, const Image3& rendered, const Image1& mask) {
  int fg = 0;
  for (double m : mask.pix) fg += m != 0.0 ? 1 : 0;
  require(fg > 0, "e_pix_pullback: empty foreground");
  Image3 cot(target.width, target.height, 0.0);
  for (int y = 0; y < target.height; ++y)
    for (int x = 0; x < target.width; ++x) {
      if (mask.at(y, x) == 0.0) continue;
      const Vector3d diff = rendered.rgb(y, x) - target.rgb(y, x);
      const double d = diff.norm();
      if (d > 1e-15) cot.set_rgb(y, x, diff / (d * fg));
    }
  return cot;
}

/// E_lm = mean over visible landmarks of |target - projected landmark|_2.
inline double e_lm(const Landmarks& target, const MatrixXd& shape, const render::Camera& cam,
                   const MorphableModel& model) {
  require(target.count() == static_cast<int>(model.landmark_indices.size()), "e_lm: landmark count mismatch");
  const int n_vis = target.visible_count();
  require(n_vis > 0, "e_lm: zero visible landmarks");
  const MatrixXd lm3d = morphable::landmark_vertices(model, shape);
  const render::Projected proj = render::project(lm3d, cam);
  double sum = 0.0;
  for (int i = 0; i < target.count(); ++i) {
    if (!target.visible[i]) continue;
    sum += (target.points.row(i) - proj.screen.row(i)).norm();
  }
  return sum / n_vis;
}

struct ElmGrads {
  VectorXd p_i;
  VectorXd p_e;
  Eigen::Matrix<double, 6, 1> p_c = Eigen::Matrix<double, 6, 1>::Zero();
};

inline ElmGrads e_lm_pullback(const Landmarks& target, const MatrixXd& shape, const render::Camera& cam,
                              const MorphableModel& model) {
  const int n_vis = target.visible_count();
  require(n_vis > 0, "e_lm_pullback: zero visible landmarks");
  const MatrixXd lm3d = morphable::landmark_vertices(model, shape);
  const render::Projected proj = render::project(lm3d, cam);
  MatrixXd screen_cot = MatrixXd::Zero(target.count(), 2);
  for (int i = 0; i < target.count(); ++i) {
    if (!target.visible[i]) continue;
    const Vector2d diff = (proj.screen.row(i) - target.points.row(i)).transpose();
    const double d = diff.norm();
    if (d > 1e-15) screen_cot.row(i) = (diff / (d * n_vis)).transpose();
  }
  const render::ProjectPullback pp =
      render::project_pullback(lm3d, cam, screen_cot, VectorXd::Zero(lm3d.rows()));
  const MatrixXd shape_cot = morphable::landmark_vertices_pullback(model, pp.vertices);
  auto [p_i, p_e] = morphable::sample_shape_pullback(model, shape_cot);
  ElmGrads grads;
  grads.p_i = std::move(p_i);
  grads.p_e = std::move(p_e);
  grads.p_c = pp.camera;
  return grads;
}

// ---------------------------------------------------------------------------
// Adam.
// ---------------------------------------------------------------------------

struct AdamState {
  VectorXd m;
  VectorXd v;
  int t = 0;

  explicit AdamState(int n = 0) : m(VectorXd::Zero(n)), v(VectorXd::Zero(n)) {}
};

/// Bias-corrected Adam update; increments state.t.
inline VectorXd adam_step(const VectorXd& params, const VectorXd& grads, AdamState& state,
                          const FitConfig& cfg) {
  require(params.size() == grads.size() && params.size() == state.m.size(),
          "adam_step: shape mismatch");
  for (int i = 0; i < grads.size(); ++i)
    require(std::isfinite(grads[i]), "adam_step: non-finite gradient at index " + std::to_string(i));
  state.t += 1;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grads;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grads.cwiseProduct(grads);
  const double m_corr = 1.0 - std::pow(cfg.beta1, state.t);
  const double v_corr = 1.0 - std::pow(cfg.beta2, state.t);
  const VectorXd m_hat = state.m / m_corr;
  const VectorXd v_hat = state.v / v_corr;
  return params - cfg.lr * (m_hat.array() / (v_hat.array().sqrt() + cfg.eps)).matrix();
}

// ---------------------------------------------------------------------------
// Shape fitting (joint over p_i, p_e, p_c, p_l, p_t).
// ---------------------------------------------------------------------------

struct FitTraceRow {
  int step;
  double e_pix;
  double e_lm;
  double total;
};

struct FitResult {
  ParamSet params;
  double best_loss = 0.0;
  std::vector<FitTraceRow> trace;
  RenderOutput best_render;
};

namespace detail {

inline VectorXd pack_params(const ParamSet& p) {
  VectorXd flat(p.p_i.size() + p.p_e.size() + 12 + p.p_t.size());
  int off = 0;
  flat.segment(off, p.p_i.size()) = p.p_i;
  off += static_cast<int>(p.p_i.size());
  flat.segment(off, p.p_e.size()) = p.p_e;
  off += static_cast<int>(p.p_e.size());
  flat.segment(off, 6) = p.p_c;
  off += 6;
  flat.segment(off, 6) = p.p_l;
  off += 6;
  flat.segment(off, p.p_t.size()) = p.p_t;
  return flat;
}

inline ParamSet unpack_params(const VectorXd& flat, const ParamSet& like) {
  ParamSet p = like;
  int off = 0;
  p.p_i = flat.segment(off, like.p_i.size());
  off += static_cast<int>(like.p_i.size());
  p.p_e = flat.segment(off, like.p_e.size());
  off += static_cast<int>(like.p_e.size());
  p.p_c = flat.segment(off, 6);
  off += 6;
  p.p_l = flat.segment(off, 6);
  off += 6;
  p.p_t = flat.segment(off, like.p_t.size());
  return p;
}

}  // namespace detail

/// Joint Adam fit of the combined objective
///   lambda_pix * E_pix + lambda_lm * E_lm (+ prior on coefficients).
/// The render uses the linear texture model; the foreground mask is the hard
/// coverage of the current mesh, recomputed every step and treated as
/// constant within the step. Returns the best-loss iterate.
inline FitResult fit_shape(const Image3& target, const Landmarks& landmarks, const MorphableModel& model,
                           const ParamSet& init, const FitConfig& cfg, const RenderConfig& rcfg = {}) {
  cfg.validate();
  ParamSet current = init;
  if (current.p_t.size() == 0) current.p_t = VectorXd::Zero(model.k_t());
  require(current.p_i.size() == model.k_i() && current.p_e.size() == model.k_e() &&
              current.p_t.size() == model.k_t(),
          "fit_shape: init dimensions do not match the model");

  VectorXd flat = detail::pack_params(current);
  AdamState state(static_cast<int>(flat.size()));
  FitResult result;
  result.best_loss = std::numeric_limits<double>::infinity();

  for (int step = 0; step <= cfg.steps; ++step) {
    const ParamSet p = detail::unpack_params(flat, current);
    const MatrixXd vcolors = morphable::sample_texture(model, p.p_t);
    render::FormImageTape tape;
    const RenderOutput out = render::render_colored(model, vcolors, p, target.width, target.height, rcfg, &tape);
    const Image1 mask = render::hard_coverage(out.raster);
    const double pix = e_pix(target, out.image, mask);
    const double lm = e_lm(landmarks, tape.shape, tape.camera, model);
    double total = cfg.lambda_pix * pix + cfg.lambda_lm * lm;
    if (cfg.prior_weight > 0.0)
      total += cfg.prior_weight * (p.p_i.squaredNorm() + p.p_e.squaredNorm() + p.p_t.squaredNorm());
    result.trace.push_back({step, pix, lm, total});
    if (total < result.best_loss) {
      result.best_loss = total;
      result.params = p;
      result.best_render = out;
    }
    if (step == cfg.steps) break;

    const Image3 image_cot_raw = e_pix_pullback(target, out.image, mask);
    Image3 image_cot = image_cot_raw;
    for (double& v : image_cot.pix) v *= cfg.lambda_pix;
    const Image1 sil_cot(target.width, target.height, 0.0);
    const render::FormImageGrads rg = render::render_pullback(model, p, out, tape, image_cot, sil_cot, rcfg);
    const ElmGrads lg = e_lm_pullback(landmarks, tape.shape, tape.camera, model);

    ParamSet g;
    g.p_i = rg.p_i + cfg.lambda_lm * lg.p_i;
    g.p_e = rg.p_e + cfg.lambda_lm * lg.p_e;
    g.p_c = rg.p_c + cfg.lambda_lm * lg.p_c;
    g.p_l = rg.p_l;
    g.p_t = morphable::sample_texture_pullback(model, rg.vertex_colors);
    if (cfg.prior_weight > 0.0) {
      g.p_i += 2.0 * cfg.prior_weight * p.p_i;
      g.p_e += 2.0 * cfg.prior_weight * p.p_e;
      g.p_t += 2.0 * cfg.prior_weight * p.p_t;
    }
    flat = adam_step(flat, detail::pack_params(g), state, cfg);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Texture + light fitting at fixed geometry and camera.
// ---------------------------------------------------------------------------

/// Produces per-vertex colors from an opaque parameter vector, with the
/// matching pullback. Adapts either the linear texture model or a generator
/// latent (see gan::make_generator_color_source) to the same fitting loop.
struct VertexColorSource {
  int dim = 0;
  std::function<MatrixXd(const VectorXd&)> colors;                     // params -> n x 3
  std::function<VectorXd(const VectorXd&, const MatrixXd&)> pullback;  // (params, color cot) -> param cot
};

inline VertexColorSource make_linear_color_source(const MorphableModel& model) {
  VertexColorSource src;
  src.dim = model.k_t();
  src.colors = [&model](const VectorXd& p_t) { return morphable::sample_texture(model, p_t); };
  src.pullback = [&model](const VectorXd&, const MatrixXd& cot) {
    return morphable::sample_texture_pullback(model, cot);
  };
  return src;
}

struct TextureFitResult {
  VectorXd texture_params;
  Eigen::Matrix<double, 6, 1> p_l = Eigen::Matrix<double, 6, 1>::Zero();
  double best_loss = 0.0;
  RenderOutput best_render;
  std::vector<FitTraceRow> trace;  // e_pix column holds the L1 energy, e_lm is 0
};

/// Mean per-pixel L1 over the foreground (channel absolute differences
/// summed per pixel), minimized over texture parameters and light, with
/// geometry and camera held fixed.
inline TextureFitResult fit_texture_light(const Image3& target, const ParamSet& fixed_geometry,
                                          const MorphableModel& model, const VertexColorSource& source,
                                          const VectorXd& texture_init, const FitConfig& cfg,
                                          const RenderConfig& rcfg = {}) {
  cfg.validate();
  require(texture_init.size() == source.dim, "fit_texture_light: init dimension mismatch");

  VectorXd flat(source.dim + 6);
  flat.head(source.dim) = texture_init;
  flat.tail(6) = fixed_geometry.p_l;
  AdamState state(static_cast<int>(flat.size()));

  TextureFitResult result;
  result.best_loss = std::numeric_limits<double>::infinity();

  for (int step = 0; step <= cfg.steps; ++step) {
    ParamSet p = fixed_geometry;
    p.p_l = flat.tail(6);
    const VectorXd tex = flat.head(source.dim);
    const MatrixXd vcolors = source.colors(tex);
    render::FormImageTape tape;
    const RenderOutput out = render::render_colored(model, vcolors, p, target.width, target.height, rcfg, &tape);
    const Image1 mask = render::hard_coverage(out.raster);
    int fg = 0;
    for (double m : mask.pix) fg += m != 0.0 ? 1 : 0;
    require(fg > 0, "fit_texture_light: empty foreground");

    double l1 = 0.0;
    Image3 image_cot(target.width, target.height, 0.0);
    for (int y = 0; y < target.height; ++y)
      for (int x = 0; x < target.width; ++x) {
        if (mask.at(y, x) == 0.0) continue;
        for (int c = 0; c < 3; ++c) {
          const double diff = out.image.at(y, x, c) - target.at(y, x, c);
          l1 += std::abs(diff);
          image_cot.at(y, x, c) = diff > 0.0 ? 1.0 / fg : (diff < 0.0 ? -1.0 / fg : 0.0);
        }
      }
    l1 /= fg;

    result.trace.push_back({step, l1, 0.0, l1});
    if (l1 < result.best_loss) {
      result.best_loss = l1;
      result.texture_params = tex;
      result.p_l = p.p_l;
      result.best_render = out;
    }
    if (step == cfg.steps) break;

    const Image1 sil_cot(target.width, target.height, 0.0);
    const render::FormImageGrads rg = render::render_pullback(model, p, out, tape, image_cot, sil_cot, rcfg);
    VectorXd grads(flat.size());
    grads.head(source.dim) = source.pullback(tex, rg.vertex_colors);
    grads.tail(6) = rg.p_l;
    flat = adam_step(flat, grads, state, cfg);
  }
  return result;
}

}  // namespace uvforge::fit
