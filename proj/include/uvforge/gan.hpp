#pragma once

#include "uvforge/fit.hpp"
#include "uvforge/metrics.hpp"
#include "uvforge/nn.hpp"
#include "uvforge/render.hpp"

// Render-in-the-loop adversarial training: a toy generator mapping latents
// to UV maps, an image-space discriminator, silhouette-based background
// handling, and non-saturating losses with R1 gradient penalty.
namespace uvforge::gan {

using fit::AdamState;
using morphable::MorphableModel;
using morphable::ParamSet;
using nn::FeatureMap;
using render::RenderConfig;
using render::RenderOutput;

enum class MaskStrategy { MaskRealForeground, CompositeRealBackground };

struct TrainSample {
  Image3 image;        // real image (face over background)
  ParamSet params;     // fitted/ground-truth coefficients for that image
  Image1 silhouette;   // foreground coverage of the fitted mesh
};

struct GanConfig {
  int latent_dim = 32;
  int gen_channels = 16;
  int disc_channels = 8;   // first conv width; doubles per stage
  int uv_size = 32;        // generator output resolution (power of two, >= 4)
  int image_size = 64;
  int batch_size = 4;
  double lr = 2e-4;
  double beta1 = 0.0;      // network Adam moments per the GAN literature
  double beta2 = 0.99;
  double gamma_r1 = 10.0;
  MaskStrategy strategy = MaskStrategy::MaskRealForeground;
  uint64_t seed = 1;
  RenderConfig render;

  fit::FitConfig adam() const {
    fit::FitConfig cfg;
    cfg.lr = lr;
    cfg.beta1 = beta1;
    cfg.beta2 = beta2;
    cfg.steps = 1;
    return cfg;
  }
};

namespace detail {

inline void write_flat(VectorXd& dst, long& off, const MatrixXd& m) {
  dst.segment(off, m.size()) = Eigen::Map<const VectorXd>(m.data(), m.size());
  off += m.size();
}
inline void write_flat(VectorXd& dst, long& off, const VectorXd& v) {
  dst.segment(off, v.size()) = v;
  off += v.size();
}
inline void read_flat(const VectorXd& src, long& off, MatrixXd& m) {
  Eigen::Map<VectorXd>(m.data(), m.size()) = src.segment(off, m.size());
  off += m.size();
}
inline void read_flat(const VectorXd& src, long& off, VectorXd& v) {
  v = src.segment(off, v.size());
  off += v.size();
}

inline void mask_like(const FeatureMap& pre, FeatureMap& t) {
  for (long i = 0; i < pre.data.size(); ++i)
    if (pre.data[i] < 0.0) t.data[i] *= nn::kLeakySlope;
}

inline bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Generator: latent -> dense -> 4x4xC -> [upsample, conv3x3, lrelu]* ->
// conv1x1 -> logistic squashing into an H x W x 3 UV map in (0,1).
// ---------------------------------------------------------------------------

class Generator {
 public:
  struct Tape {
    VectorXd z;
    std::vector<FeatureMap> conv_in;   // post-upsample input of each stage conv
    std::vector<FeatureMap> conv_pre;  // pre-rectifier stage outputs
    FeatureMap rgb_in;                 // input of the 1x1 conv
    FeatureMap out;                    // post-logistic output
  };

  Generator() = default;
  Generator(int latent_dim, int channels, int out_size, uint64_t seed)
      : latent_dim_(latent_dim), channels_(channels), out_size_(out_size) {
    require(detail::is_power_of_two(out_size) && out_size >= 4, "Generator: out_size must be a power of two >= 4");
    n_stages_ = 0;
    for (int s = 4; s < out_size; s *= 2) ++n_stages_;
    Rng rng(splitmix64(seed) ^ 0x67656e31ULL);
    fc_.init(latent_dim, channels * 16, rng, std::sqrt(2.0 / latent_dim));
    convs_.resize(n_stages_);
    for (int s = 0; s < n_stages_; ++s)
      convs_[s].init(channels, channels, 3, 1, rng, std::sqrt(2.0 / (channels * 9.0)));
    to_rgb_.init(channels, 3, 1, 1, rng, std::sqrt(1.0 / channels));
  }

  int latent_dim() const { return latent_dim_; }
  int out_size() const { return out_size_; }
  int channels() const { return channels_; }

  uvtex::UVMap forward(const VectorXd& z, Tape* tape = nullptr) const {
    require(z.size() == latent_dim_, "Generator: latent dimension mismatch");
    FeatureMap f(channels_, 4, 4);
    f.data = fc_.forward(z);
    Tape local;
    Tape& t = tape ? *tape : local;
    t.z = z;
    t.conv_in.clear();
    t.conv_pre.clear();
    for (int s = 0; s < n_stages_; ++s) {
      FeatureMap up = nn::upsample2x(f);
      FeatureMap pre = convs_[s].forward(up);
      f = nn::leaky_relu(pre);
      t.conv_in.push_back(std::move(up));
      t.conv_pre.push_back(std::move(pre));
    }
    t.rgb_in = f;
    t.out = nn::sigmoid_map(to_rgb_.forward(f));
    return nn::to_image(t.out);
  }

  /// Accumulates parameter gradients and returns the latent cotangent.
  VectorXd backward(const Tape& tape, const Image3& map_cotangent) {
    FeatureMap cot = nn::sigmoid_backward(tape.out, nn::from_image(map_cotangent));
    cot = to_rgb_.backward(tape.rgb_in, cot);
    for (int s = n_stages_ - 1; s >= 0; --s) {
      cot = nn::leaky_relu_backward(tape.conv_pre[s], cot);
      cot = convs_[s].backward(tape.conv_in[s], cot);
      cot = nn::upsample2x_backward(cot);
    }
    return fc_.backward(tape.z, cot.data);
  }

  void zero_grad() {
    fc_.zero_grad();
    for (auto& c : convs_) c.zero_grad();
    to_rgb_.zero_grad();
  }

  long param_size() const {
    long n = fc_.param_size() + to_rgb_.param_size();
    for (const auto& c : convs_) n += c.param_size();
    return n;
  }

  VectorXd params_flat() const {
    VectorXd out(param_size());
    long off = 0;
    detail::write_flat(out, off, fc_.w);
    detail::write_flat(out, off, fc_.b);
    for (const auto& c : convs_) {
      detail::write_flat(out, off, c.w);
      detail::write_flat(out, off, c.b);
    }
    detail::write_flat(out, off, to_rgb_.w);
    detail::write_flat(out, off, to_rgb_.b);
    return out;
  }

  void set_params_flat(const VectorXd& flat) {
    require(flat.size() == param_size(), "Generator: flat parameter size mismatch");
    long off = 0;
    detail::read_flat(flat, off, fc_.w);
    detail::read_flat(flat, off, fc_.b);
    for (auto& c : convs_) {
      detail::read_flat(flat, off, c.w);
      detail::read_flat(flat, off, c.b);
    }
    detail::read_flat(flat, off, to_rgb_.w);
    detail::read_flat(flat, off, to_rgb_.b);
  }

  VectorXd grads_flat() const {
    VectorXd out(param_size());
    long off = 0;
    detail::write_flat(out, off, fc_.w_grad);
    detail::write_flat(out, off, fc_.b_grad);
    for (const auto& c : convs_) {
      detail::write_flat(out, off, c.w_grad);
      detail::write_flat(out, off, c.b_grad);
    }
    detail::write_flat(out, off, to_rgb_.w_grad);
    detail::write_flat(out, off, to_rgb_.b_grad);
    return out;
  }

 private:
  int latent_dim_ = 0, channels_ = 0, out_size_ = 0, n_stages_ = 0;
  nn::DenseLayer fc_;
  std::vector<nn::ConvLayer> convs_;
  nn::ConvLayer to_rgb_;
};

// ---------------------------------------------------------------------------
// Discriminator: image -> [conv3x3 stride 2, lrelu]* down to 4x4 -> dense ->
// scalar logit. With in_size == 4 it degenerates to a single linear layer,
// which the loss tests exploit.
// ---------------------------------------------------------------------------

class Discriminator {
 public:
  struct Tape {
    std::vector<FeatureMap> conv_in;
    std::vector<FeatureMap> conv_pre;
    VectorXd fc_in;
    double logit = 0.0;
  };

  Discriminator() = default;
  Discriminator(int in_size, int base_channels, uint64_t seed) : in_size_(in_size), base_channels_(base_channels) {
    require(detail::is_power_of_two(in_size) && in_size >= 4, "Discriminator: in_size must be a power of two >= 4");
    n_convs_ = 0;
    for (int s = in_size; s > 4; s /= 2) ++n_convs_;
    Rng rng(splitmix64(seed) ^ 0x64697363ULL);
    convs_.resize(n_convs_);
    int ch_in = 3;
    int ch_out = base_channels;
    for (int s = 0; s < n_convs_; ++s) {
      convs_[s].init(ch_in, ch_out, 3, 2, rng, std::sqrt(2.0 / (ch_in * 9.0)));
      ch_in = ch_out;
      ch_out *= 2;
    }
    fc_.init(ch_in * 16, 1, rng, std::sqrt(1.0 / (ch_in * 16.0)));
  }

  int in_size() const { return in_size_; }

  double forward(const Image3& image, Tape* tape = nullptr) const {
    require(image.width == in_size_ && image.height == in_size_, "Discriminator: image size mismatch");
    Tape local;
    Tape& t = tape ? *tape : local;
    t.conv_in.clear();
    t.conv_pre.clear();
    FeatureMap f = nn::from_image(image);
    for (int s = 0; s < n_convs_; ++s) {
      FeatureMap pre = convs_[s].forward(f);
      t.conv_in.push_back(std::move(f));
      f = nn::leaky_relu(pre);
      t.conv_pre.push_back(std::move(pre));
    }
    t.fc_in = f.data;
    const VectorXd logit = fc_.forward(t.fc_in);
    t.logit = logit[0];
    require(std::isfinite(t.logit), "Discriminator: non-finite logit");
    return t.logit;
  }

  /// Backprop from the logit. With accumulate_params the layer gradients are
  /// added to; either way the input-pixel cotangent is returned.
  FeatureMap backward(const Tape& tape, double logit_cot, bool accumulate_params) {
    VectorXd cvec(1);
    cvec[0] = logit_cot;
    VectorXd fcot = accumulate_params ? fc_.backward(tape.fc_in, cvec) : VectorXd(fc_.w.transpose() * cvec);
    FeatureMap cot;
    const int last_extent = 4;
    cot.channels = static_cast<int>(fcot.size()) / (last_extent * last_extent);
    cot.height = last_extent;
    cot.width = last_extent;
    cot.data = fcot;
    for (int s = n_convs_ - 1; s >= 0; --s) {
      cot = nn::leaky_relu_backward(tape.conv_pre[s], cot);
      if (accumulate_params)
        cot = convs_[s].backward(tape.conv_in[s], cot);
      else
        cot = backward_input_only(convs_[s], cot, tape.conv_in[s].height, tape.conv_in[s].width);
    }
    return cot;
  }

  /// Forward-over-reverse contribution of the R1 term: given the tangent
  /// direction on the input pixels (gamma-scaled input gradient), propagates
  /// it through the recorded masks and accumulates d(dot(tangent, grad_x D))
  /// into the weight gradients. Piecewise-linear layers make activation
  /// second derivatives vanish, so biases receive nothing.
  void r1_accumulate(const Tape& tape, const FeatureMap& input_tangent) {
    std::vector<FeatureMap> t_in(n_convs_);
    FeatureMap t = input_tangent;
    for (int s = 0; s < n_convs_; ++s) {
      t_in[s] = t;
      t = convs_[s].forward_tangent(t);
      detail::mask_like(tape.conv_pre[s], t);
    }
    const VectorXd t_fc = t.data;
    VectorXd one(1);
    one[0] = 1.0;
    VectorXd cot_vec = fc_.backward_tangent(t_fc, one);
    FeatureMap cot;
    cot.channels = static_cast<int>(cot_vec.size()) / 16;
    cot.height = 4;
    cot.width = 4;
    cot.data = cot_vec;
    for (int s = n_convs_ - 1; s >= 0; --s) {
      detail::mask_like(tape.conv_pre[s], cot);
      cot = convs_[s].backward(t_in[s], cot, /*with_bias=*/false);
    }
  }

  void zero_grad() {
    for (auto& c : convs_) c.zero_grad();
    fc_.zero_grad();
  }

  long param_size() const {
    long n = fc_.param_size();
    for (const auto& c : convs_) n += c.param_size();
    return n;
  }

  VectorXd params_flat() const {
    VectorXd out(param_size());
    long off = 0;
    for (const auto& c : convs_) {
      detail::write_flat(out, off, c.w);
      detail::write_flat(out, off, c.b);
    }
    detail::write_flat(out, off, fc_.w);
    detail::write_flat(out, off, fc_.b);
    return out;
  }

  void set_params_flat(const VectorXd& flat) {
    require(flat.size() == param_size(), "Discriminator: flat parameter size mismatch");
    long off = 0;
    for (auto& c : convs_) {
      detail::read_flat(flat, off, c.w);
      detail::read_flat(flat, off, c.b);
    }
    detail::read_flat(flat, off, fc_.w);
    detail::read_flat(flat, off, fc_.b);
  }

  VectorXd grads_flat() const {
    VectorXd out(param_size());
    long off = 0;
    for (const auto& c : convs_) {
      detail::write_flat(out, off, c.w_grad);
      detail::write_flat(out, off, c.b_grad);
    }
    detail::write_flat(out, off, fc_.w_grad);
    detail::write_flat(out, off, fc_.b_grad);
    return out;
  }

  /// Zeroes the final dense layer, making D identically zero.
  void zero_last_layer() {
    fc_.w.setZero();
    fc_.b.setZero();
  }

  nn::DenseLayer& final_layer() { return fc_; }

 private:
  static FeatureMap backward_input_only(const nn::ConvLayer& conv, const FeatureMap& out_cot, int in_h,
                                        int in_w) {
    // Input cotangent of a linear layer does not need the forward input.
    nn::ConvLayer tmp = conv;
    FeatureMap dummy(conv.in_ch, in_h, in_w);
    FeatureMap r = tmp.backward(dummy, out_cot, false);
    return r;
  }

  int in_size_ = 0, base_channels_ = 0, n_convs_ = 0;
  std::vector<nn::ConvLayer> convs_;
  nn::DenseLayer fc_;
};

// ---------------------------------------------------------------------------
// Masking strategies.
// ---------------------------------------------------------------------------

struct MaskedPair {
  Image3 real_for_d;
  Image3 fake_for_d;
};

/// MaskRealForeground blends both streams toward the flat background color
/// (reals with the sample silhouette, fakes with the rendered soft
/// silhouette). CompositeRealBackground leaves reals untouched and
/// composites the fake over the supplied background image.
inline MaskedPair apply_mask(MaskStrategy strategy, const Image3& real, const Image1& real_sil,
                             const RenderOutput& rendered, const Image3* background,
                             const Vector3d& bg_color) {
  require(real.width == rendered.image.width && real.height == rendered.image.height,
          "apply_mask: real/rendered dimension mismatch");
  MaskedPair out;
  out.fake_for_d = Image3(real.width, real.height, 0.0);
  if (strategy == MaskStrategy::MaskRealForeground) {
    out.real_for_d = Image3(real.width, real.height, 0.0);
    for (int y = 0; y < real.height; ++y)
      for (int x = 0; x < real.width; ++x) {
        const double sr = real_sil.at(y, x);
        const double sf = rendered.silhouette.at(y, x);
        for (int c = 0; c < 3; ++c) {
          out.real_for_d.at(y, x, c) = sr * real.at(y, x, c) + (1.0 - sr) * bg_color[c];
          out.fake_for_d.at(y, x, c) = sf * rendered.image.at(y, x, c) + (1.0 - sf) * bg_color[c];
        }
      }
  } else {
    require(background != nullptr, "apply_mask: CompositeRealBackground needs a background image");
    require(background->same_shape(real), "apply_mask: background dimension mismatch");
    out.real_for_d = real;
    for (int y = 0; y < real.height; ++y)
      for (int x = 0; x < real.width; ++x) {
        const double sf = rendered.silhouette.at(y, x);
        for (int c = 0; c < 3; ++c)
          out.fake_for_d.at(y, x, c) = sf * rendered.image.at(y, x, c) + (1.0 - sf) * background->at(y, x, c);
      }
  }
  return out;
}

struct MaskPullback {
  Image3 image_cot;
  Image1 sil_cot;
};

/// Pullback of the fake branch of apply_mask into the rendered image and
/// soft silhouette.
inline MaskPullback apply_mask_pullback(MaskStrategy strategy, const RenderOutput& rendered,
                                        const Image3* background, const Vector3d& bg_color,
                                        const Image3& fake_cot) {
  MaskPullback out;
  out.image_cot = Image3(fake_cot.width, fake_cot.height, 0.0);
  out.sil_cot = Image1(fake_cot.width, fake_cot.height, 0.0);
  for (int y = 0; y < fake_cot.height; ++y)
    for (int x = 0; x < fake_cot.width; ++x) {
      const double sf = rendered.silhouette.at(y, x);
      double sil_c = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double other =
            strategy == MaskStrategy::MaskRealForeground ? bg_color[c] : background->at(y, x, c);
        out.image_cot.at(y, x, c) = sf * fake_cot.at(y, x, c);
        sil_c += fake_cot.at(y, x, c) * (rendered.image.at(y, x, c) - other);
      }
      out.sil_cot.at(y, x) = sil_c;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Losses.
// ---------------------------------------------------------------------------

struct DLossParts {
  double total = 0.0;
  double real_term = 0.0;
  double fake_term = 0.0;
  double r1_term = 0.0;
};

/// softplus(-D(real)) + softplus(D(fake)) + (gamma/2) |grad_x D(real)|^2,
/// averaged over the batch. Pure evaluation.
inline DLossParts d_loss(Discriminator& d, const std::vector<Image3>& reals, const std::vector<Image3>& fakes,
                         double gamma_r1) {
  require(gamma_r1 >= 0.0, "d_loss: gamma_r1 must be >= 0");
  require(!reals.empty() && !fakes.empty(), "d_loss: empty batch");
  DLossParts parts;
  for (const Image3& r : reals) {
    Discriminator::Tape tape;
    const double logit = d.forward(r, &tape);
    parts.real_term += nn::softplus(-logit) / reals.size();
    if (gamma_r1 > 0.0) {
      const FeatureMap g = d.backward(tape, 1.0, /*accumulate_params=*/false);
      parts.r1_term += 0.5 * gamma_r1 * g.data.squaredNorm() / reals.size();
    }
  }
  for (const Image3& f : fakes) {
    parts.fake_term += nn::softplus(d.forward(f)) / fakes.size();
  }
  parts.total = parts.real_term + parts.fake_term + parts.r1_term;
  return parts;
}

/// d_loss plus gradient accumulation into the discriminator parameters.
inline DLossParts d_loss_backward(Discriminator& d, const std::vector<Image3>& reals,
                                  const std::vector<Image3>& fakes, double gamma_r1) {
  require(gamma_r1 >= 0.0, "d_loss_backward: gamma_r1 must be >= 0");
  require(!reals.empty() && !fakes.empty(), "d_loss_backward: empty batch");
  DLossParts parts;
  const double inv_b_real = 1.0 / reals.size();
  const double inv_b_fake = 1.0 / fakes.size();
  for (const Image3& r : reals) {
    Discriminator::Tape tape;
    const double logit = d.forward(r, &tape);
    parts.real_term += nn::softplus(-logit) * inv_b_real;
    d.backward(tape, -nn::sigmoid(-logit) * inv_b_real, /*accumulate_params=*/true);
    if (gamma_r1 > 0.0) {
      FeatureMap g = d.backward(tape, 1.0, /*accumulate_params=*/false);
      parts.r1_term += 0.5 * gamma_r1 * g.data.squaredNorm() * inv_b_real;
      for (long i = 0; i < g.data.size(); ++i) g.data[i] *= gamma_r1 * inv_b_real;
      d.r1_accumulate(tape, g);
    }
  }
  for (const Image3& f : fakes) {
    Discriminator::Tape tape;
    const double logit = d.forward(f, &tape);
    parts.fake_term += nn::softplus(logit) * inv_b_fake;
    d.backward(tape, nn::sigmoid(logit) * inv_b_fake, /*accumulate_params=*/true);
  }
  parts.total = parts.real_term + parts.fake_term + parts.r1_term;
  return parts;
}

/// softplus(-D(fake)), averaged over the batch. Pure evaluation.
inline double g_loss(Discriminator& d, const std::vector<Image3>& fakes) {
  require(!fakes.empty(), "g_loss: empty batch");
  double loss = 0.0;
  for (const Image3& f : fakes) loss += nn::softplus(-d.forward(f)) / fakes.size();
  return loss;
}

// ---------------------------------------------------------------------------
// Training step.
// ---------------------------------------------------------------------------

struct TrainStepResult {
  double d_loss = 0.0;
  double g_loss = 0.0;
  double r1_term = 0.0;
};

/// One alternating update: a discriminator step on masked reals and rendered
/// fakes (with R1), then a generator step through the frozen-D loss with
/// gradients flowing through discriminator, masking, renderer, sampler, and
/// generator.
inline TrainStepResult train_step(Generator& g, Discriminator& d, const MorphableModel& model,
                                  const std::vector<const TrainSample*>& batch, const MatrixXd& z_batch,
                                  AdamState& g_state, AdamState& d_state, const GanConfig& cfg) {
  require(!batch.empty(), "train_step: empty batch");
  require(z_batch.rows() == static_cast<long>(batch.size()) && z_batch.cols() == g.latent_dim(),
          "train_step: z batch shape mismatch");
  const int b = static_cast<int>(batch.size());
  const Vector3d bg = cfg.render.background;

  std::vector<Generator::Tape> g_tapes(b);
  std::vector<render::FormImageTape> r_tapes(b);
  std::vector<uvtex::UVMap> maps(b);
  std::vector<RenderOutput> renders(b);
  std::vector<Image3> reals(b), fakes(b);

  for (int i = 0; i < b; ++i) {
    const TrainSample& s = *batch[i];
    maps[i] = g.forward(z_batch.row(i).transpose(), &g_tapes[i]);
    renders[i] = render::form_image(model, maps[i], s.params, cfg.image_size, cfg.image_size, cfg.render,
                                    &r_tapes[i]);
    const Image3* background = cfg.strategy == MaskStrategy::CompositeRealBackground ? &s.image : nullptr;
    MaskedPair pair = apply_mask(cfg.strategy, s.image, s.silhouette, renders[i], background, bg);
    reals[i] = std::move(pair.real_for_d);
    fakes[i] = std::move(pair.fake_for_d);
  }

  TrainStepResult result;

  d.zero_grad();
  const DLossParts parts = d_loss_backward(d, reals, fakes, cfg.gamma_r1);
  result.d_loss = parts.total;
  result.r1_term = parts.r1_term;
  d.set_params_flat(fit::adam_step(d.params_flat(), d.grads_flat(), d_state, cfg.adam()));

  g.zero_grad();
  double gl = 0.0;
  for (int i = 0; i < b; ++i) {
    const TrainSample& s = *batch[i];
    Discriminator::Tape tape;
    const double logit = d.forward(fakes[i], &tape);
    gl += nn::softplus(-logit) / b;
    const FeatureMap fake_cot_map = d.backward(tape, -nn::sigmoid(-logit) / b, /*accumulate_params=*/false);
    const Image3* background = cfg.strategy == MaskStrategy::CompositeRealBackground ? &s.image : nullptr;
    const MaskPullback mp =
        apply_mask_pullback(cfg.strategy, renders[i], background, bg, nn::to_image(fake_cot_map));
    const render::FormImageGrads rg =
        render::render_pullback(model, s.params, renders[i], r_tapes[i], mp.image_cot, mp.sil_cot, cfg.render);
    const Image3 map_cot = uvtex::sample_all_pullback_map(maps[i], model.uv_coords, rg.vertex_colors);
    g.backward(g_tapes[i], map_cot);
  }
  result.g_loss = gl;
  g.set_params_flat(fit::adam_step(g.params_flat(), g.grads_flat(), g_state, cfg.adam()));
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation proxy and training driver.
// ---------------------------------------------------------------------------

/// FID between masked real features and masked rendered-fake features using
/// the downsampled-pixel extractor. Fakes are rendered with the parameter
/// sets of the first n samples (cycled) and masked with their own rendered
/// soft silhouette.
inline double masked_fid_proxy(const Generator& g, const MorphableModel& model,
                               const std::vector<TrainSample>& samples, const GanConfig& cfg, int n_eval,
                               uint64_t eval_seed) {
  require(samples.size() >= 2, "masked_fid_proxy: need at least 2 samples");
  const metrics::FeatureExtractor fx = metrics::make_downsample_extractor(8);
  const int n = std::min<int>(n_eval, 4 * static_cast<int>(samples.size()));
  const Vector3d bg = cfg.render.background;

  MatrixXd real_features(static_cast<int>(samples.size()), fx.dim);
  for (size_t i = 0; i < samples.size(); ++i)
    real_features.row(static_cast<int>(i)) =
        metrics::masked_features(fx, samples[i].image, samples[i].silhouette, bg).transpose();

  Rng rng(eval_seed);
  MatrixXd fake_features(n, fx.dim);
  for (int i = 0; i < n; ++i) {
    const VectorXd z = rng.gaussian_vector(g.latent_dim());
    const uvtex::UVMap map = g.forward(z);
    const TrainSample& s = samples[i % samples.size()];
    const RenderOutput out = render::form_image(model, map, s.params, cfg.image_size, cfg.image_size, cfg.render);
    fake_features.row(i) = metrics::masked_features(fx, out.image, out.silhouette, bg).transpose();
  }
  return metrics::fid(metrics::gaussian_stats(real_features), metrics::gaussian_stats(fake_features));
}

struct TrainLogRow {
  int step = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;
  double r1_term = 0.0;
  double masked_fid = std::numeric_limits<double>::quiet_NaN();  // NaN when not measured
};

/// Runs `steps` alternating updates with per-step seed-derived RNG streams:
/// batch indices then latents are drawn from Rng::stream(seed, step).
/// Logs the masked-FID proxy every eval_every steps (and at the last step)
/// when eval_every > 0.
inline std::vector<TrainLogRow> run_training(Generator& g, Discriminator& d, const MorphableModel& model,
                                             const std::vector<TrainSample>& dataset, const GanConfig& cfg,
                                             int steps, int eval_every = 0, int n_eval = 128) {
  require(!dataset.empty(), "run_training: empty dataset");
  AdamState g_state(static_cast<int>(g.param_size()));
  AdamState d_state(static_cast<int>(d.param_size()));
  std::vector<TrainLogRow> log;
  log.reserve(steps);
  for (int step = 0; step < steps; ++step) {
    Rng rng = Rng::stream(cfg.seed, static_cast<uint64_t>(step));
    std::vector<const TrainSample*> batch(cfg.batch_size);
    for (int i = 0; i < cfg.batch_size; ++i)
      batch[i] = &dataset[rng.uniform_int(0, static_cast<int>(dataset.size()) - 1)];
    MatrixXd z(cfg.batch_size, g.latent_dim());
    for (int i = 0; i < cfg.batch_size; ++i) z.row(i) = rng.gaussian_vector(g.latent_dim()).transpose();

    const TrainStepResult r = train_step(g, d, model, batch, z, g_state, d_state, cfg);
    TrainLogRow row;
    row.step = step;
    row.d_loss = r.d_loss;
    row.g_loss = r.g_loss;
    row.r1_term = r.r1_term;
    if (eval_every > 0 && ((step + 1) % eval_every == 0 || step + 1 == steps))
      row.masked_fid = masked_fid_proxy(g, model, dataset, cfg, n_eval, splitmix64(cfg.seed) + 17);
    log.push_back(row);
  }
  return log;
}

/// Adapts a generator latent to the fixed-geometry texture fitting loop:
/// colors(z) samples the generated UV map at the model's UV coordinates, and
/// the pullback routes vertex-color cotangents through the sampler and the
/// generator back to z. Uses the generator's gradient buffers as scratch.
inline fit::VertexColorSource make_generator_color_source(Generator& g, const MorphableModel& model) {
  fit::VertexColorSource src;
  src.dim = g.latent_dim();
  src.colors = [&g, &model](const VectorXd& z) {
    return uvtex::sample_all(g.forward(z), model.uv_coords);
  };
  src.pullback = [&g, &model](const VectorXd& z, const MatrixXd& color_cot) {
    Generator::Tape tape;
    const uvtex::UVMap map = g.forward(z, &tape);
    const Image3 map_cot = uvtex::sample_all_pullback_map(map, model.uv_coords, color_cot);
    g.zero_grad();
    VectorXd z_cot = g.backward(tape, map_cot);
    g.zero_grad();
    return z_cot;
  };
  return src;
}

}  // namespace uvforge::gan
