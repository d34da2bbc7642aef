#pragma once

#include "uvforge/core.hpp"

// Minimal deterministic layers for the toy networks: dense, conv (im2col +
// GEMM), nearest upsample, leaky-rectifier, logistic. Every layer exposes an
// explicit backward so gradients can flow to both parameters and inputs.
namespace uvforge::nn {

/// Channel-major feature map, index ((c * H) + y) * W + x.
struct FeatureMap {
  int channels = 0, height = 0, width = 0;
  VectorXd data;

  FeatureMap() = default;
  FeatureMap(int c, int h, int w) : channels(c), height(h), width(w), data(VectorXd::Zero(c * h * w)) {}

  double& at(int c, int y, int x) { return data[(static_cast<long>(c) * height + y) * width + x]; }
  double at(int c, int y, int x) const { return data[(static_cast<long>(c) * height + y) * width + x]; }
  long size() const { return data.size(); }
};

inline FeatureMap from_image(const Image3& img) {
  FeatureMap f(3, img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) f.at(c, y, x) = img.at(y, x, c);
  return f;
}

inline Image3 to_image(const FeatureMap& f) {
  require(f.channels == 3, "to_image: need 3 channels");
  Image3 img(f.width, f.height, 0.0);
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = f.at(c, y, x);
  return img;
}

// ---------------------------------------------------------------------------
// Layers.
// ---------------------------------------------------------------------------

struct DenseLayer {
  MatrixXd w;  // out x in
  VectorXd b;
  MatrixXd w_grad;
  VectorXd b_grad;

  void init(int in, int out, Rng& rng, double scale) {
    w.resize(out, in);
    for (int i = 0; i < out; ++i)
      for (int j = 0; j < in; ++j) w(i, j) = scale * rng.gaussian();
    b = VectorXd::Zero(out);
    zero_grad();
  }

  void zero_grad() {
    w_grad = MatrixXd::Zero(w.rows(), w.cols());
    b_grad = VectorXd::Zero(b.size());
  }

  VectorXd forward(const VectorXd& x) const { return w * x + b; }

  VectorXd backward(const VectorXd& x, const VectorXd& out_cot) {
    w_grad += out_cot * x.transpose();
    b_grad += out_cot;
    return w.transpose() * out_cot;
  }

  // Tangent (bias-free) variants for the forward-over-reverse R1 pass: the
  // tangent of w x + b is w xdot, so biases neither propagate nor receive
  // gradient here.
  VectorXd forward_tangent(const VectorXd& x) const { return w * x; }

  VectorXd backward_tangent(const VectorXd& x, const VectorXd& out_cot) {
    w_grad += out_cot * x.transpose();
    return w.transpose() * out_cot;
  }

  long param_size() const { return w.size() + b.size(); }
};

struct ConvLayer {
  int in_ch = 0, out_ch = 0, ksize = 3, stride = 1;
  MatrixXd w;  // out_ch x (in_ch * k * k)
  VectorXd b;
  MatrixXd w_grad;
  VectorXd b_grad;

  void init(int in_channels, int out_channels, int kernel, int step, Rng& rng, double scale) {
    in_ch = in_channels;
    out_ch = out_channels;
    ksize = kernel;
    stride = step;
    w.resize(out_ch, in_ch * ksize * ksize);
    for (int i = 0; i < w.rows(); ++i)
      for (int j = 0; j < w.cols(); ++j) w(i, j) = scale * rng.gaussian();
    b = VectorXd::Zero(out_ch);
    zero_grad();
  }

  void zero_grad() {
    w_grad = MatrixXd::Zero(w.rows(), w.cols());
    b_grad = VectorXd::Zero(b.size());
  }

  int pad() const { return ksize / 2; }
  int out_extent(int in) const { return (in + 2 * pad() - ksize) / stride + 1; }

  MatrixXd im2col(const FeatureMap& in) const {
    const int ho = out_extent(in.height);
    const int wo = out_extent(in.width);
    MatrixXd col = MatrixXd::Zero(in_ch * ksize * ksize, static_cast<long>(ho) * wo);
    for (int c = 0; c < in_ch; ++c)
      for (int ky = 0; ky < ksize; ++ky)
        for (int kx = 0; kx < ksize; ++kx) {
          const int r = (c * ksize + ky) * ksize + kx;
          for (int oy = 0; oy < ho; ++oy) {
            const int y = oy * stride + ky - pad();
            if (y < 0 || y >= in.height) continue;
            for (int ox = 0; ox < wo; ++ox) {
              const int x = ox * stride + kx - pad();
              if (x < 0 || x >= in.width) continue;
              col(r, static_cast<long>(oy) * wo + ox) = in.at(c, y, x);
            }
          }
        }
    return col;
  }

  FeatureMap forward(const FeatureMap& in) const {
    require(in.channels == in_ch, "ConvLayer: channel mismatch");
    const int ho = out_extent(in.height);
    const int wo = out_extent(in.width);
    const MatrixXd col = im2col(in);
    MatrixXd y = w * col;
    y.colwise() += b;
    FeatureMap out(out_ch, ho, wo);
    for (int c = 0; c < out_ch; ++c)
      for (long i = 0; i < static_cast<long>(ho) * wo; ++i) out.data[c * static_cast<long>(ho) * wo + i] = y(c, i);
    return out;
  }

  FeatureMap forward_tangent(const FeatureMap& in) const {
    const int ho = out_extent(in.height);
    const int wo = out_extent(in.width);
    const MatrixXd y = w * im2col(in);
    FeatureMap out(out_ch, ho, wo);
    for (int c = 0; c < out_ch; ++c)
      for (long i = 0; i < static_cast<long>(ho) * wo; ++i) out.data[c * static_cast<long>(ho) * wo + i] = y(c, i);
    return out;
  }

  FeatureMap backward(const FeatureMap& in, const FeatureMap& out_cot, bool with_bias = true) {
    const int ho = out_cot.height;
    const int wo = out_cot.width;
    MatrixXd ycot(out_ch, static_cast<long>(ho) * wo);
    for (int c = 0; c < out_ch; ++c)
      for (long i = 0; i < static_cast<long>(ho) * wo; ++i) ycot(c, i) = out_cot.data[c * static_cast<long>(ho) * wo + i];
    const MatrixXd col = im2col(in);
    w_grad += ycot * col.transpose();
    if (with_bias) b_grad += ycot.rowwise().sum();
    const MatrixXd col_cot = w.transpose() * ycot;
    FeatureMap in_cot(in.channels, in.height, in.width);
    for (int c = 0; c < in_ch; ++c)
      for (int ky = 0; ky < ksize; ++ky)
        for (int kx = 0; kx < ksize; ++kx) {
          const int r = (c * ksize + ky) * ksize + kx;
          for (int oy = 0; oy < ho; ++oy) {
            const int y = oy * stride + ky - pad();
            if (y < 0 || y >= in.height) continue;
            for (int ox = 0; ox < wo; ++ox) {
              const int x = ox * stride + kx - pad();
              if (x < 0 || x >= in.width) continue;
              in_cot.at(c, y, x) += col_cot(r, static_cast<long>(oy) * wo + ox);
            }
          }
        }
    return in_cot;
  }

  long param_size() const { return w.size() + b.size(); }
};

// ---------------------------------------------------------------------------
// Parameter-free ops.
// ---------------------------------------------------------------------------

inline FeatureMap upsample2x(const FeatureMap& in) {
  FeatureMap out(in.channels, in.height * 2, in.width * 2);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x) out.at(c, y, x) = in.at(c, y / 2, x / 2);
  return out;
}

inline FeatureMap upsample2x_backward(const FeatureMap& out_cot) {
  FeatureMap in_cot(out_cot.channels, out_cot.height / 2, out_cot.width / 2);
  for (int c = 0; c < out_cot.channels; ++c)
    for (int y = 0; y < out_cot.height; ++y)
      for (int x = 0; x < out_cot.width; ++x) in_cot.at(c, y / 2, x / 2) += out_cot.at(c, y, x);
  return in_cot;
}

constexpr double kLeakySlope = 0.2;

inline FeatureMap leaky_relu(const FeatureMap& in) {
  FeatureMap out = in;
  for (long i = 0; i < out.data.size(); ++i)
    if (out.data[i] < 0.0) out.data[i] *= kLeakySlope;
  return out;
}

inline VectorXd leaky_relu_vec(const VectorXd& in) {
  VectorXd out = in;
  for (long i = 0; i < out.size(); ++i)
    if (out[i] < 0.0) out[i] *= kLeakySlope;
  return out;
}

/// Backward through the rectifier given the pre-activation values.
inline FeatureMap leaky_relu_backward(const FeatureMap& pre, const FeatureMap& out_cot) {
  FeatureMap in_cot = out_cot;
  for (long i = 0; i < pre.data.size(); ++i)
    if (pre.data[i] < 0.0) in_cot.data[i] *= kLeakySlope;
  return in_cot;
}

inline VectorXd leaky_relu_backward_vec(const VectorXd& pre, const VectorXd& out_cot) {
  VectorXd in_cot = out_cot;
  for (long i = 0; i < pre.size(); ++i)
    if (pre[i] < 0.0) in_cot[i] *= kLeakySlope;
  return in_cot;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline FeatureMap sigmoid_map(const FeatureMap& in) {
  FeatureMap out = in;
  for (long i = 0; i < out.data.size(); ++i) out.data[i] = sigmoid(out.data[i]);
  return out;
}

/// Backward through the logistic given its output values.
inline FeatureMap sigmoid_backward(const FeatureMap& out, const FeatureMap& out_cot) {
  FeatureMap in_cot = out_cot;
  for (long i = 0; i < out.data.size(); ++i) in_cot.data[i] *= out.data[i] * (1.0 - out.data[i]);
  return in_cot;
}

inline double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace uvforge::nn
