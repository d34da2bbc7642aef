#pragma once

#include "uvforge/core.hpp"

// Latent-space tooling: linear/bilinear interpolation and SVM-hyperplane
// attribute manipulation.
namespace uvforge::latent {

struct Hyperplane {
  VectorXd normal;
  double bias = 0.0;

  double score(const VectorXd& x) const { return normal.dot(x) + bias; }
};

struct LabeledLatents {
  MatrixXd latents;        // N x d
  std::vector<int> labels;  // values in {-1, +1}
};

inline VectorXd lerp(const VectorXd& a, const VectorXd& b, double t) {
  require(a.size() == b.size(), "lerp: dimension mismatch");
  require(t >= 0.0 && t <= 1.0, "lerp: t must lie in [0,1]");
  return (1.0 - t) * a + t * b;
}

inline VectorXd bilerp(const VectorXd& tl, const VectorXd& tr, const VectorXd& bl, const VectorXd& br,
                       double u, double v) {
  return lerp(lerp(tl, tr, u), lerp(bl, br, u), v);
}

/// Full-batch subgradient descent on lambda/2 |w|^2 + mean hinge loss with
/// step size 1/(lambda t). The mean makes the trajectory invariant to
/// duplicating the dataset; the loop itself is deterministic, so the seed is
/// accepted only for interface stability.
inline Hyperplane fit_svm(const LabeledLatents& data, double lambda = 1e-2, int steps = 10000,
                          uint64_t seed = 0) {
  (void)seed;
  require(lambda > 0.0, "fit_svm: lambda must be > 0");
  require(steps >= 1, "fit_svm: steps must be >= 1");
  const int n = static_cast<int>(data.latents.rows());
  require(static_cast<int>(data.labels.size()) == n, "fit_svm: label count mismatch");
  bool has_pos = false, has_neg = false;
  for (int y : data.labels) {
    require(y == 1 || y == -1, "fit_svm: labels must be +1 or -1");
    has_pos |= y == 1;
    has_neg |= y == -1;
  }
  require(has_pos && has_neg, "fit_svm: both classes must be present");

  const int d = static_cast<int>(data.latents.cols());
  VectorXd w = VectorXd::Zero(d);
  double b = 0.0;
  for (int t = 1; t <= steps; ++t) {
    VectorXd grad_w = lambda * w;
    double grad_b = 0.0;
    for (int i = 0; i < n; ++i) {
      const double margin = data.labels[i] * (w.dot(data.latents.row(i).transpose()) + b);
      if (margin < 1.0) {
        grad_w -= data.labels[i] * data.latents.row(i).transpose() / n;
        grad_b -= static_cast<double>(data.labels[i]) / n;
      }
    }
    const double eta = 1.0 / (lambda * t);
    w -= eta * grad_w;
    b -= eta * grad_b;
  }
  Hyperplane h;
  h.normal = w;
  h.bias = b;
  require(h.normal.norm() > 0.0, "fit_svm: degenerate zero normal");
  return h;
}

/// Shift along the unit normal of the hyperplane.
inline VectorXd edit(const VectorXd& w, const Hyperplane& h, double alpha) {
  require(w.size() == h.normal.size(), "edit: dimension mismatch");
  const double norm = h.normal.norm();
  require(norm > 0.0, "edit: zero normal");
  return w + alpha * (h.normal / norm);
}

}  // namespace uvforge::latent
