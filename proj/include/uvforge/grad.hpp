#pragma once

#include <functional>

#include "uvforge/core.hpp"

// Differentiation contract. Every differentiable operation in this library
// is reverse-mode: it ships an analytic vector-Jacobian product (pullback)
// evaluated at the recorded forward point. Pullbacks must be linear in the
// cotangent and map the zero cotangent to zero. gradcheck compares the
// analytic gradient of a scalar function against central differences.
namespace uvforge::grad {

/// A vector->vector operation bundled with its pullback. Mostly used by
/// tests to exercise the contract; concrete modules expose typed functions.
struct DifferentiableOp {
  // input vector -> output vector
  std::function<VectorXd(const VectorXd&)> forward;
  // (input, output cotangent) -> input cotangent
  std::function<VectorXd(const VectorXd&, const VectorXd&)> pullback;
};

struct GradCheckReport {
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  int worst_index = -1;
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

/// Central-difference check of an analytic gradient of a scalar function.
/// grad_f(x) is the pullback of f with cotangent 1. eps defaults to 1e-4,
/// suited to inputs normalized to order 1.
inline GradCheckReport gradcheck(const std::function<double(const VectorXd&)>& f,
                                 const std::function<VectorXd(const VectorXd&)>& grad_f,
                                 const VectorXd& x, double eps = 1e-4) {
  require(eps > 0.0, "gradcheck: eps must be > 0");
  const double fx = f(x);
  require(std::isfinite(fx), "gradcheck: f(x) is not finite");
  const VectorXd g = grad_f(x);
  require(g.size() == x.size(), "gradcheck: gradient size mismatch");
  for (int i = 0; i < g.size(); ++i)
    require(std::isfinite(g[i]), "gradcheck: non-finite gradient at index " + std::to_string(i));

  const int n = static_cast<int>(x.size());
  std::vector<double> numeric(n);
  parallel_for(0, n, [&](int i) {
    VectorXd xp = x;
    VectorXd xm = x;
    xp[i] += eps;
    xm[i] -= eps;
    numeric[i] = (f(xp) - f(xm)) / (2.0 * eps);
  });

  GradCheckReport report;
  for (int i = 0; i < n; ++i) {
    require(std::isfinite(numeric[i]), "gradcheck: non-finite central difference at index " + std::to_string(i));
    const double abs_err = std::abs(g[i] - numeric[i]);
    const double rel_err = relative_error(g[i], numeric[i]);
    if (abs_err > report.max_abs_error) report.max_abs_error = abs_err;
    if (rel_err > report.max_rel_error) {
      report.max_rel_error = rel_err;
      report.worst_index = i;
    }
  }
  if (report.worst_index < 0 && n > 0) report.worst_index = 0;
  return report;
}

/// gradcheck for an op with a fixed scalar-valued composition: checks the
/// pullback of `op` against central differences of cot . forward(x).
inline GradCheckReport gradcheck(const DifferentiableOp& op, const VectorXd& x, const VectorXd& cotangent,
                                 double eps = 1e-4) {
  auto f = [&](const VectorXd& p) { return cotangent.dot(op.forward(p)); };
  auto grad_f = [&](const VectorXd& p) { return op.pullback(p, cotangent); };
  return gradcheck(f, grad_f, x, eps);
}

/// Max deviation from pullback linearity at (x; u, v, a, b):
/// |pullback(a u + b v) - a pullback(u) - b pullback(v)|_inf.
inline double pullback_linearity_error(const DifferentiableOp& op, const VectorXd& x, const VectorXd& u,
                                       const VectorXd& v, double a, double b) {
  const VectorXd lhs = op.pullback(x, a * u + b * v);
  const VectorXd rhs = a * op.pullback(x, u) + b * op.pullback(x, v);
  return (lhs - rhs).cwiseAbs().maxCoeff();
}

}  // namespace uvforge::grad
