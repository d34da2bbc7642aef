#include "uvforge/grad.hpp"

#include "helpers.hpp"

using namespace uvforge;
using Catch::Approx;

TEST_CASE("gradcheck on a constant function reports zero error") {
  auto f = [](const VectorXd&) { return 2.5; };
  auto g = [](const VectorXd& x) { return VectorXd(VectorXd::Zero(x.size())); };
  const auto report = grad::gradcheck(f, g, VectorXd::Random(5));
  CHECK(report.max_abs_error == 0.0);
  CHECK(report.max_rel_error == 0.0);
}

TEST_CASE("gradcheck on x*x at x=3 matches the exact central difference") {
  auto f = [](const VectorXd& x) { return x[0] * x[0]; };
  auto g = [](const VectorXd& x) { return VectorXd(2.0 * x); };
  VectorXd x(1);
  x[0] = 3.0;
  const auto report = grad::gradcheck(f, g, x, 1e-4);
  CHECK(report.max_abs_error < 1e-6);
}

TEST_CASE("gradcheck flags a deliberately wrong gradient") {
  auto f = [](const VectorXd& x) { return x.squaredNorm(); };
  auto g = [](const VectorXd& x) { return VectorXd(2.0 * x + VectorXd::Ones(x.size())); };
  Rng rng(3);
  const auto report = grad::gradcheck(f, g, rng.gaussian_vector(4));
  CHECK(report.max_abs_error > 0.5);
  CHECK(report.worst_index >= 0);
}

TEST_CASE("gradcheck rejects non-finite values naming the index") {
  auto f = [](const VectorXd& x) { return x[0]; };
  auto bad_grad = [](const VectorXd& x) {
    VectorXd g = VectorXd::Zero(x.size());
    g[2] = std::numeric_limits<double>::quiet_NaN();
    return g;
  };
  VectorXd x = VectorXd::Ones(4);
  CHECK_THROWS_WITH(grad::gradcheck(f, bad_grad, x), Catch::Matchers::ContainsSubstring("index 2"));
  CHECK_THROWS(grad::gradcheck(f, bad_grad, x, 0.0));
}

TEST_CASE("pullback linearity holds to machine precision for a linear op") {
  Rng rng(7);
  const MatrixXd a = testutil::random_matrix(rng, 4, 6);
  grad::DifferentiableOp op;
  op.forward = [a](const VectorXd& x) { return VectorXd(a * x); };
  op.pullback = [a](const VectorXd&, const VectorXd& cot) { return VectorXd(a.transpose() * cot); };
  const VectorXd x = rng.gaussian_vector(6);
  for (int trial = 0; trial < 10; ++trial) {
    const VectorXd u = rng.gaussian_vector(4);
    const VectorXd v = rng.gaussian_vector(4);
    const double err = grad::pullback_linearity_error(op, x, u, v, rng.uniform(-2, 2), rng.uniform(-2, 2));
    CHECK(err < 1e-12);
  }
  // zero cotangent maps to zero
  CHECK(op.pullback(x, VectorXd::Zero(4)).norm() == 0.0);
}

TEST_CASE("gradcheck over a DifferentiableOp with a cotangent") {
  Rng rng(9);
  const MatrixXd a = testutil::random_matrix(rng, 3, 5);
  grad::DifferentiableOp op;
  op.forward = [a](const VectorXd& x) { return VectorXd((a * x).array().sin().matrix()); };
  op.pullback = [a](const VectorXd& x, const VectorXd& cot) {
    const VectorXd y = a * x;
    return VectorXd(a.transpose() * (y.array().cos() * cot.array()).matrix());
  };
  const auto report = grad::gradcheck(op, rng.gaussian_vector(5), rng.gaussian_vector(3));
  CHECK(report.max_rel_error < 1e-6);
}
