#include "bslq/instances.hpp"

#include <cmath>

namespace bslq {

namespace {

MatrixXd or_zero(const MatrixXd& M, Eigen::Index r, Eigen::Index c) {
  return M.size() == 0 ? MatrixXd::Zero(r, c) : M;
}

MatrixXd scalar(double x) { return MatrixXd::Constant(1, 1, x); }

}  // namespace

ProblemData constant_problem(int n, int m, double T, int n_steps,
                             const ConstantCoefficients& c,
                             Interpolation interp) {
  const TimeGrid g(T, n_steps);
  auto path = [&](const MatrixXd& M, Eigen::Index r, Eigen::Index cols) {
    return CoefficientPath::constant(g, or_zero(M, r, cols), interp);
  };
  ProblemData p(n, m, g, interp, path(c.A, n, n), path(c.B, n, m),
                path(c.C, n, n), or_zero(c.G, n, n), path(c.Q, n, n),
                path(c.S1, n, n), path(c.S2, m, n), path(c.R11, n, n),
                path(c.R12, n, m), path(c.R22, m, m));
  p.symmetrize();
  return p;
}

ProblemData maximin_instance(double a, int n_steps) {
  ConstantCoefficients c;
  c.A = scalar(1.0);
  c.B = scalar(-1.0);
  c.C = scalar(-(a * a + 1.0) / (a * a));
  c.Q = scalar(1.0);
  c.R11 = scalar(-1.0 / (a * a));
  c.R22 = scalar(a * a);
  return constant_problem(1, 1, 1.0, n_steps, c);
}

ProblemData scalar_instance(int n_steps, double T) {
  ConstantCoefficients c;
  c.B = scalar(1.0);
  c.R22 = scalar(1.0);
  return constant_problem(1, 1, T, n_steps, c);
}

ProblemData zero_instance(int n, int m, int n_steps, double r22) {
  ConstantCoefficients c;
  c.R22 = r22 * MatrixXd::Identity(m, m);
  return constant_problem(n, m, 1.0, n_steps, c);
}

ProblemData general_instance(int n_steps) {
  ConstantCoefficients c;
  c.A = scalar(0.3);
  c.B = scalar(1.0);
  c.C = scalar(0.2);
  c.G = scalar(0.5);
  c.Q = scalar(0.4);
  c.S1 = scalar(0.1);
  c.S2 = scalar(0.2);
  c.R11 = scalar(0.5);
  c.R12 = scalar(0.3);
  c.R22 = scalar(1.0);
  return constant_problem(1, 1, 1.0, n_steps, c);
}

ProblemData indefinite_2d_instance(int n_steps) {
  const TimeGrid g(1.0, n_steps);
  const auto interp = Interpolation::kLinear;
  auto A = CoefficientPath::sample(g, [](double t) {
    MatrixXd M(2, 2);
    M << 0.2, 0.5 * std::sin(t), -0.3, 0.1 * t;
    return M;
  });
  MatrixXd B(2, 1);
  B << 1.0, 0.5;
  MatrixXd C(2, 2);
  C << -0.6, 0.1, 0.0, -0.4;
  MatrixXd G(2, 2);
  G << 0.2, 0.05, 0.05, -0.1;
  auto Q = CoefficientPath::sample(g, [](double t) {
    MatrixXd M(2, 2);
    M << 1.0, 0.1, 0.1, -0.2 + 0.1 * t;
    return M;
  });
  MatrixXd S1(2, 2);
  S1 << 0.1, 0.0, 0.05, 0.1;
  MatrixXd S2(1, 2);
  S2 << 0.1, -0.1;
  auto R11 = CoefficientPath::sample(g, [](double t) {
    MatrixXd M(2, 2);
    M << -0.3 + 0.1 * t, 0.05, 0.05, 0.5;
    return M;
  });
  MatrixXd R12(2, 1);
  R12 << 0.1, 0.0;
  auto R22 = CoefficientPath::sample(g, [](double t) {
    return MatrixXd::Constant(1, 1, 2.0 + 0.5 * std::cos(3.0 * t));
  });
  ProblemData p(2, 1, g, interp, A, CoefficientPath::constant(g, B),
                CoefficientPath::constant(g, C), G, Q,
                CoefficientPath::constant(g, S1),
                CoefficientPath::constant(g, S2), R11,
                CoefficientPath::constant(g, R12), R22);
  p.symmetrize();
  return p;
}

ProblemData necessity_instance(int n_steps) {
  return zero_instance(1, 1, n_steps, -1.0);
}

}  // namespace bslq
