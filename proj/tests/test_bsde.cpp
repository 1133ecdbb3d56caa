#include <gtest/gtest.h>

#include <cmath>

#include "bslq/bsde.hpp"
#include "bslq/errors.hpp"
#include "bslq/instances.hpp"

using namespace bslq;

namespace {

MatrixXd m1(double x) { return MatrixXd::Constant(1, 1, x); }
VectorXd v1(double x) { return VectorXd::Constant(1, x); }

struct Solved {
  ReducedProblem rp;
  SigmaSolution sigma;
};

Solved solved(const ProblemData& p) {
  auto rp = reduce_problem(p);
  auto s = solve_sigma(rp);
  return {rp, s};
}

}  // namespace

TEST(AffineBsde, ZeroTerminal) {
  auto s = solved(maximin_instance(2.0, 50));
  auto sol = solve_affine_terminal(s.rp, s.sigma, v1(0), v1(0));
  for (int k = 0; k <= 50; ++k) {
    EXPECT_EQ(sol.m[k].norm(), 0.0);
    EXPECT_EQ(sol.N[k].norm(), 0.0);
  }
}

TEST(AffineBsde, DriftlessKeepsTerminal) {
  auto s = solved(scalar_instance(40));
  auto sol = solve_affine_terminal(s.rp, s.sigma, v1(0.3), v1(-2));
  for (int k = 0; k <= 40; ++k) {
    EXPECT_EQ(sol.m[k](0), 0.3);
    EXPECT_EQ(sol.N[k](0), -2);
  }
}

TEST(AffineBsde, ConstantDriftClosedForm) {
  // B = 0, S = 0, R11 = 0 keeps Sigma = 0, so F = f and L = c.
  const double f = 0.8, c = -0.6, a = 0.4, b = 1.5;
  ConstantCoefficients cc;
  cc.A = m1(f);
  cc.C = m1(c);
  cc.R22 = m1(1);
  auto s = solved(constant_problem(1, 1, 1.0, 100, cc));
  auto sol = solve_affine_terminal(s.rp, s.sigma, v1(a), v1(b));
  EXPECT_EQ(sol.m[100](0), a);
  EXPECT_EQ(sol.N[100](0), b);
  for (int k = 0; k <= 100; ++k) {
    const double t = s.rp.grid().t(k), e = std::exp(f * (t - 1.0));
    EXPECT_NEAR(sol.N[k](0), b * e, 1e-9);
    EXPECT_NEAR(sol.m[k](0), e * (a + c * b * (t - 1.0)), 1e-9);
  }
}

TEST(AffineBsde, MartingaleMismatchShrinks) {
  double prev = 0;
  for (int n : {50, 100, 200}) {
    auto s = solved(maximin_instance(2.0, n));
    auto sol = solve_affine_terminal(s.rp, s.sigma, v1(0.2), v1(1));
    BrownianBatch batch(s.rp.grid(), 2000, 9, 400 / n);
    auto mm = affine_martingale_mismatch(s.rp, s.sigma, sol, batch);
    EXPECT_TRUE(std::isfinite(mm.max));
    if (prev > 0) EXPECT_LT(mm.rms, prev);
    prev = mm.rms;
  }
}

TEST(Lsmc, AgreesWithAffineWithinThreeSe) {
  auto s = solved(maximin_instance(2.0, 100));
  auto xi = TerminalData::affine(v1(0.3), v1(1));
  auto af = solve_affine_terminal(s.rp, s.sigma, xi.a, xi.b);
  auto L = solve_lsmc(s.rp, s.sigma, xi, 20000, 3, 42);
  for (int k = 0; k < 100; ++k) {
    MatrixXd dp = (L.coeffs_phi[k] - affine_phi_coeffs(af, k, 3)).cwiseAbs();
    MatrixXd db = (L.coeffs_beta[k] - affine_beta_coeffs(af, k, 3)).cwiseAbs();
    EXPECT_TRUE((dp.array() <= 3 * L.se_phi[k].array()).all()) << "k=" << k;
    EXPECT_TRUE((db.array() <= 3 * L.se_beta[k].array()).all()) << "k=" << k;
  }
  EXPECT_LE(L.terminal_fit_residual, 1e-10);
}

TEST(Lsmc, ZeroTerminal) {
  auto s = solved(maximin_instance(2.0, 20));
  auto L = solve_lsmc(s.rp, s.sigma, TerminalData::functional("zero", v1(1)),
                      500, 2, 1);
  for (int k = 0; k <= 20; ++k) {
    EXPECT_LE(L.coeffs_phi[k].cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE(L.coeffs_beta[k].cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Lsmc, QuadraticTerminalFitExact) {
  auto s = solved(maximin_instance(2.0, 20));
  auto L = solve_lsmc(s.rp, s.sigma, TerminalData::functional("w2", v1(1)),
                      2000, 2, 1);
  EXPECT_LE(L.terminal_fit_residual, 1e-10);
}

TEST(Lsmc, DeterministicInSeed) {
  auto s = solved(maximin_instance(2.0, 20));
  auto xi = TerminalData::functional("relu", v1(1));
  auto a = solve_lsmc(s.rp, s.sigma, xi, 1000, 3, 5);
  auto b = solve_lsmc(s.rp, s.sigma, xi, 1000, 3, 5);
  for (int k = 0; k <= 20; ++k) EXPECT_EQ(a.coeffs_phi[k], b.coeffs_phi[k]);
}

TEST(Lsmc, RejectsBadSizes) {
  auto s = solved(maximin_instance(2.0, 10));
  auto xi = TerminalData::functional("w", v1(1));
  EXPECT_THROW(solve_lsmc(s.rp, s.sigma, xi, 39, 3, 1), ValidationError);
  EXPECT_THROW(solve_lsmc(s.rp, s.sigma, xi, 1000, 0, 1), ValidationError);
}

TEST(Lsmc, IllConditionedBasisReported) {
  auto s = solved(maximin_instance(2.0, 10));
  auto xi = TerminalData::functional("w", v1(1));
  // Degree 30 on 400 paths: the Hermite normal matrix is hopeless.
  try {
    solve_lsmc(s.rp, s.sigma, xi, 400, 30, 1);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_EQ(e.code(), NumericalCode::kIllConditionedRegression);
  }
}
