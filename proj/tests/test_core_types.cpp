#include <gtest/gtest.h>

#include "bslq/errors.hpp"
#include "bslq/instances.hpp"

using namespace bslq;

namespace {

MatrixXd m1(double x) { return MatrixXd::Constant(1, 1, x); }

}  // namespace

TEST(EvalCoeff, ConstantPathReturnsValueEverywhere) {
  TimeGrid g(2.0, 8);
  MatrixXd M(2, 2);
  M << 1, 2, 3, 4;
  auto c = CoefficientPath::constant(g, M);
  for (double t : {0.0, 0.3, 1.0, 1.77, 2.0}) {
    EXPECT_EQ(eval_coeff(c, t), M);
  }
}

TEST(EvalCoeff, LinearMidpoint) {
  TimeGrid g(1.0, 1 * 2);
  auto c = CoefficientPath::sample(
      g, [](double t) -> MatrixXd { return t * MatrixXd::Identity(2, 2); });
  EXPECT_TRUE(eval_coeff(c, 0.5).isApprox(0.5 * MatrixXd::Identity(2, 2)));
  // Between nodes of a two-step grid the interpolant is exact for linear data.
  EXPECT_NEAR(eval_coeff(c, 0.3)(0, 0), 0.3, 1e-15);
}

TEST(EvalCoeff, PiecewiseConstantLeftHoldsLeftValue) {
  TimeGrid g(1.0, 2);
  CoefficientPath c(g, {m1(1.0), m1(5.0), m1(9.0)},
                    Interpolation::kPiecewiseConstantLeft);
  EXPECT_EQ(eval_coeff(c, 0.5 - 1e-12)(0, 0), 1.0);
  EXPECT_EQ(eval_coeff(c, 0.5)(0, 0), 5.0);
  EXPECT_EQ(eval_coeff(c, 1.0)(0, 0), 9.0);
  EXPECT_EQ(c.on_step(0, 1.0)(0, 0), 1.0);
}

TEST(EvalCoeff, ExactAtNodesAndContinuous) {
  TimeGrid g(1.0, 10);
  auto c = CoefficientPath::sample(
      g, [](double t) -> MatrixXd { return m1(std::sin(3 * t)); });
  for (int k = 0; k <= 10; ++k) {
    EXPECT_EQ(eval_coeff(c, g.t(k))(0, 0), std::sin(3 * g.t(k)));
    if (k < 10) {
      double below = eval_coeff(c, g.t(k + 1) - 1e-9)(0, 0);
      EXPECT_NEAR(below, std::sin(3 * g.t(k + 1)), 1e-7);
    }
  }
}

TEST(EvalCoeff, OutsideHorizonThrows) {
  auto c = CoefficientPath::constant(TimeGrid(1.0, 4), m1(1));
  EXPECT_THROW(eval_coeff(c, -0.01), ValidationError);
  EXPECT_THROW(eval_coeff(c, 1.01), ValidationError);
}

TEST(ValidateProblem, ScalarPositiveR22) {
  auto rep = validate_problem(scalar_instance(10));
  EXPECT_TRUE(rep.ok);
  EXPECT_DOUBLE_EQ(rep.r22_min_eig, 1.0);
  EXPECT_FALSE(rep.has("R22_NOT_UNIFORMLY_POSITIVE"));
}

TEST(ValidateProblem, ZeroR22Warns) {
  auto rep = validate_problem(zero_instance(1, 1, 10, 0.0));
  EXPECT_TRUE(rep.ok);
  ASSERT_TRUE(rep.has("R22_NOT_UNIFORMLY_POSITIVE"));
  for (const auto& f : rep.findings) {
    if (f.code == "R22_NOT_UNIFORMLY_POSITIVE") {
      EXPECT_EQ(f.severity, Severity::kWarning);
    }
  }
}

TEST(ValidateProblem, MaximinReportsIndefiniteR11Only) {
  auto rep = validate_problem(maximin_instance(1.0, 50));
  EXPECT_TRUE(rep.ok);
  ASSERT_EQ(rep.findings.size(), 1u);
  EXPECT_EQ(rep.findings[0].severity, Severity::kInfo);
  EXPECT_EQ(rep.findings[0].message, "R11 indefinite");
}

TEST(ValidateProblem, DimensionMismatchIsError) {
  auto p = scalar_instance(4);
  p.B = CoefficientPath::constant(p.grid, MatrixXd::Ones(2, 1));
  auto rep = validate_problem(p);
  EXPECT_FALSE(rep.ok);
  EXPECT_TRUE(rep.has("DIM_MISMATCH"));
}

TEST(ValidateProblem, NonFiniteIsError) {
  auto p = scalar_instance(4);
  p.Q = CoefficientPath::constant(p.grid, m1(std::nan("")));
  auto rep = validate_problem(p);
  EXPECT_FALSE(rep.ok);
  EXPECT_TRUE(rep.has("NON_FINITE"));
}

TEST(ValidateProblem, IsPure) {
  auto p = indefinite_2d_instance(20);
  auto a = validate_problem(p), b = validate_problem(p);
  ASSERT_EQ(a.findings.size(), b.findings.size());
  for (size_t i = 0; i < a.findings.size(); ++i) {
    EXPECT_EQ(a.findings[i].code, b.findings[i].code);
    EXPECT_EQ(a.findings[i].message, b.findings[i].message);
  }
  EXPECT_EQ(a.r22_min_eig, b.r22_min_eig);
}

TEST(ProblemData, SymmetrizeIsBitwise) {
  TimeGrid g(1.0, 3);
  MatrixXd Q(2, 2);
  Q << 1, 2, 0, 1;
  ConstantCoefficients c;
  c.Q = Q;
  c.R22 = MatrixXd::Identity(1, 1);
  auto p = constant_problem(2, 1, 1.0, 3, c);
  p.Q = CoefficientPath::constant(g, Q);
  p.symmetrize();
  for (int k = 0; k < g.n_nodes(); ++k) {
    const MatrixXd& q = p.Q.node(k);
    EXPECT_EQ(q(0, 1), q(1, 0));
    EXPECT_EQ(q(0, 1), 1.0);
  }
  auto cc = p.at_node(1);
  EXPECT_EQ(cc.R21, cc.R12.transpose());
}

TEST(TerminalData, AffineAndFunctional) {
  auto a = TerminalData::affine(VectorXd::Constant(1, 2.0), VectorXd::Ones(1));
  EXPECT_DOUBLE_EQ(a.evaluate(0.5)(0), 2.5);
  auto f = TerminalData::functional("w2", VectorXd::Constant(1, 3.0));
  EXPECT_DOUBLE_EQ(f.evaluate(-2.0)(0), 12.0);
  EXPECT_THROW(TerminalData::functional("nope", VectorXd::Ones(1)),
               ValidationError);
  EXPECT_THROW(validate_terminal(indefinite_2d_instance(4), a),
               ValidationError);
}

TEST(TimeGrid, NodesAndRefinement) {
  TimeGrid g(1.5, 3);
  EXPECT_EQ(g.n_nodes(), 4);
  EXPECT_DOUBLE_EQ(g.h(), 0.5);
  EXPECT_EQ(g.t(3), 1.5);
  EXPECT_EQ(g.refined(2).n_steps(), 6);
}
