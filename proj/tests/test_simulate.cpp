#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>

#include "bslq/errors.hpp"
#include "bslq/instances.hpp"
#include "bslq/simulate.hpp"

using namespace bslq;

namespace {

VectorXd v1(double x) { return VectorXd::Constant(1, x); }

Path constant_path(const TimeGrid& g, double x) {
  return Path(g.n_nodes(), v1(x));
}

}  // namespace

TEST(Brownian, StartsAtZeroAndIsDeterministic) {
  TimeGrid g(1.0, 50);
  auto a = sample_paths(g, 1, 123);
  std::vector<double> W;
  a.cumulative(0, W);
  EXPECT_EQ(W[0], 0.0);
  auto b = sample_paths(g, 64, 7), c = sample_paths(g, 64, 7);
  EXPECT_EQ(b.materialize(), c.materialize());
  EXPECT_NE(b.materialize(), sample_paths(g, 64, 8).materialize());
}

TEST(Brownian, IncrementMoments) {
  TimeGrid g(1.0, 20);
  const int P = 100000;
  auto batch = sample_paths(g, P, 42);
  double s = 0, s2 = 0;
  std::vector<double> dW;
  for (int p = 0; p < P; ++p) {
    batch.increments(p, dW);
    for (double x : dW) {
      s += x;
      s2 += x * x;
    }
  }
  const double N = double(P) * g.n_steps();
  const double mean = s / N, var = s2 / N - mean * mean;
  EXPECT_LE(std::abs(mean), 5 * std::sqrt(g.h() / N));
  EXPECT_GE(var / g.h(), 0.95);
  EXPECT_LE(var / g.h(), 1.05);
}

TEST(Brownian, SubstepsShareFinePaths) {
  TimeGrid g(1.0, 10);
  BrownianBatch coarse(g, 5, 3, 2), fine(g.refined(2), 5, 3);
  std::vector<double> Wc, Wf;
  for (int p = 0; p < 5; ++p) {
    coarse.cumulative(p, Wc);
    fine.cumulative(p, Wf);
    for (int k = 0; k <= 10; ++k) EXPECT_NEAR(Wc[k], Wf[2 * k], 1e-14);
  }
}

TEST(Simulate, ZeroTerminalGivesZeroPaths) {
  auto pl = build_pipeline(maximin_instance(2.0, 20),
                           TerminalData::affine(v1(0), v1(0)));
  auto batch = sample_paths(pl.grid(), 50, 1);
  auto X = simulate_X(pl.rp, pl.sigma, pl.bsde, batch);
  for (const auto& path : X)
    for (const auto& x : path) EXPECT_EQ(x.norm(), 0.0);
  auto r = reconstruct_YZu(pl.rp, pl.sigma, pl.bsde, X, batch);
  for (size_t p = 0; p < X.size(); ++p) {
    for (int k = 0; k <= 20; ++k) {
      EXPECT_EQ(r.Y[p][k].norm(), 0.0);
      EXPECT_EQ(r.Z[p][k].norm(), 0.0);
      EXPECT_EQ(r.u[p][k].norm(), 0.0);
    }
  }
  EXPECT_EQ(value_formula(pl.rp, pl.sigma, pl.bsde, pl.xi), 0.0);
}

TEST(Simulate, ScalarInstanceXStaysZero) {
  auto pl = build_pipeline(scalar_instance(20), TerminalData::affine(v1(1), v1(2)));
  auto batch = sample_paths(pl.grid(), 20, 1);
  for (const auto& path : simulate_X(pl.rp, pl.sigma, pl.bsde, batch))
    for (const auto& x : path) EXPECT_EQ(x.norm(), 0.0);
}

TEST(Simulate, TerminalReconstructionExact) {
  auto pl = build_pipeline(general_instance(50),
                           TerminalData::affine(v1(0.5), v1(1)));
  auto batch = sample_paths(pl.grid(), 2000, 3);
  auto r = simulate_optimal(pl, batch, {-1});
  EXPECT_EQ(r.terminal_mismatch.max, 0.0);
  EXPECT_LE(r.stationarity_rms, 1e-10);
  for (int p = 0; p < 2000; ++p) EXPECT_EQ(r.X[p][0].norm(), 0.0);
}

TEST(Simulate, ForwardEulerMismatchShrinks) {
  auto xi = TerminalData::affine(v1(0), v1(1));
  double prev = 0;
  for (int n : {50, 100, 200}) {
    auto pl = build_pipeline(maximin_instance(2.0, n), xi);
    auto r = simulate_optimal(pl, BrownianBatch(pl.grid(), 4000, 5, 200 / n));
    if (prev > 0) EXPECT_LT(r.forward_euler_mismatch.rms, prev);
    prev = r.forward_euler_mismatch.rms;
  }
}

TEST(Simulate, NormalFormControlFormula) {
  auto pl = build_pipeline(maximin_instance(2.0, 20),
                           TerminalData::affine(v1(0.1), v1(1)));
  auto batch = sample_paths(pl.grid(), 30, 2);
  auto X = simulate_X(pl.rp, pl.sigma, pl.bsde, batch);
  auto r = reconstruct_YZu(pl.rp, pl.sigma, pl.bsde, X, batch);
  std::vector<double> W;
  for (int p = 0; p < 30; ++p) {
    batch.cumulative(p, W);
    for (int k = 0; k <= 20; ++k) {
      auto c = pl.rp.at_node(k);
      auto st = sigma_terms(c, pl.sigma.Sigma[k]);
      VectorXd phi = pl.bsde.phi(k, W[k]);
      VectorXd u = c.R22inv * (st.BH.transpose() * X[p][k] - c.S2H * phi);
      EXPECT_NEAR((u - r.u[p][k]).norm(), 0.0, 1e-12);
    }
  }
}

TEST(Simulate, StationarityAllInstances) {
  VectorXd a(2), b(2);
  a << 1, -0.5;
  b << 0.5, 1;
  std::vector<std::pair<ProblemData, TerminalData>> cases = {
      {maximin_instance(2.0, 40), TerminalData::affine(v1(0), v1(1))},
      {scalar_instance(40), TerminalData::affine(v1(1), v1(1))},
      {general_instance(40), TerminalData::affine(v1(0.5), v1(1))},
      {indefinite_2d_instance(40), TerminalData::affine(a, b)}};
  for (auto& [p, xi] : cases) {
    auto pl = build_pipeline(p, xi);
    auto r = simulate_optimal(pl, sample_paths(p.grid, 500, 11), {-1});
    EXPECT_LE(r.stationarity_rms, 1e-10);
  }
}

TEST(Simulate, StationarityDetectsShiftedControl) {
  auto pl = build_pipeline(maximin_instance(2.0, 20),
                           TerminalData::affine(v1(0), v1(1)));
  auto r = simulate_optimal(pl, sample_paths(pl.grid(), 100, 4), {-1});
  for (auto& path : r.u)
    for (auto& u : path) u(0) += 1.0;
  EXPECT_NEAR(stationarity_residual(pl.rp, r), 4.0, 1e-10);  // R22 = a^2
}

TEST(Simulate, ThreadCountDoesNotChangeResults) {
  auto pl = build_pipeline(maximin_instance(2.0, 40),
                           TerminalData::affine(v1(0), v1(1)));
  auto batch = sample_paths(pl.grid(), 3000, 6);
  setenv("BSLQ_THREADS", "1", 1);
  auto a = simulate_optimal(pl, batch);
  setenv("BSLQ_THREADS", "3", 1);
  auto b = simulate_optimal(pl, batch);
  unsetenv("BSLQ_THREADS");
  EXPECT_EQ(a.cost.mean, b.cost.mean);
  EXPECT_EQ(a.cost.se, b.cost.se);
}

TEST(EstimateCost, TrivialCases) {
  auto p = maximin_instance(2.0, 20);
  auto batch = sample_paths(p.grid, 100, 1);
  auto z = estimate_cost(p, ZeroPolicy{}, TerminalData::affine(v1(0), v1(0)), batch);
  EXPECT_EQ(z.mean, 0.0);
  auto q = zero_instance(1, 1, 20, 0.0);
  AffineFeedbackPolicy pol{constant_path(q.grid, 1.0), constant_path(q.grid, 2.0)};
  EXPECT_EQ(estimate_cost(q, pol, TerminalData::affine(v1(1), v1(1)), batch).mean,
            0.0);
}

TEST(EstimateCost, DeterministicControlMatchesDeterministicCost) {
  auto p = general_instance(50);
  Path v;
  for (int k = 0; k <= 50; ++k) v.push_back(v1(std::cos(p.grid.t(k))));
  AffineFeedbackPolicy pol{v, {}};
  auto e = estimate_cost(p, pol, TerminalData::affine(v1(0), v1(0)),
                         sample_paths(p.grid, 10, 1));
  EXPECT_NEAR(e.mean, deterministic_cost(p, v), 1e-12);
  EXPECT_EQ(e.se, 0.0);
}

TEST(EstimateCost, RegressionPathAgreesWithAffinePath) {
  auto p = general_instance(50);
  auto xi = TerminalData::affine(v1(0.5), v1(1));
  AffineFeedbackPolicy pol{constant_path(p.grid, 0.2), constant_path(p.grid, -0.3)};
  auto batch = sample_paths(p.grid, 20000, 8);
  auto exact = estimate_cost(p, pol, xi, batch);
  FeedbackPolicy fb;
  fb.rule = [](double, double w) { return v1(0.2 - 0.3 * w); };
  fb.degree = 2;
  auto reg = estimate_cost(p, fb, xi, batch);
  EXPECT_NEAR(reg.mean, exact.mean, 3 * exact.se + 0.02);
}

TEST(EstimateCost, StoredMatchesOptimal) {
  auto pl = build_pipeline(maximin_instance(2.0, 40),
                           TerminalData::affine(v1(0), v1(1)));
  auto batch = sample_paths(pl.grid(), 500, 12);
  auto r = simulate_optimal(pl, batch, {-1});
  auto st = estimate_cost(pl.problem(), StoredPolicy{&r}, pl.xi, batch);
  EXPECT_NEAR(st.mean, r.cost.mean, 1e-12);
  auto op = estimate_cost(pl.problem(), OptimalPolicy{&pl}, pl.xi, batch);
  EXPECT_EQ(op.mean, r.cost.mean);
}

TEST(ValueFormula, NoWeightsConstantTerminal) {
  ConstantCoefficients c;
  c.A = MatrixXd::Constant(1, 1, 0.5);
  c.B = MatrixXd::Constant(1, 1, 1.0);
  c.C = MatrixXd::Constant(1, 1, 0.3);
  c.R22 = MatrixXd::Identity(1, 1);
  auto pl = build_pipeline(constant_problem(1, 1, 1.0, 40, c),
                           TerminalData::affine(v1(2), v1(0)));
  EXPECT_NEAR(value_formula(pl.rp, pl.sigma, pl.bsde, pl.xi), 0.0, 1e-14);
}

TEST(ValueFormula, RejectsFunctionalTerminal) {
  auto p = maximin_instance(2.0, 20);
  EXPECT_THROW(build_pipeline(p, TerminalData::functional("w2", v1(1))),
               ValidationError);
}

TEST(Perturbation, TrivialRows) {
  auto pl = build_pipeline(maximin_instance(2.0, 40),
                           TerminalData::affine(v1(0), v1(1)));
  auto batch = sample_paths(pl.grid(), 1000, 2);
  for (const auto& r :
       perturbation_test(pl, constant_path(pl.grid(), 0.0), {0.5, 1}, batch)) {
    EXPECT_EQ(r.dJ, 0.0);
  }
  auto rows = perturbation_test(pl, constant_path(pl.grid(), 1.0), {0.0}, batch);
  EXPECT_EQ(rows[0].dJ, 0.0);
}

TEST(Perturbation, QuadraticInEpsilon) {
  auto pl = build_pipeline(maximin_instance(2.0, 100),
                           TerminalData::affine(v1(0), v1(1)));
  auto batch = sample_paths(pl.grid(), 20000, 2);
  Path v;
  for (int k = 0; k <= 100; ++k) v.push_back(v1(std::sin(2 * M_PI * pl.grid().t(k))));
  auto rows = perturbation_test(pl, v, {0.5, 1.0}, batch);
  EXPECT_NEAR(rows[1].eps2_J0v, 4 * rows[0].eps2_J0v, 1e-12);
  EXPECT_NEAR(rows[1].eps2_J0v / deterministic_cost(pl.problem(), v), 1.0, 1e-12);
  for (const auto& r : rows) {
    EXPECT_GE(r.dJ, -3 * r.se);
    EXPECT_LE(std::abs(r.gap), 3 * r.se + 0.5 * pl.grid().h());
  }
}

TEST(ConvexityProbe, UnitAndFlippedWeights) {
  auto batch = sample_paths(TimeGrid(1.0, 50), 2000, 3);
  auto unit = convexity_probe(zero_instance(1, 1, 50, 1.0), 8, batch, 1);
  for (double r : unit.ratios) EXPECT_NEAR(r, 1.0, 1e-12);
  auto flip = convexity_probe(necessity_instance(50), 8, batch, 1);
  EXPECT_NEAR(flip.min_ratio, -1.0, 1e-12);
  EXPECT_EQ(flip.ratios.size(), 8u);
}

TEST(ConvexityProbe, MaximinPositive) {
  auto p = maximin_instance(2.0, 50);
  auto pr = convexity_probe(p, 10, sample_paths(p.grid, 5000, 3), 1);
  EXPECT_GT(pr.min_ratio - 3 * pr.se, 0.0);
}

TEST(ReductionIdentity, SmallOnGeneralInstance) {
  auto pl = build_pipeline(general_instance(100),
                           TerminalData::affine(v1(0.5), v1(1)));
  auto ri = reduction_identity(pl, sample_paths(pl.grid(), 5000, 21));
  EXPECT_LE(std::abs(ri.diff.mean), 3 * ri.diff.se + 0.5 * pl.grid().h());
  EXPECT_NE(pl.rp.H.node(100)(0, 0), 0.0);
}
