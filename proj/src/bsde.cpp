#include "bslq/bsde.hpp"

#include <cmath>
#include <sstream>

#include "bslq/errors.hpp"

namespace bslq {

namespace {

constexpr double kMaxRegressionCond = 1e10;

BsdeDrift drift_on_step(const ReducedProblem& rp, const SigmaSolution& sigma,
                        int k, double theta) {
  const double t = rp.grid().t(k) + theta * rp.grid().h();
  return bsde_drift(rp.on_step(k, theta), sigma.on_step(k, theta), t);
}

int basis_size(int k, int degree) { return k == 0 ? 1 : degree + 1; }

}  // namespace

AffineBsdeSolution solve_affine_terminal(const ReducedProblem& rp,
                                         const SigmaSolution& sigma,
                                         const VectorXd& a,
                                         const VectorXd& b) {
  const TimeGrid& g = rp.grid();
  if (a.size() != rp.n() || b.size() != rp.n()) {
    throw ValidationError("bsde/solve_affine_terminal",
                          "a and b must have n entries");
  }
  if (!(sigma.grid == g)) {
    throw ValidationError("bsde/solve_affine_terminal", "grid mismatch");
  }
  const int N = g.n_steps();
  const double h = g.h();
  AffineBsdeSolution sol;
  sol.grid = g;
  sol.m.resize(g.n_nodes());
  sol.N.resize(g.n_nodes());
  sol.m[N] = a;
  sol.N[N] = b;
  // State (N, m); Ndot = F N, mdot = F m + L N.
  auto rhs = [](const BsdeDrift& d, const VectorXd& Nv, const VectorXd& mv,
                VectorXd& dN, VectorXd& dm) {
    dN = d.F * Nv;
    dm = d.F * mv + d.L * Nv;
  };
  for (int k = N - 1; k >= 0; --k) {
    const BsdeDrift d1 = drift_on_step(rp, sigma, k, 1.0);
    const BsdeDrift dm = drift_on_step(rp, sigma, k, 0.5);
    const BsdeDrift d0 = drift_on_step(rp, sigma, k, 0.0);
    const VectorXd& N1 = sol.N[k + 1];
    const VectorXd& m1 = sol.m[k + 1];
    VectorXd kN1, km1, kN2, km2, kN3, km3, kN4, km4;
    rhs(d1, N1, m1, kN1, km1);
    rhs(dm, N1 - 0.5 * h * kN1, m1 - 0.5 * h * km1, kN2, km2);
    rhs(dm, N1 - 0.5 * h * kN2, m1 - 0.5 * h * km2, kN3, km3);
    rhs(d0, N1 - h * kN3, m1 - h * km3, kN4, km4);
    sol.N[k] = N1 - (h / 6.0) * (kN1 + 2.0 * kN2 + 2.0 * kN3 + kN4);
    sol.m[k] = m1 - (h / 6.0) * (km1 + 2.0 * km2 + 2.0 * km3 + km4);
    if (!sol.N[k].allFinite() || !sol.m[k].allFinite()) {
      throw NumericalError("bsde/solve_affine_terminal",
                           NumericalCode::kNonFinite, "non-finite (m, N)",
                           g.t(k));
    }
  }
  return sol;
}

MismatchSummary affine_martingale_mismatch(const ReducedProblem& rp,
                                           const SigmaSolution& sigma,
                                           const AffineBsdeSolution& sol,
                                           const BrownianBatch& batch) {
  const TimeGrid& g = rp.grid();
  if (!(batch.grid() == g)) {
    throw ValidationError("bsde/affine_martingale_mismatch", "grid mismatch");
  }
  std::vector<BsdeDrift> drift;
  drift.reserve(g.n_nodes());
  for (int k = 0; k < g.n_nodes(); ++k) {
    drift.push_back(bsde_drift(rp.at_node(k), sigma.Sigma[k], g.t(k)));
  }
  MismatchSummary out;
  std::vector<double> dW;
  double sq = 0.0;
  const VectorXd& a = sol.m[g.n_steps()];
  const VectorXd& b = sol.N[g.n_steps()];
  for (int p = 0; p < batch.n_paths(); ++p) {
    batch.increments(p, dW);
    VectorXd phi = sol.m[0];
    double W = 0.0;
    for (int k = 0; k < g.n_steps(); ++k) {
      phi += (drift[k].F * phi + drift[k].L * sol.N[k]) * g.h() +
             sol.N[k] * dW[k];
      W += dW[k];
    }
    const double e = (phi - (a + b * W)).norm();
    out.max = std::max(out.max, e);
    sq += e * e;
  }
  out.rms = std::sqrt(sq / batch.n_paths());
  return out;
}

VectorXd RegressionBsdeSolution::basis(int k, double w) const {
  const int K = basis_size(k, degree);
  VectorXd b(K);
  b(0) = 1.0;
  if (K == 1) return b;
  const double x = w / std::sqrt(grid.t(k));
  b(1) = x;
  for (int j = 1; j + 1 < K; ++j) b(j + 1) = x * b(j) - j * b(j - 1);
  return b;
}

VectorXd RegressionBsdeSolution::phi(int k, double w) const {
  return coeffs_phi[k] * basis(k, w);
}

VectorXd RegressionBsdeSolution::beta(int k, double w) const {
  return coeffs_beta[k] * basis(k, w);
}

namespace {

struct Fit {
  MatrixXd coeffs;  // n x K
  MatrixXd se;      // n x K
  double rms = 0.0;
  MatrixXd fitted;  // P x n
};

/// Least squares of targets (P x n) on design X (P x K).
Fit regress(const MatrixXd& X, const MatrixXd& Y, double t) {
  const double P = static_cast<double>(X.rows());
  const Eigen::Index K = X.cols();
  const MatrixXd G = (X.transpose() * X) / P;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(G, Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues().minCoeff();
  const double lmax = es.eigenvalues().maxCoeff();
  if (!(lmin > 0.0) || lmax / lmin > kMaxRegressionCond) {
    std::ostringstream os;
    os << "regression normal matrix condition " << lmax / lmin << " at t = "
       << t;
    throw NumericalError("bsde/solve_lsmc",
                         NumericalCode::kIllConditionedRegression, os.str(), t);
  }
  const Eigen::LDLT<MatrixXd> ldlt(G);
  Fit f;
  f.coeffs = ldlt.solve(X.transpose() * Y / P).transpose();
  f.fitted = X * f.coeffs.transpose();
  const MatrixXd res = Y - f.fitted;
  f.rms = std::sqrt(res.squaredNorm() / res.size());
  const VectorXd ginv_diag =
      ldlt.solve(MatrixXd::Identity(K, K)).diagonal() / P;
  const double dof = std::max(1.0, P - static_cast<double>(K));
  f.se.resize(Y.cols(), K);
  for (Eigen::Index i = 0; i < Y.cols(); ++i) {
    const double s2 = res.col(i).squaredNorm() / dof;
    for (Eigen::Index j = 0; j < K; ++j) {
      f.se(i, j) = std::sqrt(s2 * std::max(0.0, ginv_diag(j)));
    }
  }
  return f;
}

MatrixXd accumulate(const MatrixXd& local, const MatrixXd& later) {
  MatrixXd out = local;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.cols() && j < later.cols(); ++j) {
      out(i, j) = std::sqrt(local(i, j) * local(i, j) + later(i, j) * later(i, j));
    }
  }
  return out;
}

}  // namespace

RegressionBsdeSolution solve_linear_bsde_lsmc(const LinearBsde& bsde,
                                              int n_paths, int degree,
                                              std::uint64_t seed) {
  if (degree < 1) {
    throw ValidationError("bsde/solve_lsmc", "degree must be >= 1");
  }
  if (n_paths < 10 * (degree + 1)) {
    throw ValidationError("bsde/solve_lsmc",
                          "n_paths must be at least 10 (degree + 1)");
  }
  const TimeGrid& g = bsde.grid;
  const int N = g.n_steps(), n = bsde.n;
  const double h = g.h();
  RegressionBsdeSolution sol;
  sol.grid = g;
  sol.degree = degree;
  sol.n_paths = n_paths;
  sol.seed = seed;
  sol.coeffs_phi.resize(g.n_nodes());
  sol.coeffs_beta.resize(g.n_nodes());
  sol.se_phi.resize(g.n_nodes());
  sol.se_beta.resize(g.n_nodes());
  sol.residual_phi.assign(g.n_nodes(), 0.0);
  sol.residual_beta.assign(g.n_nodes(), 0.0);

  const BrownianBatch batch(g, n_paths, seed);
  const auto W = batch.materialize();

  auto design = [&](int k) {
    const int K = basis_size(k, degree);
    MatrixXd X(n_paths, K);
    for (int p = 0; p < n_paths; ++p) X.row(p) = sol.basis(k, W[p][k]).transpose();
    return X;
  };

  // Terminal node: fit g for the record, carry the raw values backward.
  MatrixXd phi_next(n_paths, n);
  for (int p = 0; p < n_paths; ++p) {
    phi_next.row(p) = bsde.terminal(W[p][N]).transpose();
  }
  {
    const Fit f = regress(design(N), phi_next, g.T());
    sol.coeffs_phi[N] = f.coeffs;
    sol.se_phi[N] = MatrixXd::Zero(n, f.coeffs.cols());
    sol.residual_phi[N] = f.rms;
    sol.terminal_fit_residual = (phi_next - f.fitted).cwiseAbs().maxCoeff();
  }

  MatrixXd target(n_paths, n);
  for (int k = N - 1; k >= 0; --k) {
    const MatrixXd X = design(k);
    // Centre phi_next on its conditional mean before forming the Z target;
    // the mean does not change E[. dW] but dominates its variance.
    const Fit f0 = regress(X, phi_next, g.t(k));
    for (int p = 0; p < n_paths; ++p) {
      const double dW = W[p][k + 1] - W[p][k];
      target.row(p) = (phi_next.row(p) - f0.fitted.row(p)) * (dW / h);
    }
    const Fit fb = regress(X, target, g.t(k));
    for (int p = 0; p < n_paths; ++p) {
      VectorXd drift = bsde.F[k] * phi_next.row(p).transpose() +
                       bsde.L[k] * fb.fitted.row(p).transpose();
      if (bsde.source) drift += bsde.source(k, W[p][k]);
      target.row(p) = phi_next.row(p) - h * drift.transpose();
    }
    const Fit fp = regress(X, target, g.t(k));
    sol.coeffs_beta[k] = fb.coeffs;
    sol.coeffs_phi[k] = fp.coeffs;
    sol.residual_beta[k] = fb.rms;
    sol.residual_phi[k] = fp.rms;
    sol.se_phi[k] = accumulate(fp.se, sol.se_phi[k + 1]);
    sol.se_beta[k] =
        k + 1 < N ? accumulate(fb.se, sol.se_beta[k + 1]) : fb.se;
    phi_next = fp.fitted;
  }
  // beta(T) is not produced by the scheme; reuse the last step's fit.
  sol.coeffs_beta[N] = sol.coeffs_beta[N - 1];
  sol.se_beta[N] = sol.se_beta[N - 1];
  return sol;
}

RegressionBsdeSolution solve_lsmc(const ReducedProblem& rp,
                                  const SigmaSolution& sigma,
                                  const TerminalData& xi, int n_paths,
                                  int degree, std::uint64_t seed) {
  const TimeGrid& g = rp.grid();
  LinearBsde bsde;
  bsde.grid = g;
  bsde.n = rp.n();
  for (int k = 0; k < g.n_nodes(); ++k) {
    const BsdeDrift d = bsde_drift(rp.at_node(k), sigma.Sigma[k], g.t(k));
    bsde.F.push_back(d.F);
    bsde.L.push_back(d.L);
  }
  bsde.terminal = [&xi](double w) { return xi.evaluate(w); };
  return solve_linear_bsde_lsmc(bsde, n_paths, degree, seed);
}

MatrixXd affine_phi_coeffs(const AffineBsdeSolution& sol, int k, int degree) {
  const int K = basis_size(k, degree);
  MatrixXd c = MatrixXd::Zero(sol.m[k].size(), K);
  c.col(0) = sol.m[k];
  if (K > 1) c.col(1) = sol.N[k] * std::sqrt(sol.grid.t(k));
  return c;
}

MatrixXd affine_beta_coeffs(const AffineBsdeSolution& sol, int k, int degree) {
  MatrixXd c = MatrixXd::Zero(sol.N[k].size(), basis_size(k, degree));
  c.col(0) = sol.N[k];
  return c;
}

}  // namespace bslq
