#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "bslq/brownian.hpp"
#include "bslq/closed_loop.hpp"
#include "bslq/riccati.hpp"

namespace bslq {

/// Exact solution phi = m + N W, beta = N of the auxiliary BSDE for
/// affine terminal data xi = a + b W(T).
struct AffineBsdeSolution {
  TimeGrid grid{1.0, 2};
  std::vector<VectorXd> m;  // intercept path
  std::vector<VectorXd> N;  // slope path (n x 1)

  VectorXd phi(int k, double w) const { return m[k] + N[k] * w; }
  const VectorXd& beta(int k) const { return N[k]; }
};

/// RK4 backward solve of Ndot = F N, N(T) = b and mdot = F m + L N, m(T) = a.
AffineBsdeSolution solve_affine_terminal(const ReducedProblem& rp,
                                         const SigmaSolution& sigma,
                                         const VectorXd& a, const VectorXd& b);

struct MismatchSummary {
  double max = 0.0;
  double rms = 0.0;
};

/// Simulates dphi = (F phi + L N) dt + N dW forward by Euler from m(0) on
/// the batch and compares phi(T) with a + b W(T) pathwise.
MismatchSummary affine_martingale_mismatch(const ReducedProblem& rp,
                                           const SigmaSolution& sigma,
                                           const AffineBsdeSolution& sol,
                                           const BrownianBatch& batch);

/// Linear BSDE dphi = (F phi + L beta + f0(t, W)) dt + beta dW,
/// phi(T) = g(W(T)), with F, L given per node.
struct LinearBsde {
  TimeGrid grid{1.0, 2};
  int n = 0;
  std::vector<MatrixXd> F, L;
  std::function<VectorXd(int, double)> source;  // optional f0(t_k, w)
  std::function<VectorXd(double)> terminal;
};

/// Least-squares Monte Carlo solution. phi(t_k) and beta(t_k) are
/// polynomials of degree <= d in W(t_k), stored as coefficients on the
/// Hermite basis He_j(W / sqrt(t_k)) (constant only at t_0).
struct RegressionBsdeSolution {
  TimeGrid grid{1.0, 2};
  int degree = 0;
  int n_paths = 0;
  std::uint64_t seed = 0;
  std::vector<MatrixXd> coeffs_phi, coeffs_beta;  // n x K_k
  /// Coefficient standard errors, accumulated root-sum-square from T back.
  std::vector<MatrixXd> se_phi, se_beta;
  std::vector<double> residual_phi, residual_beta;  // RMS training residuals
  double terminal_fit_residual = 0.0;  // max |fit - g| over training paths

  VectorXd basis(int k, double w) const;
  VectorXd phi(int k, double w) const;
  VectorXd beta(int k, double w) const;
};

/// Throws ValidationError unless n_paths >= 10 (degree + 1) and degree >= 1,
/// NumericalError kIllConditionedRegression if a normal matrix has
/// condition number above 1e10.
RegressionBsdeSolution solve_linear_bsde_lsmc(const LinearBsde& bsde,
                                              int n_paths, int degree,
                                              std::uint64_t seed);

/// The auxiliary BSDE with xi = g(W(T)) solved by regression.
RegressionBsdeSolution solve_lsmc(const ReducedProblem& rp,
                                  const SigmaSolution& sigma,
                                  const TerminalData& xi, int n_paths,
                                  int degree, std::uint64_t seed);

/// The affine solution written on the regression basis at node k:
/// phi -> [m, N sqrt(t_k), 0, ...], beta -> [N, 0, ...].
MatrixXd affine_phi_coeffs(const AffineBsdeSolution& sol, int k, int degree);
MatrixXd affine_beta_coeffs(const AffineBsdeSolution& sol, int k, int degree);

}  // namespace bslq
