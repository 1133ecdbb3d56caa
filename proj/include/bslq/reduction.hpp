#pragma once

#include <memory>

#include "bslq/core_types.hpp"

namespace bslq {

/// Reduced coefficients at one instant. C is the transformed C~, and the
/// original R21, R22^{-1} are kept for the back-maps.
struct ReducedCoeffs {
  MatrixXd A, B, C, S1H, S2H, R11H, R22, R22inv, H;
  MatrixXd R21;  // original R12^T
};

/// Normal form G = Q = R12 = 0 of a problem, obtained through
/// v = u + R22^{-1} R21 Z and the shift by the solution H of
/// Hdot + HA + A'H + Q = 0, H(0) = -G. Then J(xi; u) = J^H(xi; v) - E<H(T)xi, xi>.
struct ReducedProblem {
  std::shared_ptr<const ProblemData> base;
  CoefficientPath H, sC, S1H, S2H, R11H, R22, R22inv;

  const TimeGrid& grid() const { return base->grid; }
  int n() const { return base->n; }
  int m() const { return base->m; }

  /// Inside step k at theta in [0, 1]; H is cubic-Hermite interpolated so
  /// RK4 solves on top of it keep fourth order.
  ReducedCoeffs on_step(int k, double theta) const;
  ReducedCoeffs at_node(int k) const;

  /// E<H(T) xi, xi> for affine xi = a + b W(T).
  double terminal_shift(const TerminalData& xi) const;
  /// <H(T) x, x> for a terminal realisation.
  double terminal_shift(const VectorXd& xi_value) const;

  /// The normal-form problem (G = Q = R12 = 0) as plain ProblemData.
  ProblemData as_problem() const;

  std::vector<MatrixXd> Hdot_left, Hdot_right;  // per step, one-sided
};

/// RK4 forward solve of Hdot + HA + A'H + Q = 0 with H(0) = -G.
CoefficientPath solve_H(const ProblemData& p);

/// Throws NumericalError(kSingularR22) if any R22(t_k) has condition
/// number above 1e12.
ReducedProblem reduce_problem(const ProblemData& p);

/// u = v - R22^{-1} R21 Z at one node.
VectorXd map_control_back(const VectorXd& v, const VectorXd& Z,
                          const ProblemData& p, int k);

/// Per-node version over a whole path: v[k], Z[k] for k = 0..n_steps.
std::vector<VectorXd> map_control_back(const std::vector<VectorXd>& v,
                                       const std::vector<VectorXd>& Z,
                                       const ProblemData& p);

/// R22^{-1}; symmetric-definite factorization when R22 > 0, pivoted LU
/// otherwise. Throws kSingularR22 above condition number 1e12.
MatrixXd invert_r22(const MatrixXd& R22, double t);

}  // namespace bslq
