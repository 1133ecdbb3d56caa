#pragma once

#include <limits>
#include <vector>

#include "bslq/core_types.hpp"
#include "bslq/reduction.hpp"

namespace bslq {

enum class RiccatiStatus { kOk, kBlockConditionViolated, kBlowUp };
const char* to_string(RiccatiStatus s);

/// Forward-problem Riccati solution P_lambda, integrated backward from
/// P(T) = lambda I. Nodes not reached after a failure hold NaN.
struct RiccatiSolution {
  TimeGrid grid{1.0, 2};
  std::vector<MatrixXd> P;
  double lambda = 0.0;
  std::vector<double> block_min_eig;  // lambda_min diag(R11H + P, R22)
  RiccatiStatus status = RiccatiStatus::kOk;
  double failure_time = std::numeric_limits<double>::quiet_NaN();
};

enum class SigmaProvenance { kDirectIntegration, kLambdaLimit };

struct SigmaSolution {
  TimeGrid grid{1.0, 2};
  std::vector<MatrixXd> Sigma;
  std::vector<double> RSigma_cond;  // cond(I + Sigma R11H) per node
  double residual_sup = 0.0;
  double min_eig = 0.0;  // raw min_t lambda_min(Sigma) before clipping
  SigmaProvenance provenance = SigmaProvenance::kDirectIntegration;
  // One-sided derivatives on each step, for Hermite evaluation.
  std::vector<MatrixXd> dot_left, dot_right;

  /// Sigma at t_k + theta h (cubic Hermite between nodes).
  MatrixXd on_step(int k, double theta) const;
};

/// The Sigma-dependent matrices B^H, C^H and R(Sigma) = I + Sigma R11H.
struct SigmaTerms {
  MatrixXd BH, CH, R;
  Eigen::PartialPivLU<MatrixXd> lu;  // of R
  double det = 0.0;
  double cond = 0.0;
};
SigmaTerms sigma_terms(const ReducedCoeffs& c, const MatrixXd& Sigma);

/// Right-hand side of the Sigma equation: A S + S A' - B^H R22^{-1} B^H'
/// - C^H R(S)^{-1} S C^H'.
MatrixXd sigma_rhs(const ReducedCoeffs& c, const MatrixXd& Sigma);

/// Right-hand side of the P equation: -PA - A'P + M' D^{-1} M with
/// D = diag(R11H + P, R22), M = [C~'P + S1H; B'P + S2H].
MatrixXd p_rhs(const ReducedCoeffs& c, const MatrixXd& P);

RiccatiSolution solve_forward_riccati(const ReducedProblem& rp, double lambda);

/// Direct RK4 backward integration from Sigma(T) = 0. Throws
/// NumericalError kSingularRSigma (cond > 1e12 or det <= 0) or kBlowUp.
SigmaSolution solve_sigma(const ReducedProblem& rp);

struct ResidualReport {
  std::vector<double> per_interval;  // Frobenius norm at each midpoint
  double sup = 0.0;
};

/// Defining-ODE residual at step midpoints, with derivative and value taken
/// from fourth-order finite differences of the stored nodes.
ResidualReport riccati_residual(const SigmaSolution& sol,
                                const ReducedProblem& rp);
ResidualReport riccati_residual(const RiccatiSolution& sol,
                                const ReducedProblem& rp);

struct SweepEntry {
  double lambda = 0.0;
  RiccatiStatus status = RiccatiStatus::kOk;
  double sup_inverse_gap = 0.0;  // sup_t ||P^{-1} - Sigma||_F
  double min_monotone_gap = std::numeric_limits<double>::quiet_NaN();
};

struct SweepReport {
  std::vector<SweepEntry> entries;  // min_monotone_gap against the previous
  bool monotone = true;             // all gaps > -1e-8
  bool gap_strictly_decreasing = true;
};

SweepReport lambda_sweep(const ReducedProblem& rp,
                         const std::vector<double>& lambdas);
SweepReport lambda_sweep(const ReducedProblem& rp,
                         const std::vector<double>& lambdas,
                         const SigmaSolution& sigma);

/// Smallest lambda_init * growth^i (i = 0..max_doublings) whose P_lambda
/// solve is ok. Throws NumericalError kNotFound otherwise.
double find_lambda0(const ReducedProblem& rp, double lambda_init = 1.0,
                    double growth = 4.0, int max_doublings = 20);

/// P_lambda^{-1} as a Sigma solution (provenance lambda-limit).
SigmaSolution sigma_from_lambda(const RiccatiSolution& sol,
                                const ReducedProblem& rp);

}  // namespace bslq
