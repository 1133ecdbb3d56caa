#pragma once

#include <vector>

#include "bslq/reduction.hpp"
#include "bslq/riccati.hpp"

namespace bslq {

/// Linear maps of the optimal closed loop at one node, all acting on
/// (X, phi, beta): X is the reduced adjoint with X(0) = 0.
///   dX = (KX X + Kphi phi + Kbeta beta) dt + (DX X + Dphi phi + Dbeta beta) dW
///   Y  = -Sigma X + phi
///   Z  = ZX X + Zphi phi + Zbeta beta
///   u  = uX X + uphi phi + ubeta beta       (original coordinates)
///   v  = vX X + vphi phi                    (reduced control)
struct LoopGains {
  MatrixXd KX, Kphi, Kbeta;
  MatrixXd DX, Dphi, Dbeta;
  MatrixXd Sigma;
  MatrixXd ZX, Zphi, Zbeta;
  MatrixXd uX, uphi, ubeta;
  MatrixXd vX, vphi;
  MatrixXd H;  // for the original-coordinate adjoint X - H Y
};

LoopGains loop_gains(const ReducedCoeffs& c, const MatrixXd& Sigma, double t);
std::vector<LoopGains> node_gains(const ReducedProblem& rp,
                                  const SigmaSolution& sigma);

/// Drift dphi = (F phi + L beta) dt + beta dW of the auxiliary BSDE:
/// F = A - B^H R22^{-1} S2H - C^H R(Sigma)^{-1} Sigma S1H, L = C^H R(Sigma)^{-1}.
struct BsdeDrift {
  MatrixXd F, L;
};
BsdeDrift bsde_drift(const ReducedCoeffs& c, const MatrixXd& Sigma, double t);

}  // namespace bslq
