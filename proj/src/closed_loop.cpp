#include "bslq/closed_loop.hpp"

#include <sstream>

#include "bslq/errors.hpp"

namespace bslq {

namespace {

void require_invertible(const SigmaTerms& st, double t) {
  if (!(st.det > 0.0) || !(st.cond <= 1e12)) {
    std::ostringstream os;
    os << "R(Sigma) singular at t = " << t;
    throw NumericalError("closed_loop/loop_gains",
                         NumericalCode::kSingularRSigma, os.str(), t);
  }
}

}  // namespace

LoopGains loop_gains(const ReducedCoeffs& c, const MatrixXd& Sigma, double t) {
  const SigmaTerms st = sigma_terms(c, Sigma);
  require_invertible(st, t);
  const Eigen::Index n = Sigma.rows();
  const MatrixXd I = MatrixXd::Identity(n, n);
  const MatrixXd Rinv = st.lu.solve(I);
  const MatrixXd RinvS = Rinv * Sigma;
  const MatrixXd S1t = c.S1H.transpose();
  const MatrixXd S2t = c.S2H.transpose();

  LoopGains g;
  g.KX = S1t * RinvS * st.CH.transpose() +
         S2t * c.R22inv * st.BH.transpose() - c.A.transpose();
  g.Kphi = -(S1t * RinvS * c.S1H + S2t * c.R22inv * c.S2H);
  g.Kbeta = S1t * Rinv;
  const MatrixXd RinvT = Rinv.transpose();
  g.DX = -RinvT * st.CH.transpose();
  g.Dphi = RinvT * c.S1H;
  g.Dbeta = RinvT * c.R11H;
  g.Sigma = Sigma;
  g.ZX = RinvS * st.CH.transpose();
  g.Zphi = -RinvS * c.S1H;
  g.Zbeta = Rinv;
  g.vX = c.R22inv * st.BH.transpose();
  g.vphi = -c.R22inv * c.S2H;
  const MatrixXd back = c.R22inv * c.R21;  // u = v - R22^{-1} R21 Z
  g.uX = g.vX - back * g.ZX;
  g.uphi = g.vphi - back * g.Zphi;
  g.ubeta = -back * g.Zbeta;
  g.H = c.H;
  return g;
}

std::vector<LoopGains> node_gains(const ReducedProblem& rp,
                                  const SigmaSolution& sigma) {
  const TimeGrid& grid = rp.grid();
  std::vector<LoopGains> out;
  out.reserve(grid.n_nodes());
  for (int k = 0; k < grid.n_nodes(); ++k) {
    out.push_back(loop_gains(rp.at_node(k), sigma.Sigma[k], grid.t(k)));
  }
  return out;
}

BsdeDrift bsde_drift(const ReducedCoeffs& c, const MatrixXd& Sigma, double t) {
  const SigmaTerms st = sigma_terms(c, Sigma);
  require_invertible(st, t);
  const MatrixXd Rinv = st.lu.solve(MatrixXd::Identity(Sigma.rows(), Sigma.rows()));
  BsdeDrift d;
  d.L = st.CH * Rinv;
  d.F = c.A - st.BH * c.R22inv * c.S2H - d.L * Sigma * c.S1H;
  return d;
}

}  // namespace bslq
