#include "bslq/reduction.hpp"

#include <cmath>
#include <sstream>

#include "bslq/errors.hpp"

namespace bslq {

namespace {

constexpr double kMaxCond = 1e12;

MatrixXd sym(const MatrixXd& M) { return 0.5 * (M + M.transpose()); }

MatrixXd h_rhs(const MatrixXd& H, const MatrixXd& A, const MatrixXd& Q) {
  return -(H * A + A.transpose() * H + Q);
}

}  // namespace

MatrixXd invert_r22(const MatrixXd& R22, double t) {
  Eigen::JacobiSVD<MatrixXd> svd(R22);
  const auto& s = svd.singularValues();
  const double smax = s(0), smin = s(s.size() - 1);
  if (!(smin > 0.0) || smax / smin > kMaxCond) {
    std::ostringstream os;
    os << "R22 numerically singular at t = " << t << " (cond "
       << (smin > 0.0 ? smax / smin : INFINITY) << ")";
    throw NumericalError("reduction/reduce_problem", NumericalCode::kSingularR22,
                         os.str(), t);
  }
  const MatrixXd I = MatrixXd::Identity(R22.rows(), R22.cols());
  Eigen::LLT<MatrixXd> llt(R22);
  if (llt.info() == Eigen::Success) return sym(llt.solve(I));
  return R22.fullPivLu().solve(I);
}

CoefficientPath solve_H(const ProblemData& p) {
  const TimeGrid& g = p.grid;
  const double h = g.h();
  std::vector<MatrixXd> H(g.n_nodes());
  H[0] = -p.G;
  for (int k = 0; k < g.n_steps(); ++k) {
    const MatrixXd A0 = p.A.on_step(k, 0.0), Q0 = p.Q.on_step(k, 0.0);
    const MatrixXd Am = p.A.on_step(k, 0.5), Qm = p.Q.on_step(k, 0.5);
    const MatrixXd A1 = p.A.on_step(k, 1.0), Q1 = p.Q.on_step(k, 1.0);
    const MatrixXd& Hk = H[k];
    const MatrixXd k1 = h_rhs(Hk, A0, Q0);
    const MatrixXd k2 = h_rhs(Hk + 0.5 * h * k1, Am, Qm);
    const MatrixXd k3 = h_rhs(Hk + 0.5 * h * k2, Am, Qm);
    const MatrixXd k4 = h_rhs(Hk + h * k3, A1, Q1);
    H[k + 1] = sym(Hk + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    if (!H[k + 1].allFinite()) {
      throw NumericalError("reduction/solve_H", NumericalCode::kBlowUp,
                           "non-finite H", g.t(k + 1));
    }
  }
  return CoefficientPath(g, std::move(H), p.interpolation);
}

ReducedProblem reduce_problem(const ProblemData& p) {
  ReducedProblem rp;
  rp.base = std::make_shared<const ProblemData>(p);
  rp.H = solve_H(p);
  const TimeGrid& g = p.grid;
  const int nodes = g.n_nodes();
  std::vector<MatrixXd> sC(nodes), S1H(nodes), S2H(nodes), R11H(nodes),
      R22inv(nodes);
  for (int k = 0; k < nodes; ++k) {
    const Coefficients c = p.at_node(k);
    const MatrixXd Rinv = invert_r22(c.R22, g.t(k));
    const MatrixXd& H = rp.H.node(k);
    R22inv[k] = Rinv;
    sC[k] = c.C - c.B * Rinv * c.R21;
    S1H[k] = c.S1 - c.R12 * Rinv * c.S2 + sC[k].transpose() * H;
    S2H[k] = c.S2 + c.B.transpose() * H;
    R11H[k] = sym(c.R11 - c.R12 * Rinv * c.R21 + H);
  }
  rp.sC = CoefficientPath(g, std::move(sC), p.interpolation);
  rp.S1H = CoefficientPath(g, std::move(S1H), p.interpolation);
  rp.S2H = CoefficientPath(g, std::move(S2H), p.interpolation);
  rp.R11H = CoefficientPath(g, std::move(R11H), p.interpolation);
  rp.R22 = p.R22;
  rp.R22inv = CoefficientPath(g, std::move(R22inv), p.interpolation);

  rp.Hdot_left.resize(g.n_steps());
  rp.Hdot_right.resize(g.n_steps());
  for (int k = 0; k < g.n_steps(); ++k) {
    rp.Hdot_left[k] = h_rhs(rp.H.node(k), p.A.on_step(k, 0.0),
                            p.Q.on_step(k, 0.0));
    rp.Hdot_right[k] = h_rhs(rp.H.node(k + 1), p.A.on_step(k, 1.0),
                             p.Q.on_step(k, 1.0));
  }
  return rp;
}

namespace {

ReducedCoeffs assemble(const Coefficients& c, const MatrixXd& H, double t) {
  ReducedCoeffs r;
  r.A = c.A;
  r.B = c.B;
  r.R22 = c.R22;
  r.R22inv = invert_r22(c.R22, t);
  r.R21 = c.R21;
  r.H = H;
  r.C = c.C - c.B * r.R22inv * c.R21;
  r.S1H = c.S1 - c.R12 * r.R22inv * c.S2 + r.C.transpose() * H;
  r.S2H = c.S2 + c.B.transpose() * H;
  r.R11H = sym(c.R11 - c.R12 * r.R22inv * c.R21 + H);
  return r;
}

}  // namespace

ReducedCoeffs ReducedProblem::on_step(int k, double theta) const {
  const double h = grid().h();
  MatrixXd H;
  if (theta == 0.0) {
    H = this->H.node(k);
  } else if (theta == 1.0) {
    H = this->H.node(k + 1);
  } else {
    const double s = theta, s2 = s * s, s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
    H = h00 * this->H.node(k) + h10 * h * Hdot_left[k] +
        h01 * this->H.node(k + 1) + h11 * h * Hdot_right[k];
  }
  return assemble(base->on_step(k, theta), H, grid().t(k) + theta * h);
}

ReducedCoeffs ReducedProblem::at_node(int k) const {
  ReducedCoeffs r;
  const Coefficients c = base->at_node(k);
  r.A = c.A;
  r.B = c.B;
  r.R22 = c.R22;
  r.R22inv = R22inv.node(k);
  r.R21 = c.R21;
  r.H = H.node(k);
  r.C = sC.node(k);
  r.S1H = S1H.node(k);
  r.S2H = S2H.node(k);
  r.R11H = R11H.node(k);
  return r;
}

double ReducedProblem::terminal_shift(const TerminalData& xi) const {
  if (xi.kind != TerminalData::Kind::kAffine) {
    throw ValidationError("reduction/terminal_shift",
                          "closed-form shift needs affine terminal data");
  }
  const MatrixXd& HT = H.node(grid().n_steps());
  return xi.a.dot(HT * xi.a) + grid().T() * xi.b.dot(HT * xi.b);
}

double ReducedProblem::terminal_shift(const VectorXd& x) const {
  return x.dot(H.node(grid().n_steps()) * x);
}

ProblemData ReducedProblem::as_problem() const {
  const ProblemData& p = *base;
  const TimeGrid& g = p.grid;
  const int n = p.n, m = p.m;
  auto zero = [&](Eigen::Index r, Eigen::Index c) {
    return CoefficientPath::constant(g, MatrixXd::Zero(r, c), p.interpolation);
  };
  // S1 is already shifted; R11H too. S2 of the normal form is S2H.
  ProblemData out(n, m, g, p.interpolation, p.A, p.B, sC,
                  MatrixXd::Zero(n, n), zero(n, n), S1H, S2H, R11H, zero(n, m),
                  p.R22);
  return out;
}

VectorXd map_control_back(const VectorXd& v, const VectorXd& Z,
                          const ProblemData& p, int k) {
  if (v.size() != p.m || Z.size() != p.n) {
    throw ValidationError("reduction/map_control_back", "shape mismatch");
  }
  const MatrixXd Rinv = invert_r22(p.R22.node(k), p.grid.t(k));
  return v - Rinv * (p.R12.node(k).transpose() * Z);
}

std::vector<VectorXd> map_control_back(const std::vector<VectorXd>& v,
                                       const std::vector<VectorXd>& Z,
                                       const ProblemData& p) {
  if (static_cast<int>(v.size()) != p.grid.n_nodes() || v.size() != Z.size()) {
    throw ValidationError("reduction/map_control_back",
                          "paths must have one entry per grid node");
  }
  std::vector<VectorXd> u(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) {
    u[k] = map_control_back(v[k], Z[k], p, static_cast<int>(k));
  }
  return u;
}

}  // namespace bslq
