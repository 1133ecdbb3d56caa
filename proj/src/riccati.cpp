#include "bslq/riccati.hpp"

#include <cmath>
#include <sstream>

#include "bslq/errors.hpp"

namespace bslq {

namespace {

constexpr double kBlowUp = 1e12;
constexpr double kMaxCondR = 1e12;
constexpr double kClip = 1e-10;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

MatrixXd sym(const MatrixXd& M) { return 0.5 * (M + M.transpose()); }

double cond_of(const MatrixXd& M) {
  Eigen::JacobiSVD<MatrixXd> svd(M);
  const auto& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  return smin > 0.0 ? s(0) / smin : INFINITY;
}

void check_rsigma(const SigmaTerms& st, double t) {
  if (!(st.det > 0.0) || !(st.cond <= kMaxCondR)) {
    std::ostringstream os;
    os << "R(Sigma) = I + Sigma R11H not uniformly invertible at t = " << t
       << " (cond " << st.cond << ", det " << st.det << ")";
    throw NumericalError("riccati/solve_sigma", NumericalCode::kSingularRSigma,
                         os.str(), t);
  }
}

/// Fourth-order finite-difference derivative and value at the midpoint of
/// interval k: centered four-node stencils inside, one-sided five-node
/// stencils on the first and last interval.
template <class Nodes>
void midpoint_fd(const Nodes& y, int k, double h, MatrixXd& value,
                 MatrixXd& deriv) {
  const int n = static_cast<int>(y.size()) - 1;
  if (n < 4) {
    value = 0.5 * (y[k] + y[k + 1]);
    deriv = (y[k + 1] - y[k]) / h;
    return;
  }
  if (k == 0) {
    value = (35 * y[0] + 140 * y[1] - 70 * y[2] + 28 * y[3] - 5 * y[4]) / 128.0;
    deriv = (-22 * y[0] + 17 * y[1] + 9 * y[2] - 5 * y[3] + y[4]) / (24.0 * h);
  } else if (k == n - 1) {
    value = (-5 * y[n - 4] + 28 * y[n - 3] - 70 * y[n - 2] + 140 * y[n - 1] +
             35 * y[n]) / 128.0;
    deriv = (-y[n - 4] + 5 * y[n - 3] - 9 * y[n - 2] - 17 * y[n - 1] +
             22 * y[n]) / (24.0 * h);
  } else {
    value = (-y[k - 1] + 9 * y[k] + 9 * y[k + 1] - y[k + 2]) / 16.0;
    deriv = (y[k - 1] - 27 * y[k] + 27 * y[k + 1] - y[k + 2]) / (24.0 * h);
  }
}

template <class Rhs>
ResidualReport residual_of(const std::vector<MatrixXd>& y,
                           const ReducedProblem& rp, Rhs rhs) {
  const TimeGrid& g = rp.grid();
  if (static_cast<int>(y.size()) != g.n_nodes()) {
    throw ValidationError("riccati/riccati_residual", "grid mismatch");
  }
  ResidualReport r;
  r.per_interval.resize(g.n_steps());
  for (int k = 0; k < g.n_steps(); ++k) {
    MatrixXd value, deriv;
    midpoint_fd(y, k, g.h(), value, deriv);
    const double res = (deriv - rhs(rp.on_step(k, 0.5), value)).norm();
    r.per_interval[k] = res;
    if (!(res <= r.sup)) r.sup = std::isnan(res) ? res : std::max(r.sup, res);
  }
  return r;
}

}  // namespace

const char* to_string(RiccatiStatus s) {
  switch (s) {
    case RiccatiStatus::kOk: return "ok";
    case RiccatiStatus::kBlockConditionViolated:
      return "block-condition-violated";
    case RiccatiStatus::kBlowUp: return "blow-up";
  }
  return "?";
}

SigmaTerms sigma_terms(const ReducedCoeffs& c, const MatrixXd& Sigma) {
  const Eigen::Index n = Sigma.rows();
  SigmaTerms st;
  st.BH = c.B + Sigma * c.S2H.transpose();
  st.CH = c.C + Sigma * c.S1H.transpose();
  st.R = MatrixXd::Identity(n, n) + Sigma * c.R11H;
  st.lu.compute(st.R);
  st.det = st.lu.determinant();
  st.cond = cond_of(st.R);
  return st;
}

MatrixXd sigma_rhs(const ReducedCoeffs& c, const MatrixXd& Sigma) {
  const SigmaTerms st = sigma_terms(c, Sigma);
  const MatrixXd RinvS = st.lu.solve(Sigma);
  return c.A * Sigma + Sigma * c.A.transpose() -
         st.BH * c.R22inv * st.BH.transpose() -
         st.CH * RinvS * st.CH.transpose();
}

MatrixXd p_rhs(const ReducedCoeffs& c, const MatrixXd& P) {
  const MatrixXd M1 = c.C.transpose() * P + c.S1H;
  const MatrixXd M2 = c.B.transpose() * P + c.S2H;
  const MatrixXd D1 = c.R11H + P;
  const MatrixXd X1 = D1.ldlt().solve(M1);
  return -P * c.A - c.A.transpose() * P + M1.transpose() * X1 +
         M2.transpose() * c.R22inv * M2;
}

RiccatiSolution solve_forward_riccati(const ReducedProblem& rp, double lambda) {
  if (!(lambda > 0.0)) {
    throw ValidationError("riccati/solve_forward_riccati", "lambda must be > 0");
  }
  const TimeGrid& g = rp.grid();
  const int N = g.n_steps(), n = rp.n();
  const double h = g.h();
  RiccatiSolution sol;
  sol.grid = g;
  sol.lambda = lambda;
  sol.P.assign(g.n_nodes(), MatrixXd::Constant(n, n, kNaN));
  sol.block_min_eig.assign(g.n_nodes(), kNaN);

  auto block_eig = [](const ReducedCoeffs& c, const MatrixXd& P) {
    return std::min(min_eigenvalue(c.R11H + P), min_eigenvalue(c.R22));
  };
  auto fail = [&](RiccatiStatus s, double t) {
    sol.status = s;
    sol.failure_time = t;
    return sol;
  };

  sol.P[N] = lambda * MatrixXd::Identity(n, n);
  sol.block_min_eig[N] = block_eig(rp.at_node(N), sol.P[N]);
  if (!(sol.block_min_eig[N] > 0.0)) {
    return fail(RiccatiStatus::kBlockConditionViolated, g.T());
  }
  for (int k = N - 1; k >= 0; --k) {
    const ReducedCoeffs c1 = rp.on_step(k, 1.0), cm = rp.on_step(k, 0.5),
                        c0 = rp.on_step(k, 0.0);
    const MatrixXd& P1 = sol.P[k + 1];
    const double tm = g.t(k) + 0.5 * h;
    const MatrixXd k1 = p_rhs(c1, P1);
    const MatrixXd Y2 = P1 - 0.5 * h * k1;
    if (!(block_eig(cm, Y2) > 0.0)) {
      return fail(RiccatiStatus::kBlockConditionViolated, tm);
    }
    const MatrixXd k2 = p_rhs(cm, Y2);
    const MatrixXd Y3 = P1 - 0.5 * h * k2;
    if (!(block_eig(cm, Y3) > 0.0)) {
      return fail(RiccatiStatus::kBlockConditionViolated, tm);
    }
    const MatrixXd k3 = p_rhs(cm, Y3);
    const MatrixXd Y4 = P1 - h * k3;
    if (!(block_eig(c0, Y4) > 0.0)) {
      return fail(RiccatiStatus::kBlockConditionViolated, g.t(k));
    }
    const MatrixXd k4 = p_rhs(c0, Y4);
    MatrixXd Pk = sym(P1 - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    if (!Pk.allFinite() || Pk.norm() > kBlowUp) {
      return fail(RiccatiStatus::kBlowUp, g.t(k));
    }
    sol.P[k] = std::move(Pk);
    sol.block_min_eig[k] = block_eig(rp.at_node(k), sol.P[k]);
    if (!(sol.block_min_eig[k] > 0.0)) {
      return fail(RiccatiStatus::kBlockConditionViolated, g.t(k));
    }
  }
  return sol;
}

MatrixXd SigmaSolution::on_step(int k, double theta) const {
  if (theta == 0.0) return Sigma[k];
  if (theta == 1.0) return Sigma[k + 1];
  const double h = grid.h();
  const double s = theta, s2 = s * s, s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * Sigma[k] + (s3 - 2 * s2 + s) * h * dot_left[k] +
         (-2 * s3 + 3 * s2) * Sigma[k + 1] + (s3 - s2) * h * dot_right[k];
}

namespace {

void fill_hermite_data(SigmaSolution& sol, const ReducedProblem& rp) {
  const int N = sol.grid.n_steps();
  sol.dot_left.resize(N);
  sol.dot_right.resize(N);
  for (int k = 0; k < N; ++k) {
    sol.dot_left[k] = sigma_rhs(rp.on_step(k, 0.0), sol.Sigma[k]);
    sol.dot_right[k] = sigma_rhs(rp.on_step(k, 1.0), sol.Sigma[k + 1]);
  }
}

}  // namespace

SigmaSolution solve_sigma(const ReducedProblem& rp) {
  const TimeGrid& g = rp.grid();
  const int N = g.n_steps(), n = rp.n();
  const double h = g.h();
  SigmaSolution sol;
  sol.grid = g;
  sol.Sigma.resize(g.n_nodes());
  sol.RSigma_cond.resize(g.n_nodes());
  sol.Sigma[N] = MatrixXd::Zero(n, n);
  sol.RSigma_cond[N] = 1.0;
  sol.min_eig = 0.0;

  auto rhs_checked = [&](const ReducedCoeffs& c, const MatrixXd& S, double t) {
    const SigmaTerms st = sigma_terms(c, S);
    check_rsigma(st, t);
    const MatrixXd RinvS = st.lu.solve(S);
    return MatrixXd(c.A * S + S * c.A.transpose() -
                    st.BH * c.R22inv * st.BH.transpose() -
                    st.CH * RinvS * st.CH.transpose());
  };

  for (int k = N - 1; k >= 0; --k) {
    const ReducedCoeffs c1 = rp.on_step(k, 1.0), cm = rp.on_step(k, 0.5),
                        c0 = rp.on_step(k, 0.0);
    const double t1 = g.t(k + 1), tm = g.t(k) + 0.5 * h, t0 = g.t(k);
    const MatrixXd& S1 = sol.Sigma[k + 1];
    const MatrixXd k1 = rhs_checked(c1, S1, t1);
    const MatrixXd k2 = rhs_checked(cm, S1 - 0.5 * h * k1, tm);
    const MatrixXd k3 = rhs_checked(cm, S1 - 0.5 * h * k2, tm);
    const MatrixXd k4 = rhs_checked(c0, S1 - h * k3, t0);
    MatrixXd Sk = sym(S1 - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    if (!Sk.allFinite() || Sk.norm() > kBlowUp) {
      throw NumericalError("riccati/solve_sigma", NumericalCode::kBlowUp,
                           "Sigma blew up", t0);
    }
    // Clip roundoff-level negative eigenvalues; larger violations stay and
    // are reported through min_eig.
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(Sk);
    VectorXd ev = es.eigenvalues();
    sol.min_eig = std::min(sol.min_eig, ev.minCoeff());
    bool clipped = false;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
      if (ev(i) < 0.0 && ev(i) >= -kClip) {
        ev(i) = 0.0;
        clipped = true;
      }
    }
    if (clipped) {
      Sk = sym(es.eigenvectors() * ev.asDiagonal() *
               es.eigenvectors().transpose());
    }
    const SigmaTerms st = sigma_terms(rp.at_node(k), Sk);
    check_rsigma(st, t0);
    sol.RSigma_cond[k] = st.cond;
    sol.Sigma[k] = std::move(Sk);
  }
  fill_hermite_data(sol, rp);
  sol.residual_sup = riccati_residual(sol, rp).sup;
  return sol;
}

SigmaSolution sigma_from_lambda(const RiccatiSolution& P,
                                const ReducedProblem& rp) {
  if (P.status != RiccatiStatus::kOk) {
    throw NumericalError("riccati/sigma_from_lambda", NumericalCode::kNotFound,
                         "P_lambda solve was not ok");
  }
  SigmaSolution sol;
  sol.grid = P.grid;
  sol.provenance = SigmaProvenance::kLambdaLimit;
  const int nodes = P.grid.n_nodes();
  sol.Sigma.resize(nodes);
  sol.RSigma_cond.resize(nodes);
  sol.min_eig = INFINITY;
  for (int k = 0; k < nodes; ++k) {
    sol.Sigma[k] = sym(P.P[k].inverse());
    sol.min_eig = std::min(sol.min_eig, min_eigenvalue(sol.Sigma[k]));
    sol.RSigma_cond[k] = sigma_terms(rp.at_node(k), sol.Sigma[k]).cond;
  }
  fill_hermite_data(sol, rp);
  sol.residual_sup = riccati_residual(sol, rp).sup;
  return sol;
}

ResidualReport riccati_residual(const SigmaSolution& sol,
                                const ReducedProblem& rp) {
  return residual_of(sol.Sigma, rp, [](const ReducedCoeffs& c,
                                       const MatrixXd& S) {
    return sigma_rhs(c, S);
  });
}

ResidualReport riccati_residual(const RiccatiSolution& sol,
                                const ReducedProblem& rp) {
  return residual_of(sol.P, rp, [](const ReducedCoeffs& c, const MatrixXd& P) {
    return p_rhs(c, P);
  });
}

SweepReport lambda_sweep(const ReducedProblem& rp,
                         const std::vector<double>& lambdas) {
  return lambda_sweep(rp, lambdas, solve_sigma(rp));
}

SweepReport lambda_sweep(const ReducedProblem& rp,
                         const std::vector<double>& lambdas,
                         const SigmaSolution& sigma) {
  if (lambdas.size() < 2) {
    throw ValidationError("riccati/lambda_sweep", "need at least two lambdas");
  }
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > 0.0) || (i > 0 && !(lambdas[i] > lambdas[i - 1]))) {
      throw ValidationError("riccati/lambda_sweep",
                            "lambdas must be positive and increasing");
    }
  }
  SweepReport rep;
  const RiccatiSolution* prev = nullptr;
  std::vector<RiccatiSolution> sols;
  sols.reserve(lambdas.size());
  double last_gap = INFINITY;
  for (double lam : lambdas) {
    sols.push_back(solve_forward_riccati(rp, lam));
    const RiccatiSolution& s = sols.back();
    SweepEntry e;
    e.lambda = lam;
    e.status = s.status;
    if (s.status == RiccatiStatus::kOk) {
      e.sup_inverse_gap = 0.0;
      for (int k = 0; k < s.grid.n_nodes(); ++k) {
        e.sup_inverse_gap = std::max(
            e.sup_inverse_gap, (s.P[k].inverse() - sigma.Sigma[k]).norm());
      }
      if (prev != nullptr) {
        double gap = INFINITY;
        for (int k = 0; k < s.grid.n_nodes(); ++k) {
          gap = std::min(gap, min_eigenvalue(s.P[k] - prev->P[k]));
        }
        e.min_monotone_gap = gap;
        if (!(gap > -1e-8)) rep.monotone = false;
        if (!(e.sup_inverse_gap < last_gap)) rep.gap_strictly_decreasing = false;
      }
      last_gap = e.sup_inverse_gap;
      prev = &s;
    } else {
      e.sup_inverse_gap = kNaN;
    }
    rep.entries.push_back(e);
  }
  return rep;
}

double find_lambda0(const ReducedProblem& rp, double lambda_init,
                    double growth, int max_doublings) {
  if (!(lambda_init > 0.0) || !(growth > 1.0) || max_doublings < 0) {
    throw ValidationError("riccati/find_lambda0", "bad search parameters");
  }
  double lam = lambda_init;
  for (int i = 0; i <= max_doublings; ++i, lam *= growth) {
    if (solve_forward_riccati(rp, lam).status == RiccatiStatus::kOk) return lam;
  }
  std::ostringstream os;
  os << "no lambda in [" << lambda_init << ", " << lam / growth
     << "] satisfies the block condition; uniform convexity likely fails";
  throw NumericalError("riccati/find_lambda0", NumericalCode::kNotFound,
                       os.str());
}

}  // namespace bslq
