#include "bslq/oracle.hpp"

#include <cmath>
#include <sstream>

#include "bslq/errors.hpp"

namespace bslq {

namespace {

constexpr double kEigTol = 1e-12;

double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

MatrixXd implicit_factor(const TreeProblem& tp, int k) {
  const MatrixXd IA = MatrixXd::Identity(tp.n, tp.n) + tp.coeffs[k].A * tp.h;
  Eigen::FullPivLU<MatrixXd> lu(IA);
  if (!lu.isInvertible()) {
    std::ostringstream os;
    os << "I + A h singular at level " << k;
    throw NumericalError("oracle/solve_tree_exact",
                         NumericalCode::kSingularSystem, os.str(), k * tp.h);
  }
  return lu.inverse();
}

MatrixXd cost_block(const Coefficients& c) {
  const Eigen::Index n = c.Q.rows(), m = c.R22.rows();
  MatrixXd M(2 * n + m, 2 * n + m);
  M << c.Q, c.S1.transpose(), c.S2.transpose(), c.S1, c.R11, c.R12, c.S2,
      c.R21, c.R22;
  return M;
}

}  // namespace

const char* to_string(TreeStatus s) {
  switch (s) {
    case TreeStatus::kOk: return "ok";
    case TreeStatus::kIndefinite: return "indefinite";
    case TreeStatus::kSingularPsd: return "singular-psd";
  }
  return "?";
}

double TreeProblem::prob(int k, int j) const {
  return std::exp(log_binomial(k, j) - k * std::log(2.0));
}

TreeProblem build_tree(const ProblemData& p, const TerminalData& xi,
                       int depth) {
  if (depth < 2 || depth > 16) {
    throw ValidationError("oracle/build_tree", "depth must be in [2, 16]");
  }
  validate_terminal(p, xi);
  TreeProblem tp;
  tp.depth = depth;
  tp.T = p.grid.T();
  tp.h = tp.T / depth;
  tp.n = p.n;
  tp.m = p.m;
  tp.G = p.G;
  for (int k = 0; k < depth; ++k) tp.coeffs.push_back(p.at(k * tp.h));
  for (int j = 0; j <= depth; ++j) tp.leaves.push_back(xi.evaluate(tp.w(depth, j)));
  return tp;
}

double tree_cost(const TreeProblem& tp, const std::vector<VectorXd>& u,
                 std::vector<std::vector<VectorXd>>* Yout,
                 std::vector<std::vector<VectorXd>>* Zout) {
  const int N = tp.depth;
  if (static_cast<int>(u.size()) != tp.n_controls()) {
    throw ValidationError("oracle/tree_cost", "control count mismatch");
  }
  const double sh = std::sqrt(tp.h);
  std::vector<std::vector<VectorXd>> Y(N + 1), Z(N + 1);
  Y[N] = tp.leaves;
  Z[N].assign(N + 1, VectorXd::Zero(tp.n));
  double cost = 0.0;
  for (int k = N - 1; k >= 0; --k) {
    const Coefficients& c = tp.coeffs[k];
    const MatrixXd inv = implicit_factor(tp, k);
    const MatrixXd M = cost_block(c);
    Y[k].resize(k + 1);
    Z[k].resize(k + 1);
    for (int j = 0; j <= k; ++j) {
      const VectorXd& up = Y[k + 1][j + 1];
      const VectorXd& dn = Y[k + 1][j];
      const VectorXd& uk = u[TreeProblem::index(k, j)];
      Z[k][j] = (up - dn) / (2.0 * sh);
      Y[k][j] = inv * (0.5 * (up + dn) - (c.B * uk + c.C * Z[k][j]) * tp.h);
      VectorXd w(2 * tp.n + tp.m);
      w << Y[k][j], Z[k][j], uk;
      cost += tp.h * tp.prob(k, j) * w.dot(M * w);
    }
  }
  cost += Y[0][0].dot(tp.G * Y[0][0]);
  if (Yout) *Yout = std::move(Y);
  if (Zout) *Zout = std::move(Z);
  return cost;
}

TreeSolution solve_tree_exact(const TreeProblem& tp) {
  const int N = tp.depth, n = tp.n, m = tp.m;
  const int U = m * tp.n_controls();
  const int D = U + 1;  // last column: constant term
  const double sh = std::sqrt(tp.h);

  // Y and Z at each node as affine maps n x D of [u; 1].
  std::vector<MatrixXd> Ynext(N + 1);
  for (int j = 0; j <= N; ++j) {
    Ynext[j] = MatrixXd::Zero(n, D);
    Ynext[j].col(U) = tp.leaves[j];
  }
  MatrixXd Qf = MatrixXd::Zero(D, D);
  for (int k = N - 1; k >= 0; --k) {
    const Coefficients& c = tp.coeffs[k];
    const MatrixXd inv = implicit_factor(tp, k);
    const MatrixXd M = cost_block(c);
    std::vector<MatrixXd> Ycur(k + 1);
    for (int j = 0; j <= k; ++j) {
      const MatrixXd Z = (Ynext[j + 1] - Ynext[j]) / (2.0 * sh);
      MatrixXd Bu = MatrixXd::Zero(n, D);
      Bu.middleCols(m * TreeProblem::index(k, j), m) = c.B;
      Ycur[j] = inv * (0.5 * (Ynext[j + 1] + Ynext[j]) - (Bu + c.C * Z) * tp.h);
      MatrixXd Wm = MatrixXd::Zero(2 * n + m, D);
      Wm.topRows(n) = Ycur[j];
      Wm.middleRows(n, n) = Z;
      Wm.block(2 * n, m * TreeProblem::index(k, j), m, m) =
          MatrixXd::Identity(m, m);
      Qf.noalias() += (tp.h * tp.prob(k, j)) * Wm.transpose() * M * Wm;
    }
    Ynext = std::move(Ycur);
  }
  Qf.noalias() += Ynext[0].transpose() * tp.G * Ynext[0];
  Qf = 0.5 * (Qf + Qf.transpose()).eval();

  const MatrixXd H = Qf.topLeftCorner(U, U);
  const VectorXd g = Qf.topRightCorner(U, 1);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(H);
  const VectorXd& ev = es.eigenvalues();
  const double lmin = ev.minCoeff(), lmax = ev.cwiseAbs().maxCoeff();
  TreeSolution sol;
  sol.hessian_min_eig = lmin;
  sol.condition = lmin > 0.0 ? lmax / lmin : INFINITY;
  const double tol = kEigTol * std::max(lmax, 1e-300);
  VectorXd ustack;
  if (lmin > tol) {
    sol.status = TreeStatus::kOk;
    ustack = H.ldlt().solve(-g);
  } else {
    sol.status = lmin < -tol ? TreeStatus::kIndefinite : TreeStatus::kSingularPsd;
    // Minimum-norm stationary point through the eigenbasis.
    VectorXd rhs = es.eigenvectors().transpose() * (-g);
    for (Eigen::Index i = 0; i < rhs.size(); ++i) {
      rhs(i) = std::abs(ev(i)) > tol ? rhs(i) / ev(i) : 0.0;
    }
    ustack = es.eigenvectors() * rhs;
  }
  sol.gradient_norm = (H * ustack + g).norm();
  sol.u.resize(tp.n_controls());
  for (int i = 0; i < tp.n_controls(); ++i) sol.u[i] = ustack.segment(m * i, m);
  sol.cost = tree_cost(tp, sol.u, &sol.Y, &sol.Z);
  return sol;
}

ContinuousReference continuous_reference(const OptimalPipeline& pl) {
  ContinuousReference ref;
  ref.value = value_formula(pl.rp, pl.sigma, pl.bsde, pl.xi);
  const LoopGains& g = pl.gains[0];
  ref.u0 = g.uphi * pl.bsde.m[0] + g.ubeta * pl.bsde.N[0];
  return ref;
}

CompareTable compare(const ContinuousReference& ref,
                     const std::vector<int>& depths,
                     const std::vector<TreeSolution>& ladder) {
  if (depths.size() != ladder.size()) {
    throw ValidationError("oracle/compare", "depths and ladder differ in size");
  }
  CompareTable table;
  double last = INFINITY;
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    CompareRow r;
    r.depth = depths[i];
    r.status = ladder[i].status;
    r.tree_value = ladder[i].cost;
    r.value_gap = std::abs(r.tree_value - ref.value);
    r.u_gap = (ladder[i].u.front() - ref.u0).norm();
    r.included = r.status != TreeStatus::kIndefinite;
    if (r.included) {
      if (r.value_gap > last) {
        table.nonincreasing = false;
        table.diverging = true;
      }
      last = r.value_gap;
    }
    table.rows.push_back(r);
  }
  return table;
}

CompareTable oracle_ladder(const ProblemData& p, const TerminalData& xi,
                           const ContinuousReference& ref,
                           const std::vector<int>& depths) {
  std::vector<TreeSolution> ladder;
  for (int d : depths) ladder.push_back(solve_tree_exact(build_tree(p, xi, d)));
  return compare(ref, depths, ladder);
}

}  // namespace bslq
