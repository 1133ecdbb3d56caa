#include "bslq/simulate.hpp"

#include <cmath>
#include <sstream>

#include "bslq/errors.hpp"

namespace bslq {

namespace {

/// Block cost matrix [Q S1' S2'; S1 R11 R12; S2 R21 R22] at one node.
MatrixXd cost_block(const Coefficients& c) {
  const Eigen::Index n = c.Q.rows(), m = c.R22.rows();
  MatrixXd M(2 * n + m, 2 * n + m);
  M << c.Q, c.S1.transpose(), c.S2.transpose(), c.S1, c.R11, c.R12, c.S2,
      c.R21, c.R22;
  return M;
}

double trap_weight(int k, const TimeGrid& g) {
  return (k == 0 || k == g.n_steps()) ? 0.5 * g.h() : g.h();
}

void require_affine(const TerminalData& xi, const char* where) {
  if (xi.kind != TerminalData::Kind::kAffine) {
    throw ValidationError(where, "requires affine terminal data");
  }
}

/// Per-thread scratch for one optimal path.
struct PathScratch {
  std::vector<double> dW, W;
  VectorXd X, phi, Y, Z, u, v, drift, diff, w, Mw, Yf, res, Xstar;
};

/// Node data of the optimal loop that does not depend on the path.
struct LoopNode {
  const LoopGains* g;
  VectorXd Zb, ub, Kb, Db;  // beta-terms (beta = N_k is deterministic)
  MatrixXd M;               // original cost block
  Coefficients c;
};

std::vector<LoopNode> loop_nodes(const OptimalPipeline& pl) {
  const TimeGrid& grid = pl.grid();
  std::vector<LoopNode> out(grid.n_nodes());
  for (int k = 0; k < grid.n_nodes(); ++k) {
    const LoopGains& g = pl.gains[k];
    const VectorXd& N = pl.bsde.N[k];
    LoopNode& L = out[k];
    L.g = &g;
    L.Zb = g.Zbeta * N;
    L.ub = g.ubeta * N;
    L.Kb = g.Kbeta * N;
    L.Db = g.Dbeta * N;
    L.c = pl.problem().at_node(k);
    L.M = cost_block(L.c);
  }
  return out;
}

/// Value of the optimal loop at node k given X (updates Y, Z, u, v, phi).
void loop_outputs(const LoopNode& L, const AffineBsdeSolution& bsde, int k,
                  double W, PathScratch& s) {
  const LoopGains& g = *L.g;
  s.phi = bsde.m[k] + bsde.N[k] * W;
  s.Y = s.phi;
  s.Y.noalias() -= g.Sigma * s.X;
  s.Z = L.Zb;
  s.Z.noalias() += g.ZX * s.X;
  s.Z.noalias() += g.Zphi * s.phi;
  s.u = L.ub;
  s.u.noalias() += g.uX * s.X;
  s.u.noalias() += g.uphi * s.phi;
  s.v.noalias() = g.vX * s.X;
  s.v.noalias() += g.vphi * s.phi;
}

void loop_step(const LoopNode& L, double h, double dW, PathScratch& s) {
  const LoopGains& g = *L.g;
  s.drift = L.Kb;
  s.drift.noalias() += g.KX * s.X;
  s.drift.noalias() += g.Kphi * s.phi;
  s.diff = L.Db;
  s.diff.noalias() += g.DX * s.X;
  s.diff.noalias() += g.Dphi * s.phi;
  s.X += h * s.drift + dW * s.diff;
}

double quad(const MatrixXd& M, PathScratch& s, const VectorXd& Y,
            const VectorXd& Z, const VectorXd& u) {
  const Eigen::Index n = Y.size(), m = u.size();
  s.w.resize(2 * n + m);
  s.w << Y, Z, u;
  s.Mw.noalias() = M * s.w;
  return s.w.dot(s.Mw);
}

/// Backward RK4 for ydot = A y + B v(t) + extra(t), y(T) = yT, with v and
/// extra linear between nodes.
Path solve_linear_backward(const ProblemData& p, const VectorXd& yT,
                           const std::function<VectorXd(int, double)>& forcing) {
  const TimeGrid& g = p.grid;
  const double h = g.h();
  Path y(g.n_nodes());
  y[g.n_steps()] = yT;
  for (int k = g.n_steps() - 1; k >= 0; --k) {
    auto f = [&](double th, const VectorXd& x) -> VectorXd {
      return p.A.on_step(k, th) * x + forcing(k, th);
    };
    const VectorXd& y1 = y[k + 1];
    const VectorXd k1 = f(1.0, y1);
    const VectorXd k2 = f(0.5, y1 - 0.5 * h * k1);
    const VectorXd k3 = f(0.5, y1 - 0.5 * h * k2);
    const VectorXd k4 = f(0.0, y1 - h * k3);
    y[k] = y1 - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return y;
}

VectorXd lerp_node(const Path& v, int k, double th, Eigen::Index dim) {
  if (v.empty()) return VectorXd::Zero(dim);
  if (th == 0.0) return v[k];
  if (th == 1.0) return v[k + 1];
  return (1.0 - th) * v[k] + th * v[k + 1];
}

void check_path(const Path& v, const TimeGrid& g, Eigen::Index dim,
                const char* where) {
  if (v.empty()) return;
  if (static_cast<int>(v.size()) != g.n_nodes()) {
    throw ValidationError(where, "control path needs one entry per node");
  }
  for (const auto& x : v) {
    if (x.size() != dim) throw ValidationError(where, "control dimension");
  }
}

/// Running cost along Y = y0 + y1 W, Z = y1, u = c + d W at node k is
/// alpha + beta W + gamma W^2.
struct QuadraticInW {
  std::vector<double> alpha, beta, gamma;
  double initial = 0.0;  // <G y0(0), y0(0)>
};

QuadraticInW affine_cost_profile(const ProblemData& p, const AffineState& st,
                                 const AffineFeedbackPolicy& pol) {
  const TimeGrid& g = p.grid;
  QuadraticInW q;
  q.alpha.resize(g.n_nodes());
  q.beta.resize(g.n_nodes());
  q.gamma.resize(g.n_nodes());
  const Eigen::Index n = p.n, m = p.m;
  for (int k = 0; k < g.n_nodes(); ++k) {
    const MatrixXd M = cost_block(p.at_node(k));
    VectorXd w0(2 * n + m), w1(2 * n + m);
    const VectorXd c = pol.c.empty() ? VectorXd::Zero(m) : pol.c[k];
    const VectorXd d = pol.d.empty() ? VectorXd::Zero(m) : pol.d[k];
    w0 << st.y0[k], st.y1[k], c;
    w1 << st.y1[k], VectorXd::Zero(n), d;
    q.alpha[k] = w0.dot(M * w0);
    q.beta[k] = 2.0 * w0.dot(M * w1);
    q.gamma[k] = w1.dot(M * w1);
  }
  q.initial = st.y0[0].dot(p.G * st.y0[0]);
  return q;
}

double eval_profile(const QuadraticInW& q, const TimeGrid& g,
                    const std::vector<double>& W) {
  double s = q.initial;
  for (int k = 0; k < g.n_nodes(); ++k) {
    s += trap_weight(k, g) * (q.alpha[k] + W[k] * (q.beta[k] + W[k] * q.gamma[k]));
  }
  return s;
}

}  // namespace

std::vector<Coefficients> node_coefficients(const ProblemData& p) {
  std::vector<Coefficients> out;
  out.reserve(p.grid.n_nodes());
  for (int k = 0; k < p.grid.n_nodes(); ++k) out.push_back(p.at_node(k));
  return out;
}

double running_cost(const Coefficients& c, const VectorXd& Y, const VectorXd& Z,
                    const VectorXd& u) {
  return Y.dot(c.Q * Y) + 2.0 * Z.dot(c.S1 * Y) + 2.0 * u.dot(c.S2 * Y) +
         Z.dot(c.R11 * Z) + 2.0 * Z.dot(c.R12 * u) + u.dot(c.R22 * u);
}

double path_cost(const ProblemData& p, const std::vector<Coefficients>& nodes,
                 const Path& Y, const Path& Z, const Path& u) {
  double s = Y[0].dot(p.G * Y[0]);
  for (int k = 0; k < p.grid.n_nodes(); ++k) {
    s += trap_weight(k, p.grid) * running_cost(nodes[k], Y[k], Z[k], u[k]);
  }
  return s;
}

OptimalPipeline build_pipeline(const ProblemData& p, const TerminalData& xi) {
  const ValidationReport rep = validate_problem(p);
  if (!rep.ok) {
    std::string msg;
    for (const auto& f : rep.findings) {
      if (f.severity == Severity::kError) msg += f.code + " (" + f.message + ") ";
    }
    throw ValidationError("core_types/validate_problem", msg);
  }
  validate_terminal(p, xi);
  require_affine(xi, "simulate/build_pipeline");
  OptimalPipeline pl;
  pl.rp = reduce_problem(p);
  pl.sigma = solve_sigma(pl.rp);
  pl.bsde = solve_affine_terminal(pl.rp, pl.sigma, xi.a, xi.b);
  pl.xi = xi;
  pl.gains = node_gains(pl.rp, pl.sigma);
  return pl;
}

SimulationResult simulate_optimal(const OptimalPipeline& pl,
                                  const BrownianBatch& batch, SimOptions opt) {
  const TimeGrid& g = pl.grid();
  if (!(batch.grid() == g)) {
    throw ValidationError("simulate/simulate_optimal", "batch grid mismatch");
  }
  const ProblemData& p = pl.problem();
  const int P = batch.n_paths(), N = g.n_steps();
  const int stored = opt.stored_paths < 0 ? P : std::min(opt.stored_paths, P);
  const std::vector<LoopNode> nodes = loop_nodes(pl);

  SimulationResult r;
  r.grid = g;
  r.n_paths = P;
  r.seed = batch.seed();
  r.X.resize(stored);
  r.Y.resize(stored);
  r.Z.resize(stored);
  r.u.resize(stored);
  r.W.resize(stored);

  std::vector<double> cost(P), stat_sq(P), term(P), fwd(P);

  parallel_for(P, [&](int begin, int end) {
    PathScratch s;
    for (int path = begin; path < end; ++path) {
      batch.increments(path, s.dW);
      s.W.assign(g.n_nodes(), 0.0);
      for (int k = 0; k < N; ++k) s.W[k + 1] = s.W[k] + s.dW[k];
      const bool keep = path < stored;
      if (keep) {
        r.X[path].resize(g.n_nodes());
        r.Y[path].resize(g.n_nodes());
        r.Z[path].resize(g.n_nodes());
        r.u[path].resize(g.n_nodes());
        r.W[path] = s.W;
      }
      s.X = VectorXd::Zero(p.n);
      double c = 0.0, sq = 0.0;
      for (int k = 0; k <= N; ++k) {
        const LoopNode& L = nodes[k];
        loop_outputs(L, pl.bsde, k, s.W[k], s);
        if (k == 0) {
          c += s.Y.dot(p.G * s.Y);
          s.Yf = s.Y;
        }
        c += trap_weight(k, g) * quad(L.M, s, s.Y, s.Z, s.u);
        // Stationarity in original coordinates, X* = X - H Y.
        s.Xstar = s.X;
        s.Xstar.noalias() -= L.g->H * s.Y;
        s.res.noalias() = L.c.S2 * s.Y;
        s.res.noalias() += L.c.R21 * s.Z;
        s.res.noalias() -= L.c.B.transpose() * s.Xstar;
        s.res.noalias() += L.c.R22 * s.u;
        sq += s.res.squaredNorm();
        if (keep) {
          r.X[path][k] = s.X;
          r.Y[path][k] = s.Y;
          r.Z[path][k] = s.Z;
          r.u[path][k] = s.u;
        }
        if (k < N) {
          // Independent forward Euler for Y under (u*, Z*).
          s.Yf += (L.c.A * s.Yf + L.c.B * s.u + L.c.C * s.Z) * g.h() +
                  s.Z * s.dW[k];
          loop_step(L, g.h(), s.dW[k], s);
          if (!s.X.allFinite()) {
            std::ostringstream os;
            os << "non-finite X on path " << path << " at step " << k + 1;
            throw NumericalError("simulate/simulate_X",
                                 NumericalCode::kNonFinite, os.str(),
                                 g.t(k + 1));
          }
        }
      }
      const VectorXd xi = pl.xi.evaluate(s.W[N]);
      cost[path] = c;
      stat_sq[path] = sq;
      term[path] = (s.Y - xi).norm();
      fwd[path] = (s.Yf - xi).norm();
    }
  });
  r.cost = mean_se(cost);
  const double comps =
      static_cast<double>(P) * g.n_nodes() * static_cast<double>(p.m);
  r.stationarity_rms =
      std::sqrt(pairwise_sum(stat_sq.data(), stat_sq.size()) / comps);
  auto summarize = [&](const std::vector<double>& e) {
    MismatchSummary m;
    std::vector<double> sq(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) {
      m.max = std::max(m.max, e[i]);
      sq[i] = e[i] * e[i];
    }
    m.rms = std::sqrt(pairwise_sum(sq.data(), sq.size()) / e.size());
    return m;
  };
  r.terminal_mismatch = summarize(term);
  r.forward_euler_mismatch = summarize(fwd);
  r.value_formula = value_formula(pl.rp, pl.sigma, pl.bsde, pl.xi);
  return r;
}

std::vector<Path> simulate_X(const ReducedProblem& rp,
                             const SigmaSolution& sigma,
                             const AffineBsdeSolution& bsde,
                             const BrownianBatch& batch) {
  const TimeGrid& g = rp.grid();
  if (!(batch.grid() == g) || !(sigma.grid == g) || !(bsde.grid == g)) {
    throw ValidationError("simulate/simulate_X", "inputs on different grids");
  }
  const auto gains = node_gains(rp, sigma);
  std::vector<Path> X(batch.n_paths());
  std::vector<double> dW;
  for (int path = 0; path < batch.n_paths(); ++path) {
    batch.increments(path, dW);
    Path& x = X[path];
    x.resize(g.n_nodes());
    x[0] = VectorXd::Zero(rp.n());
    double W = 0.0;
    for (int k = 0; k < g.n_steps(); ++k) {
      const LoopGains& G = gains[k];
      const VectorXd phi = bsde.phi(k, W);
      const VectorXd& beta = bsde.beta(k);
      x[k + 1] = x[k] + (G.KX * x[k] + G.Kphi * phi + G.Kbeta * beta) * g.h() +
                 (G.DX * x[k] + G.Dphi * phi + G.Dbeta * beta) * dW[k];
      if (!x[k + 1].allFinite()) {
        std::ostringstream os;
        os << "non-finite X on path " << path << " at step " << k + 1;
        throw NumericalError("simulate/simulate_X", NumericalCode::kNonFinite,
                             os.str(), g.t(k + 1));
      }
      W += dW[k];
    }
  }
  return X;
}

YZuPaths reconstruct_YZu(const ReducedProblem& rp, const SigmaSolution& sigma,
                         const AffineBsdeSolution& bsde,
                         const std::vector<Path>& X,
                         const BrownianBatch& batch) {
  const TimeGrid& g = rp.grid();
  if (static_cast<int>(X.size()) != batch.n_paths()) {
    throw ValidationError("simulate/reconstruct_YZu", "path count mismatch");
  }
  const auto gains = node_gains(rp, sigma);
  YZuPaths out;
  out.Y.resize(X.size());
  out.Z.resize(X.size());
  out.u.resize(X.size());
  std::vector<double> W;
  for (std::size_t path = 0; path < X.size(); ++path) {
    batch.cumulative(static_cast<int>(path), W);
    for (int k = 0; k < g.n_nodes(); ++k) {
      const LoopGains& G = gains[k];
      const VectorXd phi = bsde.phi(k, W[k]);
      const VectorXd& beta = bsde.beta(k);
      const VectorXd& x = X[path][k];
      out.Y[path].push_back(-G.Sigma * x + phi);
      out.Z[path].push_back(G.ZX * x + G.Zphi * phi + G.Zbeta * beta);
      out.u[path].push_back(G.uX * x + G.uphi * phi + G.ubeta * beta);
    }
  }
  return out;
}

double value_formula(const ReducedProblem& rp, const SigmaSolution& sigma,
                     const AffineBsdeSolution& bsde, const TerminalData& xi) {
  require_affine(xi, "simulate/value_formula");
  const TimeGrid& g = rp.grid();
  double v = -rp.terminal_shift(xi);
  for (int k = 0; k < g.n_nodes(); ++k) {
    const ReducedCoeffs c = rp.at_node(k);
    const MatrixXd& S = sigma.Sigma[k];
    const SigmaTerms st = sigma_terms(c, S);
    const MatrixXd Rinv = st.lu.solve(MatrixXd::Identity(S.rows(), S.cols()));
    const VectorXd& m = bsde.m[k];
    const VectorXd& N = bsde.N[k];
    const double t = g.t(k);
    const MatrixXd Epp = m * m.transpose() + t * N * N.transpose();
    const MatrixXd Ebp = N * m.transpose();  // E[beta phi']
    const MatrixXd Ebb = N * N.transpose();
    const MatrixXd K = c.S1H.transpose() * Rinv * S * c.S1H +
                       c.S2H.transpose() * c.R22inv * c.S2H;
    const double integrand = (c.R11H * Rinv * Ebb).trace() +
                             2.0 * (c.S1H.transpose() * Rinv * Ebp).trace() -
                             (K * Epp).trace();
    v += trap_weight(k, g) * integrand;
  }
  return v;
}

double stationarity_residual(const ReducedProblem& rp,
                             const SimulationResult& r) {
  const ProblemData& p = *rp.base;
  double sq = 0.0;
  std::size_t count = 0;
  for (std::size_t path = 0; path < r.X.size(); ++path) {
    for (int k = 0; k < r.grid.n_nodes(); ++k) {
      const Coefficients c = p.at_node(k);
      const VectorXd& Y = r.Y[path][k];
      const VectorXd Xs = r.X[path][k] - rp.H.node(k) * Y;
      const VectorXd res = c.S2 * Y + c.R21 * r.Z[path][k] -
                           c.B.transpose() * Xs + c.R22 * r.u[path][k];
      sq += res.squaredNorm();
      count += res.size();
    }
  }
  return count == 0 ? 0.0 : std::sqrt(sq / count);
}

AffineState affine_feedback_state(const ProblemData& p,
                                  const AffineFeedbackPolicy& pol,
                                  const VectorXd& a, const VectorXd& b) {
  const char* where = "simulate/estimate_cost";
  check_path(pol.c, p.grid, p.m, where);
  check_path(pol.d, p.grid, p.m, where);
  AffineState st;
  st.y1 = solve_linear_backward(p, b, [&](int k, double th) -> VectorXd {
    return p.B.on_step(k, th) * lerp_node(pol.d, k, th, p.m);
  });
  st.y0 = solve_linear_backward(p, a, [&](int k, double th) -> VectorXd {
    const double h = p.grid.h();
    // y1 between nodes from its own ODE: Hermite through node values.
    const double s = th, s2 = s * s, s3 = s2 * s;
    const VectorXd& l = st.y1[k];
    const VectorXd& r = st.y1[k + 1];
    const VectorXd dl =
        p.A.on_step(k, 0.0) * l + p.B.on_step(k, 0.0) * lerp_node(pol.d, k, 0.0, p.m);
    const VectorXd dr =
        p.A.on_step(k, 1.0) * r + p.B.on_step(k, 1.0) * lerp_node(pol.d, k, 1.0, p.m);
    const VectorXd y1 = (2 * s3 - 3 * s2 + 1) * l + (s3 - 2 * s2 + s) * h * dl +
                        (-2 * s3 + 3 * s2) * r + (s3 - s2) * h * dr;
    return p.B.on_step(k, th) * lerp_node(pol.c, k, th, p.m) +
           p.C.on_step(k, th) * y1;
  });
  return st;
}

Estimate estimate_cost(const ProblemData& p, const Policy& policy,
                       const TerminalData& xi, const BrownianBatch& batch) {
  const char* where = "simulate/estimate_cost";
  const TimeGrid& g = p.grid;
  if (!(batch.grid() == g)) throw ValidationError(where, "batch grid mismatch");
  validate_terminal(p, xi);
  const int P = batch.n_paths();

  if (const auto* opt = std::get_if<OptimalPolicy>(&policy)) {
    return simulate_optimal(*opt->pipeline, batch).cost;
  }
  if (const auto* st = std::get_if<StoredPolicy>(&policy)) {
    const SimulationResult& r = *st->result;
    if (!(r.grid == g) || r.n_paths != P || r.seed != batch.seed() ||
        static_cast<int>(r.Y.size()) != P) {
      throw ValidationError(where,
                            "stored trajectories do not match the batch");
    }
    const auto nodes = node_coefficients(p);
    std::vector<double> cost(P);
    for (int i = 0; i < P; ++i) cost[i] = path_cost(p, nodes, r.Y[i], r.Z[i], r.u[i]);
    return mean_se(cost);
  }

  AffineFeedbackPolicy affine;
  FeedbackPolicy feedback;
  bool is_affine = false;
  if (std::holds_alternative<ZeroPolicy>(policy)) {
    is_affine = true;
  } else if (const auto* af = std::get_if<AffineFeedbackPolicy>(&policy)) {
    affine = *af;
    is_affine = true;
  } else {
    feedback = std::get<FeedbackPolicy>(policy);
  }

  if (is_affine && xi.kind == TerminalData::Kind::kAffine) {
    const AffineState state = affine_feedback_state(p, affine, xi.a, xi.b);
    const QuadraticInW q = affine_cost_profile(p, state, affine);
    std::vector<double> cost(P);
    parallel_for(P, [&](int begin, int end) {
      std::vector<double> W;
      for (int i = begin; i < end; ++i) {
        batch.cumulative(i, W);
        cost[i] = eval_profile(q, g, W);
      }
    });
    return mean_se(cost);
  }
  if (is_affine) {
    check_path(affine.c, g, p.m, where);
    check_path(affine.d, g, p.m, where);
    feedback.rule = [&affine, &g, m = p.m](double t, double w) -> VectorXd {
      const double s = std::min(t / g.h(), static_cast<double>(g.n_steps()));
      const int k = std::min(static_cast<int>(s), g.n_steps() - 1);
      const double th = s - k;
      return lerp_node(affine.c, k, th, m) + w * lerp_node(affine.d, k, th, m);
    };
  }

  // General feedback: (Y, Z) as functions of (t_k, W) by regression.
  LinearBsde bsde;
  bsde.grid = g;
  bsde.n = p.n;
  for (int k = 0; k < g.n_nodes(); ++k) {
    bsde.F.push_back(p.A.node(k));
    bsde.L.push_back(p.C.node(k));
  }
  bsde.source = [&](int k, double w) -> VectorXd {
    return p.B.node(k) * feedback.rule(g.t(k), w);
  };
  bsde.terminal = [&xi](double w) { return xi.evaluate(w); };
  const RegressionBsdeSolution sol = solve_linear_bsde_lsmc(
      bsde, feedback.train_paths, feedback.degree, feedback.seed);
  const auto nodes = node_coefficients(p);
  std::vector<double> cost(P);
  parallel_for(P, [&](int begin, int end) {
    std::vector<double> W;
    for (int i = begin; i < end; ++i) {
      batch.cumulative(i, W);
      double c = 0.0;
      for (int k = 0; k < g.n_nodes(); ++k) {
        const VectorXd Y = sol.phi(k, W[k]);
        const VectorXd Z = sol.beta(k, W[k]);
        const VectorXd u = feedback.rule(g.t(k), W[k]);
        if (k == 0) c += Y.dot(p.G * Y);
        c += trap_weight(k, g) * running_cost(nodes[k], Y, Z, u);
      }
      cost[i] = c;
    }
  });
  return mean_se(cost);
}

double deterministic_cost(const ProblemData& p, const Path& v) {
  check_path(v, p.grid, p.m, "simulate/perturbation_test");
  const Path Yv = solve_linear_backward(p, VectorXd::Zero(p.n),
                                        [&](int k, double th) -> VectorXd {
    return p.B.on_step(k, th) * lerp_node(v, k, th, p.m);
  });
  const Path Z(p.grid.n_nodes(), VectorXd::Zero(p.n));
  return path_cost(p, node_coefficients(p), Yv, Z, v);
}

std::vector<PerturbationRow> perturbation_test(const OptimalPipeline& pl,
                                               const Path& v,
                                               const std::vector<double>& eps,
                                               const BrownianBatch& batch) {
  const ProblemData& p = pl.problem();
  const TimeGrid& g = p.grid;
  if (!(batch.grid() == g)) {
    throw ValidationError("simulate/perturbation_test", "batch grid mismatch");
  }
  check_path(v, g, p.m, "simulate/perturbation_test");
  const Path Yv = solve_linear_backward(p, VectorXd::Zero(p.n),
                                        [&](int k, double th) -> VectorXd {
    return p.B.on_step(k, th) * lerp_node(v, k, th, p.m);
  });
  const double J0v = deterministic_cost(p, v);
  const std::vector<LoopNode> nodes = loop_nodes(pl);
  const int P = batch.n_paths(), N = g.n_steps();
  const std::size_t E = eps.size();
  std::vector<std::vector<double>> dJ(E, std::vector<double>(P));

  parallel_for(P, [&](int begin, int end) {
    PathScratch s;
    VectorXd Ye, ue;
    std::vector<double> c_eps(E);
    for (int path = begin; path < end; ++path) {
      batch.increments(path, s.dW);
      s.X = VectorXd::Zero(p.n);
      double W = 0.0, c0 = 0.0;
      std::fill(c_eps.begin(), c_eps.end(), 0.0);
      for (int k = 0; k <= N; ++k) {
        const LoopNode& L = nodes[k];
        loop_outputs(L, pl.bsde, k, W, s);
        const double wk = trap_weight(k, g);
        if (k == 0) c0 += s.Y.dot(p.G * s.Y);
        c0 += wk * quad(L.M, s, s.Y, s.Z, s.u);
        for (std::size_t e = 0; e < E; ++e) {
          Ye = s.Y + eps[e] * Yv[k];
          ue = s.u + eps[e] * v[k];
          if (k == 0) c_eps[e] += Ye.dot(p.G * Ye);
          c_eps[e] += wk * quad(L.M, s, Ye, s.Z, ue);
        }
        if (k < N) {
          loop_step(L, g.h(), s.dW[k], s);
          W += s.dW[k];
        }
      }
      for (std::size_t e = 0; e < E; ++e) dJ[e][path] = c_eps[e] - c0;
    }
  });

  std::vector<PerturbationRow> rows;
  for (std::size_t e = 0; e < E; ++e) {
    const Estimate est = mean_se(dJ[e]);
    PerturbationRow r;
    r.eps = eps[e];
    r.dJ = est.mean;
    r.eps2_J0v = eps[e] * eps[e] * J0v;
    r.gap = r.dJ - r.eps2_J0v;
    r.se = est.se;
    rows.push_back(r);
  }
  return rows;
}

ProbeResult convexity_probe(const ProblemData& p, int n_controls,
                            const BrownianBatch& batch, std::uint64_t seed) {
  if (n_controls < 1) {
    throw ValidationError("simulate/convexity_probe", "n_controls must be >= 1");
  }
  const TimeGrid& g = p.grid;
  if (!(batch.grid() == g)) {
    throw ValidationError("simulate/convexity_probe", "batch grid mismatch");
  }
  constexpr int kSegments = 8;
  constexpr int kModes = 3;
  const int P = batch.n_paths();
  ProbeResult out;
  out.min_ratio = INFINITY;
  for (int i = 0; i < n_controls; ++i) {
    auto z = [&](std::uint64_t j) {
      return keyed_normal(seed, static_cast<std::uint64_t>(i), j);
    };
    AffineFeedbackPolicy pol;
    pol.c.resize(g.n_nodes());
    pol.d.resize(g.n_nodes());
    for (int k = 0; k < g.n_nodes(); ++k) {
      const double t = g.t(k);
      VectorXd c(p.m), d(p.m);
      for (int j = 0; j < p.m; ++j) {
        if (i % 2 == 0) {
          // piecewise-constant Gaussian levels
          const int seg = std::min(kSegments - 1,
                                   static_cast<int>(t / g.T() * kSegments));
          c(j) = z(2 * (seg * p.m + j));
          d(j) = z(2 * (seg * p.m + j) + 1);
        } else {
          c(j) = 0.0;
          d(j) = 0.0;
          for (int q = 1; q <= kModes; ++q) {
            const std::uint64_t base = 4 * ((q - 1) * p.m + j);
            const double w = q * M_PI * t / g.T();
            c(j) += z(base) * std::sin(w + z(base + 1));
            d(j) += z(base + 2) * std::sin(w + z(base + 3));
          }
        }
      }
      pol.c[k] = c;
      pol.d[k] = d;
    }
    const AffineState st = affine_feedback_state(p, pol, VectorXd::Zero(p.n),
                                                 VectorXd::Zero(p.n));
    const QuadraticInW q = affine_cost_profile(p, st, pol);
    // |u|^2 profile on the same paths.
    QuadraticInW un;
    un.alpha.resize(g.n_nodes());
    un.beta.resize(g.n_nodes());
    un.gamma.resize(g.n_nodes());
    for (int k = 0; k < g.n_nodes(); ++k) {
      un.alpha[k] = pol.c[k].squaredNorm();
      un.beta[k] = 2.0 * pol.c[k].dot(pol.d[k]);
      un.gamma[k] = pol.d[k].squaredNorm();
    }
    std::vector<double> J(P), U(P);
    parallel_for(P, [&](int begin, int end) {
      std::vector<double> W;
      for (int path = begin; path < end; ++path) {
        batch.cumulative(path, W);
        J[path] = eval_profile(q, g, W);
        U[path] = eval_profile(un, g, W);
      }
    });
    const double Jm = mean_se(J).mean, Um = mean_se(U).mean;
    const double ratio = Jm / Um;
    std::vector<double> lin(P);
    for (int path = 0; path < P; ++path) lin[path] = (J[path] - ratio * U[path]) / Um;
    const double se = mean_se(lin).se;
    out.ratios.push_back(ratio);
    out.ses.push_back(se);
    if (ratio < out.min_ratio) {
      out.min_ratio = ratio;
      out.se = se;
      out.argmin = i;
    }
  }
  return out;
}

ReductionIdentity reduction_identity(const OptimalPipeline& pl,
                                     const BrownianBatch& batch) {
  const ProblemData& p = pl.problem();
  const TimeGrid& g = p.grid;
  if (!(batch.grid() == g)) {
    throw ValidationError("simulate/reduction_identity", "batch grid mismatch");
  }
  const ProblemData normal = pl.rp.as_problem();
  std::vector<MatrixXd> MH;
  for (int k = 0; k < g.n_nodes(); ++k) MH.push_back(cost_block(normal.at_node(k)));
  const std::vector<LoopNode> nodes = loop_nodes(pl);
  const int P = batch.n_paths(), N = g.n_steps();
  std::vector<double> J(P), JH(P), D(P);
  parallel_for(P, [&](int begin, int end) {
    PathScratch s;
    for (int path = begin; path < end; ++path) {
      batch.increments(path, s.dW);
      s.X = VectorXd::Zero(p.n);
      double W = 0.0, c = 0.0, cH = 0.0;
      for (int k = 0; k <= N; ++k) {
        const LoopNode& L = nodes[k];
        loop_outputs(L, pl.bsde, k, W, s);
        if (k == 0) c += s.Y.dot(p.G * s.Y);
        c += trap_weight(k, g) * quad(L.M, s, s.Y, s.Z, s.u);
        cH += trap_weight(k, g) * quad(MH[k], s, s.Y, s.Z, s.v);
        if (k < N) {
          loop_step(L, g.h(), s.dW[k], s);
          W += s.dW[k];
        }
      }
      J[path] = c;
      JH[path] = cH - pl.rp.terminal_shift(pl.xi.evaluate(W));
      D[path] = J[path] - JH[path];
    }
  });
  return ReductionIdentity{mean_se(J), mean_se(JH), mean_se(D)};
}

}  // namespace bslq
