#pragma once

#include <cstdint>
#include <functional>
#include <variant>
#include <vector>

#include "bslq/bsde.hpp"
#include "bslq/brownian.hpp"
#include "bslq/closed_loop.hpp"
#include "bslq/parallel.hpp"
#include "bslq/reduction.hpp"
#include "bslq/riccati.hpp"

namespace bslq {

/// Everything needed to run the optimal closed loop for affine terminal data.
struct OptimalPipeline {
  ReducedProblem rp;
  SigmaSolution sigma;
  AffineBsdeSolution bsde;
  TerminalData xi;
  std::vector<LoopGains> gains;

  const ProblemData& problem() const { return *rp.base; }
  const TimeGrid& grid() const { return rp.grid(); }
};

/// Reduce, solve Sigma and the affine BSDE, precompute the node gains.
OptimalPipeline build_pipeline(const ProblemData& p, const TerminalData& xi);

using Path = std::vector<VectorXd>;  // one vector per grid node

struct SimulationResult {
  TimeGrid grid{1.0, 2};
  int n_paths = 0;
  std::uint64_t seed = 0;
  // Trajectories of the first stored_paths paths (all when stored_paths < 0).
  std::vector<Path> X, Y, Z, u;
  std::vector<std::vector<double>> W;
  Estimate cost;
  double value_formula = 0.0;
  double stationarity_rms = 0.0;
  MismatchSummary terminal_mismatch;       // reconstructed Y(T) vs xi
  MismatchSummary forward_euler_mismatch;  // Euler-simulated Y(T) vs xi
};

struct SimOptions {
  int stored_paths = 0;
};

/// Streams the batch through the optimal closed loop: X by Euler-Maruyama
/// from X(0) = 0, (Y, Z, u) reconstructed, cost by trapezoid quadrature.
SimulationResult simulate_optimal(const OptimalPipeline& pl,
                                  const BrownianBatch& batch,
                                  SimOptions opt = {});

/// All X paths of the batch (kept in memory; for small batches).
std::vector<Path> simulate_X(const ReducedProblem& rp,
                             const SigmaSolution& sigma,
                             const AffineBsdeSolution& bsde,
                             const BrownianBatch& batch);

struct YZuPaths {
  std::vector<Path> Y, Z, u;
};
YZuPaths reconstruct_YZu(const ReducedProblem& rp, const SigmaSolution& sigma,
                         const AffineBsdeSolution& bsde,
                         const std::vector<Path>& X,
                         const BrownianBatch& batch);

/// Closed-form value for affine terminal data.
double value_formula(const ReducedProblem& rp, const SigmaSolution& sigma,
                     const AffineBsdeSolution& bsde, const TerminalData& xi);

/// RMS of S2 Y + R21 Z - B' X* + R22 u over stored paths, nodes and
/// components, with X* = X - H Y the adjoint in original coordinates.
double stationarity_residual(const ReducedProblem& rp,
                             const SimulationResult& result);

/// Quadratic running cost <M w, w>, w = (Y, Z, u), at one instant.
double running_cost(const Coefficients& c, const VectorXd& Y,
                    const VectorXd& Z, const VectorXd& u);

/// <G Y(0), Y(0)> + trapezoid sum of the running cost over the nodes.
double path_cost(const ProblemData& p, const std::vector<Coefficients>& nodes,
                 const Path& Y, const Path& Z, const Path& u);

std::vector<Coefficients> node_coefficients(const ProblemData& p);

// Control sources for estimate_cost.
struct ZeroPolicy {};
/// u(t_k) = c[k] + d[k] W(t_k); c or d may be empty (zero).
struct AffineFeedbackPolicy {
  std::vector<VectorXd> c, d;
};
/// General feedback u(t, W(t)); (Y, Z) come from a regression solve.
struct FeedbackPolicy {
  std::function<VectorXd(double, double)> rule;
  int train_paths = 20000;
  int degree = 3;
  std::uint64_t seed = 7;
};
/// Trajectories already simulated on this batch (all paths stored).
struct StoredPolicy {
  const SimulationResult* result = nullptr;
};
struct OptimalPolicy {
  const OptimalPipeline* pipeline = nullptr;
};
using Policy = std::variant<ZeroPolicy, AffineFeedbackPolicy, FeedbackPolicy,
                            StoredPolicy, OptimalPolicy>;

Estimate estimate_cost(const ProblemData& p, const Policy& policy,
                       const TerminalData& xi, const BrownianBatch& batch);

/// State of the BSDE under an affine feedback with affine xi:
/// Y = y0 + y1 W, Z = y1 exactly.
struct AffineState {
  Path y0, y1;
};
AffineState affine_feedback_state(const ProblemData& p,
                                  const AffineFeedbackPolicy& policy,
                                  const VectorXd& a, const VectorXd& b);

struct PerturbationRow {
  double eps = 0.0;
  double dJ = 0.0;      // J(xi; u* + eps v) - J(xi; u*)
  double eps2_J0v = 0.0;
  double gap = 0.0;     // dJ - eps^2 J(0; v)
  double se = 0.0;      // standard error of dJ (and of gap)
};

/// Deterministic perturbation v (one vector per node) with common random
/// numbers. The perturbed state is (Y* + eps Yv, Z*) where Yv solves
/// Yvdot = A Yv + B v, Yv(T) = 0.
std::vector<PerturbationRow> perturbation_test(const OptimalPipeline& pl,
                                               const Path& v,
                                               const std::vector<double>& eps,
                                               const BrownianBatch& batch);

/// J(0; v) for a deterministic control.
double deterministic_cost(const ProblemData& p, const Path& v);

struct ProbeResult {
  double min_ratio = 0.0;
  double se = 0.0;  // at the minimiser
  int argmin = -1;
  std::vector<double> ratios, ses;
};

/// Samples random affine feedbacks u = c(t) + d(t) W(t) (piecewise-constant
/// Gaussian and sinusoidal c, d) and returns min J(0;u)/E int |u|^2 with its
/// delta-method standard error. Evidence, not proof, of uniform convexity.
ProbeResult convexity_probe(const ProblemData& p, int n_controls,
                            const BrownianBatch& batch, std::uint64_t seed);

struct ReductionIdentity {
  Estimate J;        // original cost of u*
  Estimate JH_shift; // J^H(xi; v*) - <H(T) xi, xi>, same paths
  Estimate diff;     // per-path difference
};
ReductionIdentity reduction_identity(const OptimalPipeline& pl,
                                     const BrownianBatch& batch);

}  // namespace bslq
