#pragma once

#include <string>
#include <vector>

#include "bslq/core_types.hpp"
#include "bslq/simulate.hpp"

namespace bslq {

/// Recombining binomial lattice with equiprobable +-sqrt(h) increments.
/// Node (k, j) has j up-moves among k steps, W = (2j - k) sqrt(h).
struct TreeProblem {
  int depth = 0;
  double T = 0.0;
  double h = 0.0;
  int n = 0, m = 0;
  MatrixXd G;
  std::vector<Coefficients> coeffs;  // frozen at t_k, k = 0..depth-1
  std::vector<VectorXd> leaves;      // xi at W = (2j - depth) sqrt(h)

  double w(int k, int j) const { return (2.0 * j - k) * std::sqrt(h); }
  /// Probability of reaching node (k, j).
  double prob(int k, int j) const;
  /// Index of non-terminal node (k, j) in the stacked control vector.
  static int index(int k, int j) { return k * (k + 1) / 2 + j; }
  int n_controls() const { return depth * (depth + 1) / 2; }
};

TreeProblem build_tree(const ProblemData& p, const TerminalData& xi, int depth);

enum class TreeStatus { kOk, kIndefinite, kSingularPsd };
const char* to_string(TreeStatus s);

struct TreeSolution {
  TreeStatus status = TreeStatus::kOk;
  std::vector<VectorXd> u;  // per non-terminal node, TreeProblem::index order
  std::vector<std::vector<VectorXd>> Y, Z;  // [k][j]; Z at leaves is zero
  double cost = 0.0;
  double hessian_min_eig = 0.0;
  double condition = 0.0;     // lambda_max / lambda_min of the Hessian
  double gradient_norm = 0.0; // || H u + g || at the returned u
};

/// Assembles the discrete cost as an exact quadratic in the stacked
/// controls and minimises it by the normal equations. Non-convex
/// (indefinite) Hessians are reported through the status; a PSD-singular
/// Hessian yields the minimum-norm minimiser. Throws NumericalError
/// kSingularSystem when I + A h is singular.
TreeSolution solve_tree_exact(const TreeProblem& tp);

/// Discrete cost of arbitrary lattice controls, by direct backward recursion.
/// Fills Y and Z ([k][j]) when given.
double tree_cost(const TreeProblem& tp, const std::vector<VectorXd>& u,
                 std::vector<std::vector<VectorXd>>* Y = nullptr,
                 std::vector<std::vector<VectorXd>>* Z = nullptr);

struct ContinuousReference {
  double value = 0.0;
  VectorXd u0;  // u*(0), deterministic
};
ContinuousReference continuous_reference(const OptimalPipeline& pl);

struct CompareRow {
  int depth = 0;
  TreeStatus status = TreeStatus::kOk;
  double tree_value = 0.0;
  double value_gap = 0.0;  // |V_tree - V|
  double u_gap = 0.0;      // ||u_tree(root) - u*(0)||
  bool included = true;    // ok status; part of the trend
};

struct CompareTable {
  std::vector<CompareRow> rows;
  bool nonincreasing = true;  // value gaps over included rows
  bool diverging = false;     // any increase over included rows
};

CompareTable compare(const ContinuousReference& ref,
                     const std::vector<int>& depths,
                     const std::vector<TreeSolution>& ladder);

/// Builds and solves every depth, then compares.
CompareTable oracle_ladder(const ProblemData& p, const TerminalData& xi,
                           const ContinuousReference& ref,
                           const std::vector<int>& depths);

}  // namespace bslq
