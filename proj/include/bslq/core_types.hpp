#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace bslq {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Uniform grid t_k = k T / n_steps on [0, T].
class TimeGrid {
 public:
  TimeGrid(double T, int n_steps);

  double T() const { return T_; }
  int n_steps() const { return n_steps_; }
  int n_nodes() const { return n_steps_ + 1; }
  double h() const { return T_ / n_steps_; }
  double t(int k) const { return k == n_steps_ ? T_ : k * h(); }

  /// Same horizon, n_steps multiplied by `factor`.
  TimeGrid refined(int factor) const { return TimeGrid(T_, n_steps_ * factor); }

  bool operator==(const TimeGrid& other) const {
    return T_ == other.T_ && n_steps_ == other.n_steps_;
  }

 private:
  double T_;
  int n_steps_;
};

enum class Interpolation { kPiecewiseConstantLeft, kLinear };

const char* to_string(Interpolation interp);
Interpolation interpolation_from_string(const std::string& name);

/// Deterministic matrix-valued coefficient sampled at the grid nodes.
class CoefficientPath {
 public:
  CoefficientPath() : grid_(1.0, 2) {}
  CoefficientPath(TimeGrid grid, std::vector<MatrixXd> values,
                  Interpolation interp);

  static CoefficientPath constant(const TimeGrid& grid, const MatrixXd& value,
                                  Interpolation interp = Interpolation::kLinear);
  /// Samples f at the nodes.
  static CoefficientPath sample(const TimeGrid& grid,
                                const std::function<MatrixXd(double)>& f,
                                Interpolation interp = Interpolation::kLinear);

  const TimeGrid& grid() const { return grid_; }
  Interpolation interpolation() const { return interp_; }
  Eigen::Index rows() const { return values_.front().rows(); }
  Eigen::Index cols() const { return values_.front().cols(); }
  const std::vector<MatrixXd>& values() const { return values_; }
  const MatrixXd& node(int k) const { return values_[k]; }

  /// Value inside step k at t_k + theta h, theta in [0, 1]. A
  /// piecewise-constant path returns the left value for every theta, so
  /// integrators never see the jump at t_{k+1} within step k.
  MatrixXd on_step(int k, double theta) const;

  /// Value at t by the declared interpolation rule (exact at nodes).
  MatrixXd operator()(double t) const;

  /// Replaces every node value by its symmetric part.
  void symmetrize();

 private:
  TimeGrid grid_;
  std::vector<MatrixXd> values_;
  Interpolation interp_;
};

/// Throws ValidationError when t is outside [0, T].
MatrixXd eval_coeff(const CoefficientPath& c, double t);

/// All coefficients of the problem evaluated at one instant.
struct Coefficients {
  MatrixXd A, B, C, Q, S1, S2, R11, R12, R21, R22;
};

/// Backward stochastic LQ instance: state dY = (AY + Bu + CZ)dt + Z dW,
/// Y(T) = xi, quadratic cost with G, Q, S1, S2 and R blocks. R21 is always
/// R12 transposed.
struct ProblemData {
  int n = 0;
  int m = 0;
  TimeGrid grid{1.0, 2};
  Interpolation interpolation = Interpolation::kLinear;
  CoefficientPath A, B, C, Q, S1, S2, R11, R12, R22;
  MatrixXd G;

  ProblemData(int n, int m, TimeGrid grid, Interpolation interpolation,
              CoefficientPath A, CoefficientPath B, CoefficientPath C,
              MatrixXd G, CoefficientPath Q, CoefficientPath S1,
              CoefficientPath S2, CoefficientPath R11, CoefficientPath R12,
              CoefficientPath R22);

  Coefficients on_step(int k, double theta) const;
  Coefficients at_node(int k) const;
  Coefficients at(double t) const;

  /// Same problem on a grid with a different number of steps. Node values
  /// are re-sampled through the interpolation rule.
  ProblemData resampled(int n_steps) const;

  /// Symmetrizes G, Q, R11 and R22; applied on every ingest path.
  void symmetrize();
};

/// Terminal value xi. Only W(T)-measurable values are supported: either
/// affine xi = a + b W(T) or xi = g(W(T)) for a registered functional g.
struct TerminalData {
  enum class Kind { kAffine, kFunctional };
  Kind kind = Kind::kAffine;
  VectorXd a;
  VectorXd b;
  std::string name;   // functional id
  VectorXd scale;     // functional: xi = g(W(T)) * scale

  static TerminalData affine(VectorXd a, VectorXd b);
  static TerminalData functional(const std::string& name, VectorXd scale);

  int dim() const;
  VectorXd evaluate(double w_T) const;
};

/// Ids accepted by TerminalData::functional.
std::vector<std::string> registered_functionals();
double evaluate_functional(const std::string& name, double w);

enum class Severity { kInfo, kWarning, kError };
const char* to_string(Severity s);

struct Finding {
  Severity severity;
  std::string code;
  std::string message;
};

struct ValidationReport {
  bool ok = true;
  std::vector<Finding> findings;
  double r22_min_eig = 0.0;

  bool has(const std::string& code) const;
};

/// Structural validation. Indefinite weights are reported but never make
/// the report fail; only shape defects and non-finite entries do.
ValidationReport validate_problem(const ProblemData& p);

/// Checks that xi matches the state dimension.
void validate_terminal(const ProblemData& p, const TerminalData& xi);

/// Smallest eigenvalue of the symmetric part of M.
double min_eigenvalue(const MatrixXd& M);

}  // namespace bslq
