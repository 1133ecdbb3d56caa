#include "bslq/core_types.hpp"

#include <cmath>
#include <sstream>

#include "bslq/errors.hpp"

namespace bslq {

TimeGrid::TimeGrid(double T, int n_steps) : T_(T), n_steps_(n_steps) {
  if (!(T > 0.0) || !std::isfinite(T)) {
    throw ValidationError("core_types/TimeGrid", "T must be positive and finite");
  }
  if (n_steps < 2) {
    throw ValidationError("core_types/TimeGrid", "n_steps must be >= 2");
  }
}

const char* to_string(Interpolation interp) {
  return interp == Interpolation::kLinear ? "linear" : "piecewise-constant-left";
}

Interpolation interpolation_from_string(const std::string& name) {
  if (name == "linear") return Interpolation::kLinear;
  if (name == "piecewise-constant-left") {
    return Interpolation::kPiecewiseConstantLeft;
  }
  throw ValidationError("core_types/interpolation",
                        "unknown interpolation '" + name + "'");
}

CoefficientPath::CoefficientPath(TimeGrid grid, std::vector<MatrixXd> values,
                                 Interpolation interp)
    : grid_(grid), values_(std::move(values)), interp_(interp) {
  if (static_cast<int>(values_.size()) != grid_.n_nodes()) {
    std::ostringstream os;
    os << "expected " << grid_.n_nodes() << " node values, got "
       << values_.size();
    throw ValidationError("core_types/CoefficientPath", os.str());
  }
  for (const auto& v : values_) {
    if (v.rows() != values_.front().rows() ||
        v.cols() != values_.front().cols()) {
      throw ValidationError("core_types/CoefficientPath",
                            "node matrices must share one shape");
    }
  }
}

CoefficientPath CoefficientPath::constant(const TimeGrid& grid,
                                          const MatrixXd& value,
                                          Interpolation interp) {
  return CoefficientPath(grid, std::vector<MatrixXd>(grid.n_nodes(), value),
                         interp);
}

CoefficientPath CoefficientPath::sample(
    const TimeGrid& grid, const std::function<MatrixXd(double)>& f,
    Interpolation interp) {
  std::vector<MatrixXd> values;
  values.reserve(grid.n_nodes());
  for (int k = 0; k < grid.n_nodes(); ++k) values.push_back(f(grid.t(k)));
  return CoefficientPath(grid, std::move(values), interp);
}

MatrixXd CoefficientPath::on_step(int k, double theta) const {
  if (interp_ == Interpolation::kPiecewiseConstantLeft || theta == 0.0) {
    return values_[k];
  }
  if (theta == 1.0) return values_[k + 1];
  return (1.0 - theta) * values_[k] + theta * values_[k + 1];
}

MatrixXd CoefficientPath::operator()(double t) const {
  const int n = grid_.n_steps();
  double s = t / grid_.h();
  int k = static_cast<int>(std::floor(s));
  if (k >= n) return values_[n];
  if (k < 0) return values_[0];
  const double theta = s - k;
  // Snap to a node when t is a node up to roundoff.
  if (std::abs(theta - 1.0) < 1e-12) return values_[k + 1];
  if (theta < 1e-12) return values_[k];
  return on_step(k, theta);
}

void CoefficientPath::symmetrize() {
  for (auto& v : values_) {
    MatrixXd s = 0.5 * (v + v.transpose());
    v = s;
  }
}

MatrixXd eval_coeff(const CoefficientPath& c, double t) {
  const double T = c.grid().T();
  if (!(t >= 0.0 && t <= T)) {
    std::ostringstream os;
    os << "t = " << t << " outside [0, " << T << "]";
    throw ValidationError("core_types/eval_coeff", os.str());
  }
  return c(t);
}

ProblemData::ProblemData(int n_, int m_, TimeGrid grid_,
                         Interpolation interpolation_, CoefficientPath A_,
                         CoefficientPath B_, CoefficientPath C_, MatrixXd G_,
                         CoefficientPath Q_, CoefficientPath S1_,
                         CoefficientPath S2_, CoefficientPath R11_,
                         CoefficientPath R12_, CoefficientPath R22_)
    : n(n_),
      m(m_),
      grid(grid_),
      interpolation(interpolation_),
      A(std::move(A_)),
      B(std::move(B_)),
      C(std::move(C_)),
      Q(std::move(Q_)),
      S1(std::move(S1_)),
      S2(std::move(S2_)),
      R11(std::move(R11_)),
      R12(std::move(R12_)),
      R22(std::move(R22_)),
      G(std::move(G_)) {}

Coefficients ProblemData::on_step(int k, double theta) const {
  Coefficients c{A.on_step(k, theta),   B.on_step(k, theta),
                 C.on_step(k, theta),   Q.on_step(k, theta),
                 S1.on_step(k, theta),  S2.on_step(k, theta),
                 R11.on_step(k, theta), R12.on_step(k, theta),
                 MatrixXd(),            R22.on_step(k, theta)};
  c.R21 = c.R12.transpose();
  return c;
}

Coefficients ProblemData::at_node(int k) const {
  Coefficients c{A.node(k),   B.node(k),   C.node(k),   Q.node(k),
                 S1.node(k),  S2.node(k),  R11.node(k), R12.node(k),
                 MatrixXd(),  R22.node(k)};
  c.R21 = c.R12.transpose();
  return c;
}

Coefficients ProblemData::at(double t) const {
  Coefficients c{A(t),   B(t),   C(t),   Q(t),   S1(t),
                 S2(t),  R11(t), R12(t), MatrixXd(), R22(t)};
  c.R21 = c.R12.transpose();
  return c;
}

ProblemData ProblemData::resampled(int n_steps) const {
  TimeGrid g(grid.T(), n_steps);
  auto rs = [&](const CoefficientPath& c) {
    return CoefficientPath::sample(
        g, [&](double t) { return c(t); }, c.interpolation());
  };
  ProblemData out(n, m, g, interpolation, rs(A), rs(B), rs(C), G, rs(Q),
                  rs(S1), rs(S2), rs(R11), rs(R12), rs(R22));
  return out;
}

void ProblemData::symmetrize() {
  G = 0.5 * (G + G.transpose()).eval();
  Q.symmetrize();
  R11.symmetrize();
  R22.symmetrize();
}

TerminalData TerminalData::affine(VectorXd a, VectorXd b) {
  TerminalData xi;
  xi.kind = Kind::kAffine;
  xi.a = std::move(a);
  xi.b = std::move(b);
  return xi;
}

TerminalData TerminalData::functional(const std::string& name, VectorXd scale) {
  evaluate_functional(name, 0.0);  // rejects unknown ids
  TerminalData xi;
  xi.kind = Kind::kFunctional;
  xi.name = name;
  xi.scale = std::move(scale);
  return xi;
}

int TerminalData::dim() const {
  return static_cast<int>(kind == Kind::kAffine ? a.size() : scale.size());
}

VectorXd TerminalData::evaluate(double w_T) const {
  if (kind == Kind::kAffine) return a + b * w_T;
  return scale * evaluate_functional(name, w_T);
}

std::vector<std::string> registered_functionals() {
  return {"zero", "w", "w2", "w3", "abs", "relu"};
}

double evaluate_functional(const std::string& name, double w) {
  if (name == "zero") return 0.0;
  if (name == "w") return w;
  if (name == "w2") return w * w;
  if (name == "w3") return w * w * w;
  if (name == "abs") return std::abs(w);
  if (name == "relu") return w > 0.0 ? w : 0.0;
  throw ValidationError("core_types/TerminalData",
                        "unknown terminal functional '" + name + "'");
}

const char* to_string(Severity s) {
  switch (s) {
    case Severity::kInfo: return "info";
    case Severity::kWarning: return "warning";
    case Severity::kError: return "error";
  }
  return "?";
}

bool ValidationReport::has(const std::string& code) const {
  for (const auto& f : findings) {
    if (f.code == code) return true;
  }
  return false;
}

double min_eigenvalue(const MatrixXd& M) {
  if (M.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (M + M.transpose()),
                                             Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

namespace {

struct ShapeCheck {
  const char* name;
  const CoefficientPath* path;
  Eigen::Index rows, cols;
};

bool all_finite(const CoefficientPath& c) {
  for (const auto& v : c.values()) {
    if (!v.allFinite()) return false;
  }
  return true;
}

}  // namespace

ValidationReport validate_problem(const ProblemData& p) {
  ValidationReport report;
  auto add = [&](Severity s, std::string code, std::string msg) {
    if (s == Severity::kError) report.ok = false;
    report.findings.push_back({s, std::move(code), std::move(msg)});
  };

  const int n = p.n, m = p.m;
  if (n < 1 || m < 1) {
    add(Severity::kError, "DIM_MISMATCH", "n and m must be positive");
    return report;
  }
  const ShapeCheck shapes[] = {
      {"A", &p.A, n, n},     {"B", &p.B, n, m},     {"C", &p.C, n, n},
      {"Q", &p.Q, n, n},     {"S1", &p.S1, n, n},   {"S2", &p.S2, m, n},
      {"R11", &p.R11, n, n}, {"R12", &p.R12, n, m}, {"R22", &p.R22, m, m},
  };
  bool shapes_ok = true;
  for (const auto& s : shapes) {
    if (s.path->rows() != s.rows || s.path->cols() != s.cols) {
      std::ostringstream os;
      os << s.name << " is " << s.path->rows() << "x" << s.path->cols()
         << ", expected " << s.rows << "x" << s.cols;
      add(Severity::kError, "DIM_MISMATCH", os.str());
      shapes_ok = false;
    }
    if (!(s.path->grid() == p.grid)) {
      add(Severity::kError, "GRID_MISMATCH",
          std::string(s.name) + " is sampled on a different grid");
      shapes_ok = false;
    }
    if (!all_finite(*s.path)) {
      add(Severity::kError, "NON_FINITE",
          std::string(s.name) + " has non-finite entries");
      shapes_ok = false;
    }
  }
  if (p.G.rows() != n || p.G.cols() != n) {
    add(Severity::kError, "DIM_MISMATCH", "G must be n x n");
    shapes_ok = false;
  } else if (!p.G.allFinite()) {
    add(Severity::kError, "NON_FINITE", "G has non-finite entries");
    shapes_ok = false;
  }
  if (!shapes_ok) return report;

  // Symmetry after ingest symmetrization is exact.
  auto asym = [](const MatrixXd& M) { return M != M.transpose(); };
  bool sym_ok = !asym(p.G);
  for (int k = 0; k < p.grid.n_nodes(); ++k) {
    sym_ok = sym_ok && !asym(p.Q.node(k)) && !asym(p.R11.node(k)) &&
             !asym(p.R22.node(k));
  }
  if (!sym_ok) {
    add(Severity::kError, "NOT_SYMMETRIC",
        "G, Q, R11, R22 must be symmetric (symmetrize on ingest)");
  }

  double r22_min = INFINITY, r11_min = INFINITY, q_min = INFINITY;
  for (int k = 0; k < p.grid.n_nodes(); ++k) {
    r22_min = std::min(r22_min, min_eigenvalue(p.R22.node(k)));
    r11_min = std::min(r11_min, min_eigenvalue(p.R11.node(k)));
    q_min = std::min(q_min, min_eigenvalue(p.Q.node(k)));
  }
  report.r22_min_eig = r22_min;
  if (r22_min <= 0.0) {
    std::ostringstream os;
    os << "min eigenvalue of R22 over the grid is " << r22_min
       << "; uniform convexity requires R22 uniformly positive definite";
    add(Severity::kWarning, "R22_NOT_UNIFORMLY_POSITIVE", os.str());
  }
  if (r11_min < 0.0) {
    add(Severity::kInfo, "R11_INDEFINITE", "R11 indefinite");
  }
  if (q_min < 0.0) add(Severity::kInfo, "Q_INDEFINITE", "Q indefinite");
  if (min_eigenvalue(p.G) < 0.0) {
    add(Severity::kInfo, "G_INDEFINITE", "G indefinite");
  }
  return report;
}

void validate_terminal(const ProblemData& p, const TerminalData& xi) {
  if (xi.kind == TerminalData::Kind::kAffine) {
    if (xi.a.size() != p.n || xi.b.size() != p.n) {
      throw ValidationError("core_types/validate_terminal",
                            "affine terminal a and b must have n entries");
    }
    if (!xi.a.allFinite() || !xi.b.allFinite()) {
      throw ValidationError("core_types/validate_terminal",
                            "terminal data has non-finite entries");
    }
  } else if (xi.scale.size() != p.n) {
    throw ValidationError("core_types/validate_terminal",
                          "functional terminal scale must have n entries");
  }
}

}  // namespace bslq
