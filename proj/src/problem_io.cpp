#include "bslq/problem_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "bslq/errors.hpp"

namespace bslq {

namespace {

using nlohmann::json;

constexpr const char* kWhere = "core_types/parse_problem";

[[noreturn]] void fail(const std::string& msg) {
  throw ValidationError(kWhere, msg);
}

double finite_number(const json& v, const std::string& what) {
  if (!v.is_number()) fail(what + ": expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) fail(what + ": non-finite value");
  return x;
}

bool is_matrix(const json& v) {
  return v.is_array() && !v.empty() && v.front().is_array() &&
         (v.front().empty() || !v.front().front().is_array());
}

MatrixXd parse_matrix(const json& v, const std::string& what) {
  if (v.is_number()) {
    MatrixXd M(1, 1);
    M(0, 0) = finite_number(v, what);
    return M;
  }
  if (!is_matrix(v)) fail(what + ": expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(v.size());
  const auto cols = static_cast<Eigen::Index>(v.front().size());
  if (cols == 0) fail(what + ": empty row");
  MatrixXd M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = v[i];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      fail(what + ": ragged rows");
    }
    for (Eigen::Index j = 0; j < cols; ++j) {
      M(i, j) = finite_number(row[j], what);
    }
  }
  return M;
}

VectorXd parse_vector(const json& v, const std::string& what) {
  if (!v.is_array()) fail(what + ": expected an array");
  VectorXd x(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    // Accept both [x0, x1] and [[x0], [x1]].
    const json& e = v[i].is_array() && v[i].size() == 1 ? v[i][0] : v[i];
    x(static_cast<Eigen::Index>(i)) = finite_number(e, what);
  }
  return x;
}

CoefficientPath parse_path(const json& doc, const char* key,
                           const TimeGrid& grid, Interpolation interp) {
  if (!doc.contains(key)) fail(std::string("missing key \"") + key + "\"");
  const json& v = doc.at(key);
  if (v.is_number() || is_matrix(v)) {
    return CoefficientPath::constant(grid, parse_matrix(v, key), interp);
  }
  if (!v.is_array()) fail(std::string(key) + ": expected matrix or array");
  if (static_cast<int>(v.size()) != grid.n_nodes()) {
    std::ostringstream os;
    os << key << ": expected " << grid.n_nodes() << " per-node matrices, got "
       << v.size();
    fail(os.str());
  }
  std::vector<MatrixXd> values;
  values.reserve(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) {
    values.push_back(parse_matrix(v[k], std::string(key) + "[" +
                                            std::to_string(k) + "]"));
  }
  try {
    return CoefficientPath(grid, std::move(values), interp);
  } catch (const ValidationError& e) {
    fail(std::string(key) + ": " + e.what());
  }
}

TerminalData parse_terminal(const json& v, int n) {
  if (!v.is_object() || !v.contains("kind")) {
    fail("terminal: expected an object with \"kind\"");
  }
  const std::string kind = v.at("kind").get<std::string>();
  if (kind == "affine") {
    if (!v.contains("a") || !v.contains("b")) {
      fail("terminal: affine needs \"a\" and \"b\"");
    }
    return TerminalData::affine(parse_vector(v.at("a"), "terminal.a"),
                                parse_vector(v.at("b"), "terminal.b"));
  }
  if (kind == "functional") {
    if (!v.contains("name")) fail("terminal: functional needs \"name\"");
    VectorXd scale = v.contains("scale")
                         ? parse_vector(v.at("scale"), "terminal.scale")
                         : VectorXd::Ones(n);
    return TerminalData::functional(v.at("name").get<std::string>(), scale);
  }
  fail("terminal: unknown kind '" + kind + "'");
}

}  // namespace

ProblemFile parse_problem(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    std::ostringstream os;
    os << "malformed JSON at byte " << e.byte << ": " << e.what();
    fail(os.str());
  }
  if (!doc.is_object()) fail("top level must be an object");
  try {
    for (const char* key : {"n", "m", "T", "n_steps"}) {
      if (!doc.contains(key)) fail(std::string("missing key \"") + key + "\"");
    }
    const int n = doc.at("n").get<int>();
    const int m = doc.at("m").get<int>();
    const double T = finite_number(doc.at("T"), "T");
    const int n_steps = doc.at("n_steps").get<int>();
    if (n < 1 || m < 1) fail("n and m must be positive");
    const Interpolation interp = interpolation_from_string(
        doc.value("interpolation", std::string("linear")));
    const TimeGrid grid(T, n_steps);

    MatrixXd G = doc.contains("G") ? parse_matrix(doc.at("G"), "G")
                                   : MatrixXd::Zero(n, n);
    ProblemData p(n, m, grid, interp, parse_path(doc, "A", grid, interp),
                  parse_path(doc, "B", grid, interp),
                  parse_path(doc, "C", grid, interp), G,
                  parse_path(doc, "Q", grid, interp),
                  parse_path(doc, "S1", grid, interp),
                  parse_path(doc, "S2", grid, interp),
                  parse_path(doc, "R11", grid, interp),
                  parse_path(doc, "R12", grid, interp),
                  parse_path(doc, "R22", grid, interp));
    if (doc.contains("R21")) {
      const CoefficientPath R21 = parse_path(doc, "R21", grid, interp);
      for (int k = 0; k < grid.n_nodes(); ++k) {
        if (R21.node(k).rows() != p.R12.node(k).cols() ||
            R21.node(k).cols() != p.R12.node(k).rows() ||
            (R21.node(k) - p.R12.node(k).transpose()).cwiseAbs().maxCoeff() >
                1e-12) {
          fail("R21 must equal R12 transposed (node " + std::to_string(k) +
               ")");
        }
      }
    }
    p.symmetrize();
    if (!doc.contains("terminal")) fail("missing key \"terminal\"");
    TerminalData xi = parse_terminal(doc.at("terminal"), n);
    return ProblemFile{std::move(p), std::move(xi)};
  } catch (const json::exception& e) {
    fail(std::string("bad value: ") + e.what());
  }
}

ProblemFile load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cli/load_problem", "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_problem(ss.str());
}

nlohmann::json matrix_to_json(const MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

json path_to_json(const CoefficientPath& c) {
  bool constant = true;
  for (const auto& v : c.values()) constant = constant && v == c.node(0);
  if (constant) return matrix_to_json(c.node(0));
  json arr = json::array();
  for (const auto& v : c.values()) arr.push_back(matrix_to_json(v));
  return arr;
}

json vector_to_json(const VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

}  // namespace

nlohmann::json problem_to_json(const ProblemData& p, const TerminalData& xi) {
  json doc;
  doc["n"] = p.n;
  doc["m"] = p.m;
  doc["T"] = p.grid.T();
  doc["n_steps"] = p.grid.n_steps();
  doc["interpolation"] = to_string(p.interpolation);
  doc["A"] = path_to_json(p.A);
  doc["B"] = path_to_json(p.B);
  doc["C"] = path_to_json(p.C);
  doc["G"] = matrix_to_json(p.G);
  doc["Q"] = path_to_json(p.Q);
  doc["S1"] = path_to_json(p.S1);
  doc["S2"] = path_to_json(p.S2);
  doc["R11"] = path_to_json(p.R11);
  doc["R12"] = path_to_json(p.R12);
  doc["R22"] = path_to_json(p.R22);
  if (xi.kind == TerminalData::Kind::kAffine) {
    doc["terminal"] = {{"kind", "affine"},
                       {"a", vector_to_json(xi.a)},
                       {"b", vector_to_json(xi.b)}};
  } else {
    doc["terminal"] = {{"kind", "functional"},
                       {"name", xi.name},
                       {"scale", vector_to_json(xi.scale)}};
  }
  return doc;
}

const char* problem_schema_help() {
  return R"(Problem file (JSON):
  {
    "n": int, "m": int,              state / control dimension
    "T": number, "n_steps": int,     horizon and uniform grid (n_steps >= 2)
    "interpolation": "linear" | "piecewise-constant-left"
    "A": n x n, "B": n x m, "C": n x n,
    "G": n x n (constant), "Q": n x n,
    "S1": n x n, "S2": m x n,
    "R11": n x n, "R12": n x m, "R22": m x m,
    "R21": optional, must equal R12^T,
    "terminal": {"kind": "affine", "a": [n], "b": [n]}      xi = a + b W(T)
              | {"kind": "functional", "name": id, "scale": [n]}
                                     xi = g(W(T)) * scale,
                                     id in zero, w, w2, w3, abs, relu
  }
Each coefficient is one row-major matrix [[...],[...]] (constant) or an array
of n_steps+1 matrices (one per node). G, Q, R11, R22 are symmetrized.
)";
}

}  // namespace bslq
