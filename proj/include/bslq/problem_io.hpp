#pragma once

#include <nlohmann/json.hpp>
#include <string>

#include "bslq/core_types.hpp"

namespace bslq {

struct ProblemFile {
  ProblemData problem;
  TerminalData terminal;
};

/// Parses the JSON problem format:
///
///   {"n","m","T","n_steps","interpolation","A","B","C","G","Q","S1","S2",
///    "R11","R12","R22","terminal"}
///
/// Each coefficient is a single row-major matrix (constant in time) or an
/// array of n_steps+1 per-node matrices. "R21" may be given but must equal
/// R12 transposed. Symmetric-role matrices are symmetrized on ingest.
/// Throws ValidationError (with the parse location for malformed JSON).
ProblemFile parse_problem(const std::string& text);
ProblemFile load_problem(const std::string& path);

/// Inverse of parse_problem; constant paths are written as one matrix.
nlohmann::json problem_to_json(const ProblemData& p, const TerminalData& xi);

/// Human-readable description of the problem file schema (CLI --help).
const char* problem_schema_help();

nlohmann::json matrix_to_json(const MatrixXd& M);

}  // namespace bslq
