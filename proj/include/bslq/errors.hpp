#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace bslq {

/// Base class for all errors raised by the toolkit. Every error names the
/// module and operation that raised it so the CLI can report it verbatim.
class Error : public std::runtime_error {
 public:
  Error(std::string where, const std::string& message)
      : std::runtime_error(where + ": " + message), where_(std::move(where)) {}

  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

/// Structural problem defects: bad shapes, non-finite data, malformed files.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

enum class NumericalCode {
  kSingularR22,
  kSingularRSigma,
  kBlowUp,
  kNotFound,
  kIllConditionedRegression,
  kSingularSystem,
  kNonFinite,
};

const char* to_string(NumericalCode code);

/// Numerical failure (singularity, blow-up, failed search). Carries the time
/// at which it happened when that is meaningful.
class NumericalError : public Error {
 public:
  NumericalError(std::string where, NumericalCode code,
                 const std::string& message,
                 std::optional<double> t = std::nullopt)
      : Error(std::move(where),
              std::string(to_string(code)) + ": " + message),
        code_(code),
        t_(t) {}

  NumericalCode code() const { return code_; }
  std::optional<double> time() const { return t_; }

 private:
  NumericalCode code_;
  std::optional<double> t_;
};

inline const char* to_string(NumericalCode code) {
  switch (code) {
    case NumericalCode::kSingularR22: return "SingularR22";
    case NumericalCode::kSingularRSigma: return "SingularRSigma";
    case NumericalCode::kBlowUp: return "BlowUp";
    case NumericalCode::kNotFound: return "NotFound";
    case NumericalCode::kIllConditionedRegression:
      return "IllConditionedRegression";
    case NumericalCode::kSingularSystem: return "SingularSystem";
    case NumericalCode::kNonFinite: return "NonFinite";
  }
  return "Unknown";
}

}  // namespace bslq
