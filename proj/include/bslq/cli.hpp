#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace bslq {

struct RunConfig {
  std::string problem_path;
  std::string subcommand;  // solve, verify, lambda-sweep, oracle, probe, reduce
  std::string out_dir = ".";
  int paths = 100000;
  std::uint64_t seed = 42;
  std::vector<double> epsilons{0.5, 1.0};
  std::vector<int> depths{2, 4, 8, 16};
  std::vector<double> lambdas;  // empty: {l0, 2 l0, 4 l0, 8 l0}
  int n_steps = 0;              // 0 keeps the file's grid
  int n_probe_controls = 20;
  int lsmc_paths = 20000;
  int lsmc_degree = 3;
  int per_path_csv = 0;         // paths written to paths.csv by verify
};

enum ExitCode { kExitOk = 0, kExitValidation = 1, kExitNumerical = 2, kExitIo = 3 };

/// Runs one subcommand, writing summary.json plus CSV artifacts to
/// out_dir. Errors are reported on `err` and mapped to exit codes.
int run(const RunConfig& config, std::ostream& err);

/// Parses argv (CLI11) and runs.
int cli_main(int argc, char** argv);

/// JSON text with doubles printed at 17 significant digits.
std::string dump_json(const nlohmann::json& j, int indent = 2);

}  // namespace bslq
