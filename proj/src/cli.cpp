#include "bslq/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "bslq/errors.hpp"
#include "bslq/oracle.hpp"
#include "bslq/problem_io.hpp"
#include "bslq/simulate.hpp"

namespace bslq {

using nlohmann::json;

namespace {

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_json(const json& j, std::ostringstream& os, int indent, int depth) {
  const std::string pad = indent > 0 ? std::string(indent * (depth + 1), ' ') : "";
  const std::string pad_close = indent > 0 ? std::string(indent * depth, ' ') : "";
  const char* nl = indent > 0 ? "\n" : "";
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) { os << "{}"; return; }
      os << "{" << nl;
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) os << "," << nl;
        first = false;
        os << pad << json(it.key()).dump() << (indent > 0 ? ": " : ":");
        write_json(it.value(), os, indent, depth + 1);
      }
      os << nl << pad_close << "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) { os << "[]"; return; }
      os << "[" << nl;
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i > 0) os << "," << nl;
        os << pad;
        write_json(j[i], os, indent, depth + 1);
      }
      os << nl << pad_close << "]";
      return;
    }
    case json::value_t::number_float: {
      const double x = j.get<double>();
      os << (std::isfinite(x) ? fmt17(x) : "null");
      return;
    }
    default:
      os << j.dump();
  }
}

class OutDir {
 public:
  explicit OutDir(const std::string& dir) : dir_(dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError("cli/run", "cannot create '" + dir + "': " + ec.message());
  }

  void write(const std::string& name, const std::string& text) const {
    const auto path = std::filesystem::path(dir_) / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cli/run", "cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("cli/run", "write failed for '" + path.string() + "'");
  }

 private:
  std::string dir_;
};

std::string matrix_header(const std::string& prefix, Eigen::Index r,
                          Eigen::Index c) {
  std::string s;
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) {
      s += "," + prefix + "_" + std::to_string(i) + std::to_string(j);
    }
  }
  return s;
}

std::string matrix_row(const MatrixXd& M) {
  std::string s;
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) s += "," + fmt17(M(i, j));
  }
  return s;
}

std::string path_csv(const std::string& prefix, const CoefficientPath& c) {
  std::string s = "t" + matrix_header(prefix, c.rows(), c.cols()) + "\n";
  for (int k = 0; k < c.grid().n_nodes(); ++k) {
    s += fmt17(c.grid().t(k)) + matrix_row(c.node(k)) + "\n";
  }
  return s;
}

json vec_json(const VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json base_summary(const RunConfig& cfg, const ProblemData& p) {
  json s;
  s["subcommand"] = cfg.subcommand;
  s["seed"] = cfg.seed;
  s["n"] = p.n;
  s["m"] = p.m;
  s["T"] = p.grid.T();
  s["n_steps"] = p.grid.n_steps();
  return s;
}

json validation_json(const ValidationReport& rep) {
  json f = json::array();
  for (const auto& x : rep.findings) {
    f.push_back({{"severity", to_string(x.severity)},
                 {"code", x.code},
                 {"message", x.message}});
  }
  return {{"ok", rep.ok}, {"r22_min_eig", rep.r22_min_eig}, {"findings", f}};
}

std::string sigma_csv(const SigmaSolution& s) {
  const Eigen::Index n = s.Sigma.front().rows();
  std::string out = "t" + matrix_header("Sigma", n, n) + ",cond_RSigma\n";
  for (int k = 0; k < s.grid.n_nodes(); ++k) {
    out += fmt17(s.grid.t(k)) + matrix_row(s.Sigma[k]) + "," +
           fmt17(s.RSigma_cond[k]) + "\n";
  }
  return out;
}

int cmd_solve(const RunConfig& cfg, const ProblemFile& pf, const OutDir& out,
              json& summary) {
  const ProblemData& p = pf.problem;
  const ReducedProblem rp = reduce_problem(p);
  summary["status"] = "running";
  const SigmaSolution sigma = solve_sigma(rp);
  out.write("sigma.csv", sigma_csv(sigma));
  summary["sigma"] = {{"residual_sup", sigma.residual_sup},
                      {"min_eig", sigma.min_eig},
                      {"max_cond_RSigma",
                       *std::max_element(sigma.RSigma_cond.begin(),
                                         sigma.RSigma_cond.end())}};
  if (pf.terminal.kind == TerminalData::Kind::kAffine) {
    const AffineBsdeSolution bsde =
        solve_affine_terminal(rp, sigma, pf.terminal.a, pf.terminal.b);
    std::string csv = "t" + matrix_header("m", p.n, 1) + matrix_header("N", p.n, 1) + "\n";
    for (int k = 0; k < p.grid.n_nodes(); ++k) {
      csv += fmt17(p.grid.t(k)) + matrix_row(bsde.m[k]) + matrix_row(bsde.N[k]) + "\n";
    }
    out.write("bsde.csv", csv);
    summary["value"] = value_formula(rp, sigma, bsde, pf.terminal);
    const LoopGains& g = node_gains(rp, sigma).front();
    summary["u0"] = vec_json(g.uphi * bsde.m[0] + g.ubeta * bsde.N[0]);
  } else {
    const RegressionBsdeSolution sol = solve_lsmc(
        rp, sigma, pf.terminal, cfg.lsmc_paths, cfg.lsmc_degree, cfg.seed);
    summary["value"] = nullptr;
    summary["phi0"] = vec_json(sol.phi(0, 0.0));
    summary["lsmc"] = {{"paths", cfg.lsmc_paths},
                       {"degree", cfg.lsmc_degree},
                       {"terminal_fit_residual", sol.terminal_fit_residual}};
  }
  summary["status"] = "ok";
  return kExitOk;
}

Path constant_control(const ProblemData& p, double level) {
  return Path(p.grid.n_nodes(), VectorXd::Constant(p.m, level));
}

Path sine_control(const ProblemData& p) {
  Path v;
  for (int k = 0; k < p.grid.n_nodes(); ++k) {
    v.push_back(VectorXd::Constant(
        p.m, std::sin(2.0 * M_PI * p.grid.t(k) / p.grid.T())));
  }
  return v;
}

int cmd_verify(const RunConfig& cfg, const ProblemFile& pf, const OutDir& out,
               json& summary) {
  const ProblemData& p = pf.problem;
  const OptimalPipeline pl = build_pipeline(p, pf.terminal);
  const BrownianBatch batch(p.grid, cfg.paths, cfg.seed);
  SimOptions opt;
  opt.stored_paths = cfg.per_path_csv;
  const SimulationResult r = simulate_optimal(pl, batch, opt);
  summary["value_formula"] = r.value_formula;
  summary["mc_cost_mean"] = r.cost.mean;
  summary["mc_cost_se"] = r.cost.se;
  summary["stationarity_rms"] = r.stationarity_rms;
  summary["terminal_mismatch_max"] = r.terminal_mismatch.max;
  summary["forward_euler_mismatch_rms"] = r.forward_euler_mismatch.rms;
  summary["paths"] = cfg.paths;

  json table = json::array();
  std::string csv = "perturbation,eps,dJ,eps2_J0v,gap,se\n";
  const std::pair<const char*, Path> perturbations[] = {
      {"constant", constant_control(p, 1.0)}, {"sine", sine_control(p)}};
  for (const auto& [name, v] : perturbations) {
    for (const auto& row : perturbation_test(pl, v, cfg.epsilons, batch)) {
      table.push_back({{"perturbation", name},
                       {"eps", row.eps},
                       {"dJ", row.dJ},
                       {"eps2_J0v", row.eps2_J0v},
                       {"gap", row.gap},
                       {"se", row.se}});
      csv += std::string(name) + "," + fmt17(row.eps) + "," + fmt17(row.dJ) +
             "," + fmt17(row.eps2_J0v) + "," + fmt17(row.gap) + "," +
             fmt17(row.se) + "\n";
    }
  }
  summary["perturbation_table"] = table;
  out.write("perturbation.csv", csv);

  const ProbeResult probe =
      convexity_probe(p, cfg.n_probe_controls, batch, cfg.seed);
  summary["probe_min_ratio"] = probe.min_ratio;
  summary["probe_min_ratio_se"] = probe.se;

  if (cfg.per_path_csv > 0) {
    std::string pc = "path,t,W" + matrix_header("X", p.n, 1) +
                     matrix_header("Y", p.n, 1) + matrix_header("Z", p.n, 1) +
                     matrix_header("u", p.m, 1) + "\n";
    for (std::size_t i = 0; i < r.X.size(); ++i) {
      for (int k = 0; k < p.grid.n_nodes(); ++k) {
        pc += std::to_string(i) + "," + fmt17(p.grid.t(k)) + "," +
              fmt17(r.W[i][k]) + matrix_row(r.X[i][k]) + matrix_row(r.Y[i][k]) +
              matrix_row(r.Z[i][k]) + matrix_row(r.u[i][k]) + "\n";
      }
    }
    out.write("paths.csv", pc);
  }
  summary["status"] = "ok";
  return kExitOk;
}

int cmd_sweep(const RunConfig& cfg, const ProblemFile& pf, const OutDir& out,
              json& summary) {
  const ReducedProblem rp = reduce_problem(pf.problem);
  std::vector<double> lambdas = cfg.lambdas;
  if (lambdas.empty()) {
    const double l0 = find_lambda0(rp);
    summary["lambda0"] = l0;
    lambdas = {l0, 2 * l0, 4 * l0, 8 * l0};
  }
  const SweepReport rep = lambda_sweep(rp, lambdas);
  std::string csv = "lambda,status,min_monotone_gap,sup_inverse_gap\n";
  json entries = json::array();
  for (const auto& e : rep.entries) {
    csv += fmt17(e.lambda) + "," + to_string(e.status) + "," +
           fmt17(e.min_monotone_gap) + "," + fmt17(e.sup_inverse_gap) + "\n";
    entries.push_back({{"lambda", e.lambda},
                       {"status", to_string(e.status)},
                       {"min_monotone_gap", e.min_monotone_gap},
                       {"sup_inverse_gap", e.sup_inverse_gap}});
  }
  out.write("lambda_sweep.csv", csv);
  summary["entries"] = entries;
  summary["monotone"] = rep.monotone;
  summary["gap_strictly_decreasing"] = rep.gap_strictly_decreasing;
  summary["status"] = "ok";
  return kExitOk;
}

int cmd_oracle(const RunConfig& cfg, const ProblemFile& pf, const OutDir& out,
               json& summary) {
  const OptimalPipeline pl = build_pipeline(pf.problem, pf.terminal);
  const ContinuousReference ref = continuous_reference(pl);
  const CompareTable table =
      oracle_ladder(pf.problem, pf.terminal, ref, cfg.depths);
  std::string csv = "depth,status,tree_value,value_gap,u_gap,included\n";
  json rows = json::array();
  for (const auto& r : table.rows) {
    csv += std::to_string(r.depth) + "," + to_string(r.status) + "," +
           fmt17(r.tree_value) + "," + fmt17(r.value_gap) + "," +
           fmt17(r.u_gap) + "," + (r.included ? "1" : "0") + "\n";
    rows.push_back({{"depth", r.depth},
                    {"status", to_string(r.status)},
                    {"tree_value", r.tree_value},
                    {"value_gap", r.value_gap},
                    {"u_gap", r.u_gap},
                    {"included", r.included}});
  }
  out.write("oracle.csv", csv);
  summary["value"] = ref.value;
  summary["rows"] = rows;
  summary["nonincreasing"] = table.nonincreasing;
  summary["status"] = "ok";
  return kExitOk;
}

int cmd_probe(const RunConfig& cfg, const ProblemFile& pf, const OutDir& out,
              json& summary) {
  const BrownianBatch batch(pf.problem.grid, cfg.paths, cfg.seed);
  const ProbeResult r =
      convexity_probe(pf.problem, cfg.n_probe_controls, batch, cfg.seed);
  std::string csv = "control,ratio,se\n";
  for (std::size_t i = 0; i < r.ratios.size(); ++i) {
    csv += std::to_string(i) + "," + fmt17(r.ratios[i]) + "," + fmt17(r.ses[i]) + "\n";
  }
  out.write("probe.csv", csv);
  summary["probe_min_ratio"] = r.min_ratio;
  summary["probe_min_ratio_se"] = r.se;
  summary["argmin"] = r.argmin;
  summary["falsified"] = r.min_ratio + 3.0 * r.se < 0.0;
  summary["status"] = "ok";
  return kExitOk;
}

int cmd_reduce(const RunConfig&, const ProblemFile& pf, const OutDir& out,
               json& summary) {
  const ReducedProblem rp = reduce_problem(pf.problem);
  out.write("H.csv", path_csv("H", rp.H));
  out.write("C_tilde.csv", path_csv("C", rp.sC));
  out.write("S1H.csv", path_csv("S1H", rp.S1H));
  out.write("S2H.csv", path_csv("S2H", rp.S2H));
  out.write("R11H.csv", path_csv("R11H", rp.R11H));
  summary["H_T"] = matrix_to_json(rp.H.node(rp.grid().n_steps()));
  summary["status"] = "ok";
  return kExitOk;
}

}  // namespace

std::string dump_json(const json& j, int indent) {
  std::ostringstream os;
  write_json(j, os, indent, 0);
  os << "\n";
  return os.str();
}

int run(const RunConfig& cfg, std::ostream& err) {
  json summary;
  summary["subcommand"] = cfg.subcommand;
  summary["seed"] = cfg.seed;
  std::unique_ptr<OutDir> out;
  auto finish = [&](int code) {
    if (out) {
      try {
        out->write("summary.json", dump_json(summary));
      } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return static_cast<int>(kExitIo);
      }
    }
    return code;
  };
  try {
    out = std::make_unique<OutDir>(cfg.out_dir);
    ProblemFile pf = load_problem(cfg.problem_path);
    if (cfg.n_steps > 0) pf.problem = pf.problem.resampled(cfg.n_steps);
    summary = base_summary(cfg, pf.problem);
    const ValidationReport rep = validate_problem(pf.problem);
    summary["validation"] = validation_json(rep);
    if (!rep.ok) {
      summary["status"] = "invalid";
      for (const auto& f : rep.findings) {
        if (f.severity == Severity::kError) {
          err << "error: core_types/validate_problem: " << f.code << ": "
              << f.message << "\n";
        }
      }
      return finish(kExitValidation);
    }
    validate_terminal(pf.problem, pf.terminal);
    int code = kExitOk;
    if (cfg.subcommand == "solve") code = cmd_solve(cfg, pf, *out, summary);
    else if (cfg.subcommand == "verify") code = cmd_verify(cfg, pf, *out, summary);
    else if (cfg.subcommand == "lambda-sweep") code = cmd_sweep(cfg, pf, *out, summary);
    else if (cfg.subcommand == "oracle") code = cmd_oracle(cfg, pf, *out, summary);
    else if (cfg.subcommand == "probe") code = cmd_probe(cfg, pf, *out, summary);
    else if (cfg.subcommand == "reduce") code = cmd_reduce(cfg, pf, *out, summary);
    else throw ValidationError("cli/run", "unknown subcommand '" + cfg.subcommand + "'");
    return finish(code);
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    summary["status"] = "error";
    summary["error"] = {{"code", to_string(e.code())},
                        {"where", e.where()},
                        {"message", e.what()}};
    if (e.time()) summary["error"]["t"] = *e.time();
    return finish(kExitNumerical);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    summary["status"] = "error";
    summary["error"] = {{"where", e.where()}, {"message", e.what()}};
    return out ? finish(kExitIo) : static_cast<int>(kExitIo);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    summary["status"] = "invalid";
    summary["error"] = {{"where", e.where()}, {"message", e.what()}};
    return finish(kExitValidation);
  }
}

int cli_main(int argc, char** argv) {
  CLI::App app{"Solver and verifier for indefinite backward stochastic LQ problems"};
  app.footer(problem_schema_help());
  app.require_subcommand(1);
  RunConfig cfg;

  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"solve", "Sigma, auxiliary BSDE and value; writes sigma.csv, bsde.csv"},
      {"verify", "Monte Carlo certificates: value identity, stationarity, "
                 "perturbations, convexity probe"},
      {"lambda-sweep", "P_lambda monotonicity and P_lambda^{-1} -> Sigma"},
      {"oracle", "Exact binomial-lattice solutions against the value"},
      {"probe", "Random-control convexity probe"},
      {"reduce", "H(t) and the transformed weights as CSV"},
  };
  for (const auto& s : subs) {
    CLI::App* sc = app.add_subcommand(s.name, s.help);
    sc->add_option("problem", cfg.problem_path, "Problem JSON file")->required();
    sc->add_option("--out", cfg.out_dir, "Output directory")->capture_default_str();
    sc->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
    sc->add_option("--n-steps", cfg.n_steps, "Resample the grid to this many steps");
    if (std::string(s.name) == "verify" || std::string(s.name) == "probe") {
      sc->add_option("--paths", cfg.paths, "Monte Carlo paths")
          ->capture_default_str()
          ->check(CLI::PositiveNumber);
      sc->add_option("--n-probe-controls", cfg.n_probe_controls,
                     "Random controls in the convexity probe")
          ->capture_default_str()
          ->check(CLI::PositiveNumber);
    }
    if (std::string(s.name) == "verify") {
      sc->add_option("--epsilons", cfg.epsilons, "Perturbation sizes")
          ->delimiter(',')
          ->capture_default_str();
      sc->add_option("--per-path-csv", cfg.per_path_csv,
                     "Write this many trajectories to paths.csv");
    }
    if (std::string(s.name) == "oracle") {
      sc->add_option("--depths", cfg.depths, "Lattice depths (2..16)")
          ->delimiter(',')
          ->capture_default_str();
    }
    if (std::string(s.name) == "lambda-sweep") {
      sc->add_option("--lambdas", cfg.lambdas,
                     "Increasing lambdas (default: l0 * {1,2,4,8})")
          ->delimiter(',');
    }
    if (std::string(s.name) == "solve") {
      sc->add_option("--lsmc-paths", cfg.lsmc_paths,
                     "Regression paths for functional terminal data")
          ->capture_default_str();
      sc->add_option("--degree", cfg.lsmc_degree, "Regression polynomial degree")
          ->capture_default_str();
    }
    sc->callback([&cfg, sc] { cfg.subcommand = sc->get_name(); });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(kExitValidation);
  }
  return run(cfg, std::cerr);
}

}  // namespace bslq
