#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bslq/errors.hpp"
#include "bslq/instances.hpp"
#include "bslq/oracle.hpp"
#include "bslq/problem_io.hpp"
#include "bslq/simulate.hpp"

namespace py = pybind11;
using namespace bslq;

namespace {

py::dict report_dict(const ValidationReport& r) {
  py::list findings;
  for (const auto& f : r.findings) {
    findings.append(py::dict(py::arg("severity") = to_string(f.severity),
                             py::arg("code") = f.code,
                             py::arg("message") = f.message));
  }
  return py::dict(py::arg("ok") = r.ok, py::arg("r22_min_eig") = r.r22_min_eig,
                  py::arg("findings") = findings);
}

py::tuple as_tuple(const ProblemFile& f) {
  return py::make_tuple(f.problem, f.terminal);
}

}  // namespace

PYBIND11_MODULE(_bslq, mod) {
  mod.doc() = "Indefinite backward stochastic LQ solver";

  // The module holds references to the exception types for its lifetime.
  static PyObject* base_exc = py::exception<Error>(mod, "Error").ptr();
  static PyObject* validation_exc =
      py::exception<ValidationError>(mod, "ValidationError", base_exc).ptr();
  static PyObject* numerical_exc =
      py::exception<NumericalError>(mod, "NumericalError", base_exc).ptr();
  static PyObject* io_exc = py::exception<IoError>(mod, "IoError", base_exc).ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const NumericalError& e) {
      py::object err = py::handle(numerical_exc)(e.what());
      err.attr("code") = to_string(e.code());
      err.attr("where") = e.where();
      err.attr("t") = e.time() ? py::cast(*e.time()) : py::none();
      PyErr_SetObject(numerical_exc, err.ptr());
    } catch (const ValidationError& e) {
      PyErr_SetString(validation_exc, e.what());
    } catch (const IoError& e) {
      PyErr_SetString(io_exc, e.what());
    } catch (const Error& e) {
      PyErr_SetString(base_exc, e.what());
    }
  });

  py::class_<TimeGrid>(mod, "TimeGrid")
      .def(py::init<double, int>(), py::arg("T"), py::arg("n_steps"))
      .def_property_readonly("T", &TimeGrid::T)
      .def_property_readonly("n_steps", &TimeGrid::n_steps)
      .def_property_readonly("h", &TimeGrid::h)
      .def("t", &TimeGrid::t);

  py::class_<ProblemData>(mod, "ProblemData")
      .def_readonly("n", &ProblemData::n)
      .def_readonly("m", &ProblemData::m)
      .def_readonly("grid", &ProblemData::grid)
      .def_readonly("G", &ProblemData::G)
      .def("resampled", &ProblemData::resampled, py::arg("n_steps"))
      .def("to_json", [](const ProblemData& p, const TerminalData& xi) {
        return problem_to_json(p, xi).dump(2);
      });

  py::class_<TerminalData>(mod, "TerminalData")
      .def_static("affine", &TerminalData::affine, py::arg("a"), py::arg("b"))
      .def_static("functional", &TerminalData::functional, py::arg("name"),
                  py::arg("scale"))
      .def("evaluate", &TerminalData::evaluate, py::arg("w_T"))
      .def_readonly("a", &TerminalData::a)
      .def_readonly("b", &TerminalData::b);

  mod.def("load_problem", [](const std::string& path) {
    return as_tuple(load_problem(path));
  });
  mod.def("parse_problem", [](const std::string& text) {
    return as_tuple(parse_problem(text));
  });
  mod.def("validate_problem", [](const ProblemData& p) {
    return report_dict(validate_problem(p));
  });

  mod.def("maximin_instance", &maximin_instance, py::arg("a"), py::arg("n_steps"));
  mod.def("scalar_instance", &scalar_instance, py::arg("n_steps"), py::arg("T") = 1.0);
  mod.def("general_instance", &general_instance, py::arg("n_steps"));
  mod.def("indefinite_2d_instance", &indefinite_2d_instance, py::arg("n_steps"));
  mod.def("necessity_instance", &necessity_instance, py::arg("n_steps"));
  mod.def("zero_instance", &zero_instance, py::arg("n"), py::arg("m"),
          py::arg("n_steps"), py::arg("r22") = 1.0);

  py::class_<ReducedProblem>(mod, "ReducedProblem")
      .def_property_readonly("grid", &ReducedProblem::grid)
      .def_property_readonly("H", [](const ReducedProblem& rp) { return rp.H.values(); })
      .def_property_readonly("S1H", [](const ReducedProblem& rp) { return rp.S1H.values(); })
      .def_property_readonly("S2H", [](const ReducedProblem& rp) { return rp.S2H.values(); })
      .def_property_readonly("R11H", [](const ReducedProblem& rp) { return rp.R11H.values(); })
      .def_property_readonly("C_tilde", [](const ReducedProblem& rp) { return rp.sC.values(); });
  mod.def("reduce_problem", &reduce_problem, py::arg("problem"));

  py::class_<SigmaSolution>(mod, "SigmaSolution")
      .def_readonly("Sigma", &SigmaSolution::Sigma)
      .def_readonly("RSigma_cond", &SigmaSolution::RSigma_cond)
      .def_readonly("residual_sup", &SigmaSolution::residual_sup)
      .def_readonly("min_eig", &SigmaSolution::min_eig);
  mod.def("solve_sigma", &solve_sigma, py::arg("reduced"));
  mod.def("riccati_residual", [](const SigmaSolution& s, const ReducedProblem& rp) {
    return riccati_residual(s, rp).sup;
  });

  py::class_<RiccatiSolution>(mod, "RiccatiSolution")
      .def_readonly("P", &RiccatiSolution::P)
      .def_readonly("block_min_eig", &RiccatiSolution::block_min_eig)
      .def_property_readonly("status", [](const RiccatiSolution& s) {
        return std::string(to_string(s.status));
      });
  mod.def("solve_forward_riccati", &solve_forward_riccati, py::arg("reduced"),
          py::arg("lam"));
  mod.def("find_lambda0", &find_lambda0, py::arg("reduced"),
          py::arg("lambda_init") = 1.0, py::arg("growth") = 4.0,
          py::arg("max_doublings") = 20);
  mod.def("lambda_sweep",
          [](const ReducedProblem& rp, const std::vector<double>& lambdas) {
            auto rep = lambda_sweep(rp, lambdas);
            py::list entries;
            for (const auto& e : rep.entries) {
              entries.append(py::dict(py::arg("lambda") = e.lambda,
                                      py::arg("status") = to_string(e.status),
                                      py::arg("sup_inverse_gap") = e.sup_inverse_gap,
                                      py::arg("min_monotone_gap") = e.min_monotone_gap));
            }
            return py::dict(py::arg("entries") = entries,
                            py::arg("monotone") = rep.monotone,
                            py::arg("gap_strictly_decreasing") = rep.gap_strictly_decreasing);
          },
          py::arg("reduced"), py::arg("lambdas"));

  py::class_<OptimalPipeline>(mod, "OptimalPipeline")
      .def_property_readonly("sigma", [](const OptimalPipeline& pl) { return pl.sigma; })
      .def_property_readonly("m", [](const OptimalPipeline& pl) { return pl.bsde.m; })
      .def_property_readonly("N", [](const OptimalPipeline& pl) { return pl.bsde.N; })
      .def("value", [](const OptimalPipeline& pl) {
        return value_formula(pl.rp, pl.sigma, pl.bsde, pl.xi);
      });
  mod.def("build_pipeline", &build_pipeline, py::arg("problem"), py::arg("xi"));
  mod.def("simulate",
          [](const OptimalPipeline& pl, int n_paths, std::uint64_t seed) {
            SimulationResult r;
            {
              py::gil_scoped_release release;
              r = simulate_optimal(pl, sample_paths(pl.grid(), n_paths, seed));
            }
            return py::dict(py::arg("value_formula") = r.value_formula,
                            py::arg("cost_mean") = r.cost.mean,
                            py::arg("cost_se") = r.cost.se,
                            py::arg("stationarity_rms") = r.stationarity_rms,
                            py::arg("terminal_mismatch_max") = r.terminal_mismatch.max);
          },
          py::arg("pipeline"), py::arg("n_paths"), py::arg("seed") = 42);

  mod.def("oracle_ladder",
          [](const ProblemData& p, const TerminalData& xi, const std::vector<int>& depths) {
            auto pl = build_pipeline(p, xi);
            auto tab = oracle_ladder(p, xi, continuous_reference(pl), depths);
            py::list rows;
            for (const auto& r : tab.rows) {
              rows.append(py::dict(py::arg("depth") = r.depth,
                                   py::arg("status") = to_string(r.status),
                                   py::arg("tree_value") = r.tree_value,
                                   py::arg("value_gap") = r.value_gap,
                                   py::arg("u_gap") = r.u_gap));
            }
            return rows;
          },
          py::arg("problem"), py::arg("xi"), py::arg("depths"));

  mod.def("convexity_probe",
          [](const ProblemData& p, int n_controls, int n_paths, std::uint64_t seed) {
            auto r = convexity_probe(p, n_controls, sample_paths(p.grid, n_paths, seed), seed);
            return py::dict(py::arg("min_ratio") = r.min_ratio, py::arg("se") = r.se,
                            py::arg("ratios") = r.ratios);
          },
          py::arg("problem"), py::arg("n_controls"), py::arg("n_paths"),
          py::arg("seed") = 42);
}
