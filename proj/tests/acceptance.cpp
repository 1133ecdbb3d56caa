// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "bslq/errors.hpp"
#include "bslq/instances.hpp"
#include "bslq/oracle.hpp"
#include "bslq/simulate.hpp"

using namespace bslq;

namespace {

// Tolerances.
constexpr double kSigmaExactTol = 1e-10;
constexpr double kOrderRatioLo = 13.0, kOrderRatioHi = 19.0;  // ~16 per halving
constexpr double kMonotoneTol = -1e-8;
constexpr double kScalarGapTol = 1e-8;
constexpr double kPsdTol = -1e-10;
constexpr double kStationarityTol = 1e-10;
constexpr double kValueRelTol = 0.05;
constexpr double kDiscC = 0.5;  // C in the "3 SE + C h" bounds
constexpr double kOracleFinalFrac = 0.25;
constexpr double kTerminalFitTol = 1e-10;
constexpr int kPaths = 100000;
constexpr std::uint64_t kSeed = 42;

VectorXd v1(double x) { return VectorXd::Constant(1, x); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %2d %s  %s\n", id, pass ? "PASS" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

void guarded(int id, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, false, std::string("exception: ") + e.what());
  }
}

struct Instance {
  std::string name;
  ProblemData p;
  TerminalData xi;
};

std::vector<Instance> suite(int n) {
  VectorXd a(2), b(2);
  a << 1, -0.5;
  b << 0.5, 1;
  ConstantCoefficients drift;
  drift.A = MatrixXd::Constant(1, 1, 0.8);
  drift.C = MatrixXd::Constant(1, 1, -0.6);
  drift.R22 = MatrixXd::Identity(1, 1);
  return {
      {"maximin(a=2)", maximin_instance(2.0, n), TerminalData::affine(v1(0), v1(1))},
      {"maximin(a=3)", maximin_instance(3.0, n), TerminalData::affine(v1(0.5), v1(1))},
      {"scalar", scalar_instance(n), TerminalData::affine(v1(1), v1(1))},
      {"general", general_instance(n), TerminalData::affine(v1(0.5), v1(1))},
      {"indefinite_2d", indefinite_2d_instance(n), TerminalData::affine(a, b)},
      {"constant_drift", constant_problem(1, 1, 1.0, n, drift),
       TerminalData::affine(v1(0.4), v1(1.5))},
      {"zero_2x1", zero_instance(2, 1, n), TerminalData::affine(a, b)},
  };
}

void riccati_order() {
  auto t0 = std::chrono::steady_clock::now();
  double sup_err = 0;
  for (int n : {100, 200, 400}) {
    auto rp = reduce_problem(scalar_instance(n));
    auto s = solve_sigma(rp);
    for (int k = 0; k <= n; ++k) {
      sup_err = std::max(sup_err, std::abs(s.Sigma[k](0, 0) - (1.0 - rp.grid().t(k))));
    }
  }
  std::vector<double> res;
  for (int n : {100, 200, 400}) {
    auto rp = reduce_problem(maximin_instance(2.0, n));
    res.push_back(riccati_residual(solve_sigma(rp), rp).sup);
  }
  const double r1 = res[0] / res[1], r2 = res[1] / res[2];
  const double dt = seconds_since(t0);
  const bool ok = sup_err <= kSigmaExactTol && r1 >= kOrderRatioLo &&
                  r1 <= kOrderRatioHi && r2 >= kOrderRatioLo &&
                  r2 <= kOrderRatioHi && dt < 1.0;
  report(1, ok,
         fmt("scalar sup|Sigma-(T-t)|=%.2e; maximin residual %.3e/%.3e/%.3e "
             "ratios %.2f %.2f; %.2fs",
             sup_err, res[0], res[1], res[2], r1, r2, dt));
}

void lambda_limit() {
  auto t0 = std::chrono::steady_clock::now();
  auto rp = reduce_problem(maximin_instance(2.0, 200));
  const double l = find_lambda0(rp);
  auto rep = lambda_sweep(rp, {l, 2 * l, 4 * l, 8 * l});
  bool ok = rep.gap_strictly_decreasing;
  double min_gap = INFINITY;
  for (size_t i = 0; i < rep.entries.size(); ++i) {
    ok = ok && rep.entries[i].status == RiccatiStatus::kOk;
    if (i > 0) {
      min_gap = std::min(min_gap, rep.entries[i].min_monotone_gap);
      ok = ok && rep.entries[i].min_monotone_gap > kMonotoneTol;
    }
  }
  auto srp = reduce_problem(scalar_instance(1000));
  auto srep = lambda_sweep(srp, {1, 2, 4, 8});
  double scalar_err = 0;
  for (const auto& e : srep.entries) {
    scalar_err = std::max(scalar_err, std::abs(e.sup_inverse_gap - 1.0 / e.lambda));
  }
  ok = ok && scalar_err <= kScalarGapTol;
  const double dt = seconds_since(t0);
  ok = ok && dt < 10.0;
  report(2, ok,
         fmt("lambda0=%g min monotone gap %.3e, inverse gaps %.4f>%.4f>%.4f>%.4f; "
             "scalar |gap-1/lambda|=%.1e; %.2fs",
             l, min_gap, rep.entries[0].sup_inverse_gap,
             rep.entries[1].sup_inverse_gap, rep.entries[2].sup_inverse_gap,
             rep.entries[3].sup_inverse_gap, scalar_err, dt));
}

void psd_terminal() {
  bool ok = true;
  bool has_indefinite = false;
  double worst = INFINITY;
  int count = 0;
  for (auto& inst : suite(200)) {
    auto rp = reduce_problem(inst.p);
    auto s = solve_sigma(rp);
    ok = ok && s.Sigma.back().norm() == 0.0 && s.min_eig >= kPsdTol;
    worst = std::min(worst, s.min_eig);
    if (validate_problem(inst.p).has("R11_INDEFINITE")) has_indefinite = true;
    ++count;
  }
  ok = ok && has_indefinite && count >= 5;
  report(3, ok,
         fmt("%d instances, Sigma(T)=0 on all, min_t lambda_min(Sigma) >= %.2e, "
             "indefinite R11 included: %s",
             count, worst, has_indefinite ? "yes" : "no"));
}

void stationarity() {
  double worst = 0;
  int count = 0;
  for (auto& inst : suite(200)) {
    auto pl = build_pipeline(inst.p, inst.xi);
    auto r = simulate_optimal(pl, sample_paths(inst.p.grid, 2000, kSeed), {-1});
    worst = std::max(worst, r.stationarity_rms);
    ++count;
  }
  report(4, worst <= kStationarityTol,
         fmt("max stationarity rms over %d instances = %.2e", count, worst));
}

void value_identity() {
  auto t0 = std::chrono::steady_clock::now();
  auto xi = TerminalData::affine(v1(0), v1(1));
  // Grids 200 and 400 share Brownian paths through the 400-step grid.
  auto pl = build_pipeline(maximin_instance(2.0, 200), xi);
  auto r = simulate_optimal(pl, BrownianBatch(pl.grid(), kPaths, kSeed, 2));
  const double gap200 = std::abs(r.cost.mean - r.value_formula);
  const double dt = seconds_since(t0);
  auto pl2 = build_pipeline(maximin_instance(2.0, 400), xi);
  auto r2 = simulate_optimal(pl2, BrownianBatch(pl2.grid(), kPaths, kSeed, 1));
  const double gap400 = std::abs(r2.cost.mean - r2.value_formula);
  const bool ok = gap200 <= 3 * r.cost.se + kValueRelTol * std::abs(r.value_formula) &&
                  gap400 < gap200 && dt < 60.0;
  report(5, ok,
         fmt("V=%.6f J=%.6f SE=%.2e |J-V|=%.2e (n=400: %.2e); %.1fs", r.value_formula,
             r.cost.mean, r.cost.se, gap200, gap400, dt));
}

void perturbation() {
  auto pl = build_pipeline(maximin_instance(2.0, 200), TerminalData::affine(v1(0), v1(1)));
  const TimeGrid& g = pl.grid();
  auto batch = sample_paths(g, kPaths, kSeed);
  Path one(g.n_nodes(), v1(1)), sine;
  for (int k = 0; k < g.n_nodes(); ++k) sine.push_back(v1(std::sin(2 * M_PI * g.t(k) / g.T())));
  bool ok = true;
  double worst = 0;
  std::string detail;
  for (const Path* v : {&one, &sine}) {
    for (const auto& row : perturbation_test(pl, *v, {0.5, 1.0}, batch)) {
      const double bound = 3 * row.se + kDiscC * g.h();
      ok = ok && std::abs(row.gap) <= bound && row.dJ >= -3 * row.se;
      worst = std::max(worst, std::abs(row.gap) / bound);
      detail += fmt(" [%s eps=%.1f dJ=%.4f gap=%.1e se=%.1e]",
                    v == &one ? "1" : "sin", row.eps, row.dJ, row.gap, row.se);
    }
  }
  report(6, ok, fmt("max |gap|/(3SE+Ch)=%.2f;", worst) + detail);
}

void oracle_convergence() {
  auto t0 = std::chrono::steady_clock::now();
  auto xi = TerminalData::affine(v1(0), v1(1));
  bool ok = true;
  std::string detail;
  for (auto [name, p] : {std::pair<const char*, ProblemData>{"scalar", scalar_instance(512)},
                         {"maximin", maximin_instance(2.0, 512)}}) {
    auto pl = build_pipeline(p, xi);
    auto tab = oracle_ladder(p, xi, continuous_reference(pl), {2, 4, 8, 16});
    const double first = tab.rows.front().value_gap, last = tab.rows.back().value_gap;
    ok = ok && tab.nonincreasing && last <= kOracleFinalFrac * first;
    detail += fmt(" %s gaps", name);
    for (const auto& r : tab.rows) detail += fmt(" %.3e", r.value_gap);
    detail += ";";
  }
  const double dt = seconds_since(t0);
  ok = ok && dt < 30.0;
  report(7, ok, detail + fmt(" %.2fs", dt));
}

void reduction() {
  auto pl = build_pipeline(general_instance(200), TerminalData::affine(v1(0.5), v1(1)));
  auto ri = reduction_identity(pl, sample_paths(pl.grid(), kPaths, kSeed));
  const double bound = 3 * ri.diff.se + kDiscC * pl.grid().h();
  report(8, std::abs(ri.diff.mean) <= bound,
         fmt("J=%.6f J^H-E<H(T)xi,xi>=%.6f diff=%.2e bound=%.2e (H(T)=%.4f)",
             ri.J.mean, ri.JH_shift.mean, ri.diff.mean, bound,
             pl.rp.H.node(200)(0, 0)));
}

void bsde_oracle() {
  auto rp = reduce_problem(maximin_instance(2.0, 200));
  auto sigma = solve_sigma(rp);
  auto xi = TerminalData::affine(v1(0.3), v1(1));
  auto af = solve_affine_terminal(rp, sigma, xi.a, xi.b);
  auto L = solve_lsmc(rp, sigma, xi, 20000, 3, kSeed);
  double worst = 0;
  for (int k = 0; k < 200; ++k) {
    MatrixXd zp = (L.coeffs_phi[k] - affine_phi_coeffs(af, k, 3)).cwiseAbs()
                      .cwiseQuotient(L.se_phi[k]);
    MatrixXd zb = (L.coeffs_beta[k] - affine_beta_coeffs(af, k, 3)).cwiseAbs()
                      .cwiseQuotient(L.se_beta[k]);
    worst = std::max({worst, zp.maxCoeff(), zb.maxCoeff()});
  }
  // Terminal node: phi(T) = xi is reproduced exactly, no standard error.
  const double term = (L.coeffs_phi[200] - affine_phi_coeffs(af, 200, 3)).cwiseAbs().maxCoeff();
  auto L2 = solve_lsmc(rp, sigma, TerminalData::functional("w2", v1(1)), 20000, 3, kSeed);
  const bool ok = worst <= 3.0 && term <= kTerminalFitTol &&
                  L2.terminal_fit_residual <= kTerminalFitTol;
  report(9, ok,
         fmt("max |coef diff|/SE over nodes = %.2f, terminal coef diff %.1e, "
             "w^2 terminal fit residual %.1e",
             worst, term, L2.terminal_fit_residual));
}

void necessity() {
  auto p = necessity_instance(100);
  bool not_found = false;
  try {
    find_lambda0(reduce_problem(p));
  } catch (const NumericalError& e) {
    not_found = e.code() == NumericalCode::kNotFound;
  }
  auto pr = convexity_probe(p, 20, sample_paths(p.grid, 10000, kSeed), kSeed);
  report(10, not_found && pr.min_ratio + 3 * pr.se < 0,
         fmt("find_lambda0 NotFound: %s; probe min ratio %.4f (SE %.1e)",
             not_found ? "yes" : "no", pr.min_ratio, pr.se));
}

void maximin_a1_note() {
  auto rp = reduce_problem(maximin_instance(1.0, 200));
  std::string sigma_msg = "solved", lambda_msg = "found";
  try {
    solve_sigma(rp);
  } catch (const NumericalError& e) {
    sigma_msg = fmt("%s at t=%.4f", to_string(e.code()), e.time().value_or(NAN));
  }
  try {
    find_lambda0(rp);
  } catch (const NumericalError& e) {
    lambda_msg = to_string(e.code());
  }
  std::printf("note            maximin a=1: solve_sigma %s, find_lambda0 %s\n",
              sigma_msg.c_str(), lambda_msg.c_str());
}

}  // namespace

int main() {
  auto t0 = std::chrono::steady_clock::now();
  guarded(1, riccati_order);
  guarded(2, lambda_limit);
  guarded(3, psd_terminal);
  guarded(4, stationarity);
  guarded(5, value_identity);
  guarded(6, perturbation);
  guarded(7, oracle_convergence);
  guarded(8, reduction);
  guarded(9, bsde_oracle);
  guarded(10, necessity);
  maximin_a1_note();
  std::printf("%d failed, total %.1fs\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
