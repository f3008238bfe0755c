#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mhdtc/checkpoint.hpp"
#include "mhdtc/evolve.hpp"
#include "mhdtc/field.hpp"
#include "mhdtc/lab/config.hpp"
#include "mhdtc/lab/emit.hpp"
#include "mhdtc/oper.hpp"
#include "mhdtc/parallel.hpp"
#include "mhdtc/random_field.hpp"
#include "mhdtc/spectra.hpp"
#include "mhdtc/steady.hpp"

namespace mhdtc {

/// Outcome of one CLI subcommand: verdicts, deterministic summary, files.
struct ExperimentResult {
  std::string command;
  std::filesystem::path dir;
  std::vector<Check> checks;
  Json summary = Json::object();
  Json timings = Json::object();
  std::vector<std::string> files;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }
  const Check& check(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return c;
    throw InvalidArgument(command + ": no check named " + name);
  }
};

namespace detail {

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

inline Check check_le(std::string name, double value, double limit, std::string detail = {}) {
  return {std::move(name), std::isfinite(value) && value <= limit, value, fmt("<= %.3g", limit), std::move(detail)};
}

inline Check check_lt(std::string name, double value, double limit, std::string detail = {}) {
  return {std::move(name), std::isfinite(value) && value < limit, value, fmt("< %.3g", limit), std::move(detail)};
}

inline Check check_gt(std::string name, double value, double limit, std::string detail = {}) {
  return {std::move(name), std::isfinite(value) && value > limit, value, fmt("> %.3g", limit), std::move(detail)};
}

inline Check check_in(std::string name, double value, double lo, double hi, std::string detail = {}) {
  return {std::move(name), std::isfinite(value) && value >= lo && value <= hi, value,
          fmt("[%.3g, ", lo) + fmt("%.3g]", hi), std::move(detail)};
}

inline Check check_true(std::string name, bool ok, std::string detail = {}) {
  return {std::move(name), ok, ok ? 1.0 : 0.0, "true", std::move(detail)};
}

inline double max_abs(const SpectralField& f) { return f.data().size() ? f.data().cwiseAbs().maxCoeff() : 0.0; }

inline Json complex_json(cplx z) { return {{"re", z.real()}, {"im", z.imag()}}; }
inline Json mode_json(ModeIndex q) { return Json::array({q.m, q.k}); }

inline ExperimentResult begin(const SimConfig& cfg, const std::string& command) {
  ExperimentResult r;
  r.command = command;
  r.dir = output_directory(cfg, command);
  return r;
}

inline void write_csv(ExperimentResult& r, const std::string& name, const CsvTable& table) {
  table.write(r.dir / name);
  r.files.push_back(name);
}

inline ExperimentResult& finish(ExperimentResult& r, const SimConfig& cfg, const Stopwatch& sw) {
  r.timings["total"] = sw.seconds();
  Json checks = Json::array();
  for (const auto& c : r.checks) checks.push_back(to_json(c));
  r.summary["checks"] = checks;
  r.summary["passed"] = r.passed();
  write_text(r.dir / "summary.json", r.summary.dump(2) + "\n");
  r.files.push_back("summary.json");
  write_manifest(r.dir, cfg, r.command, r.checks, r.timings, r.files);
  return r;
}

}  // namespace detail

// --- shared setup ------------------------------------------------------------

inline OperatorKind parse_operator_kind(const std::string& s) {
  if (s == "dynamo") return OperatorKind::dynamo;
  if (s == "linns") return OperatorKind::linns;
  if (s == "block") return OperatorKind::block;
  throw ConfigError("experiment.operator_kind: unknown operator '" + s + "'");
}

/// The induction block ignores nu; it is zeroed so its cache entries are shared.
inline OperatorSpec operator_spec(const SimConfig& cfg, OperatorKind kind) {
  return {kind, cfg.profile(), kind == OperatorKind::dynamo ? 0.0 : cfg.nu_value(), cfg.physics.eps, cfg.physics.lz};
}

inline ScanRanges scan_ranges(const SimConfig& cfg) { return {cfg.resolution.mmax, cfg.resolution.kmax}; }

inline ScanResult leader_scan(const SimConfig& cfg, OperatorKind kind) {
  return rightmost_eigen(operator_spec(cfg, kind), scan_ranges(cfg), cfg.grid());
}

/// Harmonics j*q of the leader that fit the configured mode window.
inline LayoutPtr harmonic_layout(const SimConfig& cfg, ModeIndex q) {
  int jmax = std::numeric_limits<int>::max();
  if (q.m != 0) jmax = std::min(jmax, cfg.resolution.mmax / std::abs(q.m));
  if (q.k != 0) jmax = std::min(jmax, cfg.resolution.kmax / std::abs(q.k));
  return ModeLayout::helical(q, std::max(1, jmax), cfg.physics.lz);
}

/// Real magnetic field from the leader and its conjugate, ||B0||_{L2} = l2.
inline SpectralField leader_field(const ScanResult& scan, const GridPtr& grid, const LayoutPtr& layout, double l2) {
  const int n = grid->size();
  const Eigen::VectorXcd x = scan.report.leader_vector();
  const Eigen::VectorXcd b = x.size() == 6 * n ? Eigen::VectorXcd(x.tail(3 * n)) : x;
  return eigenmode_field(grid, layout, scan.report.mode, b, true, l2);
}

inline double step_size(const SimConfig& cfg, const TCProfile& p, const GridPtr& grid, const LayoutPtr& layout) {
  if (cfg.integrator.dt > 0.0) return cfg.integrator.dt;
  const double dt = cfl_time_step(p, *grid, *layout, cfg.integrator.cfl);
  if (!std::isfinite(dt)) throw InvalidArgument("integrator.dt: no advection to bound the step; set it explicitly");
  return dt;
}


// --- steady-check ------------------------------------------------------------

/// Steady-state audit plus the discrete calculus identities on seeded fields.
inline ExperimentResult run_steady_check(const SimConfig& cfg) {
  using namespace detail;
  const Stopwatch sw;
  ExperimentResult res = begin(cfg, "steady-check");
  const TCProfile p = cfg.profile();
  const WallResiduals wr = wall_residuals(p);

  std::vector<int> nrs = {8, 32, 96};
  if (std::find(nrs.begin(), nrs.end(), cfg.resolution.nr) == nrs.end()) nrs.push_back(cfg.resolution.nr);
  std::vector<double> nus = {0.1, 1.0, 100.0};
  const double nu = cfg.nu_value();
  if (std::find(nus.begin(), nus.end(), nu) == nus.end()) nus.push_back(nu);

  CsvTable audit({"nr", "nu", "pressure", "residual", "collocation_residual"});
  double worst = 0.0, printed_best = std::numeric_limits<double>::infinity();
  for (int nr : nrs) {
    const GridPtr g = cfg.grid(nr);
    for (double v : nus) {
      const SteadyAudit a = ns_residual(p, v, *g);
      const SteadyAudit b = ns_residual(p, v, *g, PressureForm::printed);
      audit.add({nr, v, "centripetal", a.residual, a.collocation_residual});
      audit.add({nr, v, "printed", b.residual, b.collocation_residual});
      worst = std::max(worst, a.residual);
      printed_best = std::min(printed_best, b.residual);
    }
  }
  write_csv(res, "steady_audit.csv", audit);

  // Identities on seeded random fields at a modest resolution.
  const GridPtr g = cfg.grid(24);
  const LayoutPtr l = ModeLayout::box(3, 2, cfg.physics.lz);
  const int count = cfg.experiment.random_fields;
  std::vector<std::array<double, 5>> rows(count);
  parallel_for(count, [&](int i) {
    const std::uint64_t seed = cfg.experiment.seed + 2 * static_cast<std::uint64_t>(i);
    const SpectralField phi = random_smooth(seed, g, l, 1);
    const SpectralField f = random_smooth(seed + 1, g, l, 3);
    const SpectralField grad = gradient(phi);
    const SpectralField c = curl(f);
    const SpectralField pf = leray_project(f);
    const SpectralField b = random_divfree(seed, BcTag::conducting_magnetic, g, l);
    const HodgePair h = hodge_dissipativity(b);
    rows[i] = {max_abs(divergence(c)) / max_abs(c), max_abs(curl(grad)) / max_abs(grad),
               max_abs(leray_project(pf) - pf) / max_abs(pf), std::abs(inner(pf, grad)) / (l2_norm(pf) * l2_norm(grad)),
               std::abs(h.lhs - h.rhs) / std::abs(h.rhs)};
  });
  CsvTable ids({"seed", "div_curl", "curl_grad", "leray_idempotence", "leray_orthogonality", "dissipativity"});
  std::array<double, 5> worst_id{};
  for (int i = 0; i < count; ++i) {
    const auto& r = rows[i];
    ids.add({static_cast<long>(cfg.experiment.seed + 2 * static_cast<std::uint64_t>(i)), r[0], r[1], r[2], r[3], r[4]});
    for (int k = 0; k < 5; ++k) worst_id[k] = std::max(worst_id[k], std::isfinite(r[k]) ? r[k] : HUGE_VAL);
  }
  write_csv(res, "identities.csv", ids);

  const double bc_scale = 1.0 + std::max(std::abs(p.beta1), std::abs(p.beta2));
  res.checks.push_back(check_le("wall_conditions", wr.max() / bc_scale, 1e-12));
  res.checks.push_back(check_le("ns_residual", worst, 1e-10, "max over the audit grid"));
  res.checks.push_back(check_gt("printed_pressure_rejected", printed_best, 1e-2,
                                "expansion without the 2 a1 a3 / r cross term"));
  const char* names[5] = {"div_curl", "curl_grad", "leray_idempotence", "leray_orthogonality", "dissipativity"};
  for (int k = 0; k < 5; ++k)
    res.checks.push_back(check_le(std::string("identity_") + names[k], worst_id[k], 1e-8,
                                  "max over " + std::to_string(count) + " seeded fields"));

  res.summary["coefficients"] = {{"a1", p.a1}, {"a2", p.a2}, {"a3", p.a3}, {"a4", p.a4}};
  res.summary["bc_residuals"] = {{"inner_theta", wr.inner_theta},
                                 {"inner_z", wr.inner_z},
                                 {"outer_theta", wr.outer_theta},
                                 {"outer_z", wr.outer_z}};
  res.summary["ns_residual"] = worst;
  res.summary["printed_pressure_residual"] = printed_best;
  res.summary["pressure_note"] =
      "pressure gradient uses the full centripetal balance u_theta^2/r; the expansion a1^2/r^3 + a3^2 r "
      "omits the cross term 2 a1 a3 / r and fails the audit";
  res.summary["w1inf_norm"] = tc_w1inf_norm(p, *cfg.grid());
  res.summary["l2_norm"] = tc_lp_norm(p, *cfg.grid(), 2.0, cfg.physics.lz);
  res.summary["nu"] = nu;
  res.summary["chi"] = cfg.chi_value();
  return finish(res, cfg, sw);
}

// --- spectrum ----------------------------------------------------------------

inline ExperimentResult run_spectrum(const SimConfig& cfg) {
  using namespace detail;
  const Stopwatch sw;
  ExperimentResult res = begin(cfg, "spectrum");
  const OperatorKind kind = parse_operator_kind(cfg.experiment.operator_kind);
  const ScanResult scan = leader_scan(cfg, kind);
  res.timings["scan"] = sw.seconds();
  const EigenReport& rep = scan.report;

  CsvTable eig({"m", "k", "re", "im", "residual", "div_score", "drift"});
  for (std::size_t i = 0; i < rep.eigenvalues.size(); ++i)
    if (rep.retained[i])
      eig.add({rep.mode.m, rep.mode.k, rep.eigenvalues[i].real(), rep.eigenvalues[i].imag(), rep.residuals[i],
               rep.div_scores[i], rep.drifts[i]});
  write_csv(res, "spectrum.csv", eig);
  CsvTable tops({"m", "k", "re_top", "im_top"});
  for (const auto& t : scan.tops) tops.add({t.mode.m, t.mode.k, t.top.real(), t.top.imag()});
  write_csv(res, "scan_tops.csv", tops);

  const cplx lam = rep.leader_value();
  const int li = rep.leader;
  if (kind != OperatorKind::linns) res.checks.push_back(check_gt("leader_growing", lam.real(), 0.0));
  res.checks.push_back(check_le("leader_residual", rep.residuals[li], 1e-8));
  res.checks.push_back(check_le("leader_div_score", rep.div_scores[li], 1e-6));
  res.checks.push_back(check_le("leader_drift", rep.drifts[li] / (1.0 + std::abs(lam)), 1e-6,
                                "|lambda(Nr) - lambda(2Nr)| / (1 + |lambda|)"));

  res.summary["operator"] = to_string(kind);
  res.summary["winner"] = to_string(rep.winner());
  res.summary["nr"] = rep.nr;
  res.summary["eps"] = cfg.physics.eps;
  res.summary["nu"] = kind == OperatorKind::dynamo ? Json(nullptr) : Json(cfg.nu_value());
  res.summary["leader_mode"] = mode_json(rep.mode);
  res.summary["leader"] = complex_json(lam);
  res.summary["leader_residual"] = rep.residuals[li];
  res.summary["leader_div_score"] = rep.div_scores[li];
  res.summary["leader_drift"] = rep.drifts[li];
  res.summary["retained"] = rep.retained_count();
  res.summary["modes_scanned"] = scan.tops.size();
  res.summary["modes_verified"] = scan.modes_verified;
  res.summary["leader_on_edge"] = scan.leader_on_edge();
  return finish(res, cfg, sw);
}

// --- scaling -------------------------------------------------------------------

inline ExperimentResult run_scaling(const SimConfig& cfg) {
  using namespace detail;
  const Stopwatch sw;
  ExperimentResult res = begin(cfg, "scaling");
  const auto points = epsilon_scaling_points(cfg.profile(), cfg.experiment.eps_list, scan_ranges(cfg), cfg.grid(),
                                             cfg.physics.lz);
  CsvTable tab({"eps", "m", "k", "re", "im", "positive", "mmax", "kmax", "drift"});
  int growing = 0;
  double worst_drift = 0.0;
  for (const auto& pt : points) {
    tab.add({pt.eps, pt.mode.m, pt.mode.k, pt.leader.real(), pt.leader.imag(), pt.positive ? 1 : 0, pt.ranges.mmax,
             pt.ranges.kmax, pt.drift});
    growing += pt.positive;
    worst_drift = std::max(worst_drift, pt.drift / (1.0 + std::abs(pt.leader)));
  }
  write_csv(res, "scaling.csv", tab);

  // Fit over whatever growing leaders exist so the trend is always reported.
  std::vector<double> xs, ys;
  for (const auto& pt : points)
    if (pt.positive) {
      xs.push_back(std::log(pt.eps));
      ys.push_back(std::log(pt.leader.real()));
    }
  LinearFit fit;
  fit.slope = fit.slope_stderr = std::numeric_limits<double>::quiet_NaN();
  if (xs.size() >= 2) fit = least_squares(xs, ys);
  if (xs.size() == 2) fit.slope_stderr = std::numeric_limits<double>::quiet_NaN();

  // Leader mode numbers along decreasing eps.
  std::vector<ScalingPoint> by_eps = points;
  std::sort(by_eps.begin(), by_eps.end(), [](const auto& a, const auto& b) { return a.eps > b.eps; });
  bool m_up = true, k_up = true;
  for (std::size_t i = 1; i < by_eps.size(); ++i) {
    m_up = m_up && std::abs(by_eps[i].mode.m) >= std::abs(by_eps[i - 1].mode.m);
    k_up = k_up && std::abs(by_eps[i].mode.k) >= std::abs(by_eps[i - 1].mode.k);
  }

  const std::string n = std::to_string(points.size());
  res.checks.push_back(check_in("growing_leaders", growing, static_cast<double>(points.size()),
                                static_cast<double>(points.size()), "eps values with Re lambda > 0, of " + n));
  res.checks.push_back(check_in("slope", fit.slope, 0.23, 0.43,
                                "fit over " + std::to_string(xs.size()) + " growing leaders of " + n));
  res.checks.push_back(check_lt("slope_stderr", fit.slope_stderr, 0.05));
  res.checks.push_back(check_le("leader_drift", worst_drift, 1e-6));
  res.checks.push_back(check_true("leader_mode_monotone", m_up || k_up, "|m| or |k| non-decreasing as eps decreases"));

  Json pts = Json::array();
  for (const auto& pt : points)
    pts.push_back({{"eps", pt.eps}, {"mode", mode_json(pt.mode)}, {"leader", complex_json(pt.leader)},
                   {"ranges", Json::array({pt.ranges.mmax, pt.ranges.kmax})}, {"drift", pt.drift}});
  res.summary["points"] = pts;
  res.summary["fit"] = {{"slope", std::isfinite(fit.slope) ? Json(fit.slope) : Json(nullptr)},
                        {"intercept", std::isfinite(fit.slope) ? Json(fit.intercept) : Json(nullptr)},
                        {"slope_stderr", std::isfinite(fit.slope_stderr) ? Json(fit.slope_stderr) : Json(nullptr)},
                        {"count", static_cast<int>(xs.size())}};
  return finish(res, cfg, sw);
}

// --- semigroup-check -----------------------------------------------------------

inline ExperimentResult run_semigroup_check(const SimConfig& cfg) {
  using namespace detail;
  const Stopwatch sw;
  ExperimentResult res = begin(cfg, "semigroup-check");
  const auto& e = cfg.experiment;
  const ModeIndex mode{e.semigroup_mode[0], e.semigroup_mode[1]};
  const OperatorSpec spec = operator_spec(cfg, parse_operator_kind(e.operator_kind));
  const auto times = log_time_grid(e.t_min, e.t_max, e.t_count);
  const int nrs[2] = {e.nr_coarse, e.nr_fine};
  const std::size_t na = e.alpha_list.size();
  std::vector<SemigroupReport> sg(2 * na);
  std::vector<double> inv(2 * na, std::numeric_limits<double>::quiet_NaN());
  double etas[2] = {0, 0};
  cplx leaders[2];
  for (int gi = 0; gi < 2; ++gi) {
    const ModeOperator op = assemble(spec, mode, cfg.grid(nrs[gi]));
    leaders[gi] = discrete_shift(op, 1.0).leader;
    etas[gi] = e.eta_factor * std::abs(leaders[gi]);
    parallel_for(static_cast<int>(na), [&](int ai) {
      const double alpha = e.alpha_list[ai];
      sg[gi * na + ai] = semigroup_smoothing_check(op, alpha, etas[gi], times);
      if (alpha > 0.5) inv[gi * na + ai] = inverse_frac_grad_check(op, alpha, etas[gi]).norm;
    });
  }

  CsvTable env({"alpha", "nr", "t", "norm", "weighted"});
  CsvTable sum({"alpha", "nr", "eta", "sup", "t_at_sup", "numerical_abscissa", "eigenvector_condition", "schur",
                "inverse_grad_norm"});
  Json rows = Json::array();
  for (std::size_t ai = 0; ai < na; ++ai) {
    for (int gi = 0; gi < 2; ++gi) {
      const auto& r = sg[gi * na + ai];
      for (const auto& smp : r.table) env.add({r.alpha, r.nr, smp.t, smp.norm, smp.weighted});
      sum.add({r.alpha, r.nr, etas[gi], r.sup, r.t_at_sup, r.numerical_abscissa, r.eigenvector_condition,
               r.schur_fallback ? 1 : 0, inv[gi * na + ai]});
    }
    const double alpha = e.alpha_list[ai];
    const auto& c = sg[ai];
    const auto& f = sg[na + ai];
    const std::string tag = fmt("alpha=%.2f", alpha);
    const double change = std::abs(f.sup - c.sup) / c.sup;
    res.checks.push_back(check_true(tag + " sup_finite", std::isfinite(c.sup) && std::isfinite(f.sup),
                                    fmt("coarse %.6g, ", c.sup) + fmt("fine %.6g", f.sup)));
    res.checks.push_back(check_lt(tag + " sup_grid_change", change, 0.25));
    Json row = {{"alpha", alpha}, {"sup_coarse", c.sup}, {"sup_fine", f.sup}, {"change", change},
                {"numerical_abscissa_fine", f.numerical_abscissa}};
    if (alpha > 0.5) {
      const double growth = (inv[na + ai] - inv[ai]) / inv[ai];
      res.checks.push_back(check_lt(tag + " inverse_grad_growth", growth, 0.25,
                                    fmt("coarse %.6g, ", inv[ai]) + fmt("fine %.6g", inv[na + ai])));
      row["inverse_grad_coarse"] = inv[ai];
      row["inverse_grad_fine"] = inv[na + ai];
    }
    rows.push_back(row);
  }
  write_csv(res, "semigroup_envelope.csv", env);
  write_csv(res, "semigroup.csv", sum);
  res.summary["mode"] = mode_json(mode);
  res.summary["operator"] = to_string(spec.kind);
  res.summary["nr"] = Json::array({nrs[0], nrs[1]});
  res.summary["leader"] = Json::array({complex_json(leaders[0]), complex_json(leaders[1])});
  res.summary["eta"] = Json::array({etas[0], etas[1]});
  res.summary["shift_note"] = "A_eta = A - (Re lambda + eta) I with lambda the discrete leader of the assembled block";
  res.summary["alphas"] = rows;
  return finish(res, cfg, sw);
}

// --- evolve-linear -------------------------------------------------------------

inline ExperimentResult run_evolve_linear(const SimConfig& cfg) {
  using namespace detail;
  const Stopwatch sw;
  ExperimentResult res = begin(cfg, "evolve-linear");
  const TCProfile p = cfg.profile();
  const ScanResult scan = leader_scan(cfg, OperatorKind::dynamo);
  const cplx lam = scan.report.leader_value();
  const GridPtr grid = cfg.grid();
  // Same layout (hence CFL step) as the nonlinear runs; only the populated pair is stepped.
  const LayoutPtr layout = harmonic_layout(cfg, scan.report.mode);
  const SpectralField b0 = leader_field(scan, grid, layout, 1.0);
  const double t_end = cfg.integrator.t_end > 0.0 ? cfg.integrator.t_end : cfg.experiment.growth_periods / std::abs(lam.real());
  const double dt0 = step_size(cfg, p, grid, layout);

  double err[2] = {0, 0}, rate[2] = {0, 0}, dts[2] = {dt0, dt0 / 2};
  Json runs = Json::array();
  for (int i = 0; i < 2; ++i) {
    RunOptions o;
    o.t_end = t_end;
    o.dt = dts[i];
    o.sample_every = cfg.integrator.sample_every << i;
    o.p = cfg.experiment.p;
    o.c_cfl = cfg.integrator.cfl;
    const RunResult r = run_linear(b0, cfg.physics.eps, p, o);
    const std::string name = "trace_dt" + std::to_string(i) + ".csv";
    r.trace.write_csv((res.dir / name).string());
    res.files.push_back(name);
    rate[i] = measured_growth_rate(r.trace, 0.0, t_end).rate;
    err[i] = std::abs(rate[i] - lam.real()) / std::abs(lam.real());
    runs.push_back({{"dt", dts[i]}, {"measured_rate", rate[i]}, {"relative_error", err[i]}});
  }
  res.checks.push_back(check_lt("growth_rate_error", err[0], 0.01, "relative to the eigensolve"));
  res.checks.push_back(check_in("dt_halving_ratio", err[0] / err[1], 3.0, 5.0));
  res.summary["leader_mode"] = mode_json(scan.report.mode);
  res.summary["leader"] = complex_json(lam);
  res.summary["t_end"] = t_end;
  res.summary["runs"] = runs;
  return finish(res, cfg, sw);
}

// --- nonlinear runs ----------------------------------------------------------------

namespace detail {

struct NonlinearSetup {
  TCProfile profile;
  ScanResult scan;
  GridPtr grid;
  LayoutPtr layout;
  SpectralField unit_b;  // ||B0||_{L2} = 1
  double nu = 0, chi = 0, dt = 0;
};

inline NonlinearSetup nonlinear_setup(const SimConfig& cfg) {
  const TCProfile profile = cfg.profile();
  ScanResult scan = leader_scan(cfg, OperatorKind::dynamo);
  const GridPtr grid = cfg.grid();
  const LayoutPtr layout = harmonic_layout(cfg, scan.report.mode);
  SpectralField unit_b = leader_field(scan, grid, layout, 1.0);
  const double dt = step_size(cfg, profile, grid, layout);
  return {profile, std::move(scan), grid, layout, std::move(unit_b), cfg.nu_value(), cfg.chi_value(), dt};
}

/// Escape-time horizon: the linear prediction log(chi/delta)/Re lambda times the margin.
inline double escape_horizon(const SimConfig& cfg, const NonlinearSetup& s, double delta) {
  if (cfg.integrator.t_end > 0.0) return cfg.integrator.t_end;
  const double re = s.scan.report.leader_value().real();
  if (!(re > 0.0)) throw NumericalError("no growing dynamo mode at eps = " + fmt("%g", cfg.physics.eps));
  return cfg.experiment.escape_margin * std::max(std::log(s.chi / delta), 1.0) / re;
}

inline RunOptions nonlinear_options(const SimConfig& cfg, const NonlinearSetup& s, double delta) {
  RunOptions o;
  o.t_end = escape_horizon(cfg, s, delta);
  o.dt = s.dt;
  o.sample_every = cfg.integrator.sample_every;
  o.p = cfg.experiment.p;
  o.chi = s.chi;
  o.c_cfl = cfg.integrator.cfl;
  return o;
}

inline void constraint_checks(ExperimentResult& res, const RunResult& r, const std::string& prefix) {
  const auto& m = r.monitor;
  const std::string steps = std::to_string(m.steps_checked) + " steps";
  res.checks.push_back(check_le(prefix + "div_v", m.max_div_v, 1e-9, steps));
  res.checks.push_back(check_le(prefix + "div_B", m.max_div_b, 1e-9, steps));
  res.checks.push_back(check_le(prefix + "bc_v", m.max_bc_v, 1e-8, steps));
  res.checks.push_back(check_le(prefix + "bc_B", m.max_bc_b, 1e-8, steps));
  const auto closure = budget_closure(r.trace);
  const double worst = closure.empty() ? std::numeric_limits<double>::quiet_NaN()
                                       : *std::max_element(closure.begin(), closure.end());
  res.checks.push_back(check_le(prefix + "energy_budget", worst, 0.05,
                                std::to_string(closure.size()) + " interior samples"));
  res.summary[prefix + "monitor"] = {{"max_div_v", m.max_div_v}, {"max_div_B", m.max_div_b}, {"max_bc_v", m.max_bc_v},
                                     {"max_bc_B", m.max_bc_b},   {"steps", m.steps_checked},  {"budget_closure", worst}};
}

inline Json setup_json(const NonlinearSetup& s) {
  return {{"leader_mode", mode_json(s.scan.report.mode)},
          {"leader", complex_json(s.scan.report.leader_value())},
          {"harmonics", s.layout->jmax()},
          {"nu", s.nu},
          {"chi", s.chi},
          {"dt", s.dt}};
}

}  // namespace detail

inline ExperimentResult run_evolve_nonlinear(const SimConfig& cfg) {
  using namespace detail;
  const Stopwatch sw;
  ExperimentResult res = begin(cfg, "evolve-nonlinear");
  const NonlinearSetup s = nonlinear_setup(cfg);
  const double delta = cfg.experiment.delta;
  res.summary["setup"] = setup_json(s);
  res.summary["delta"] = delta;
  if (delta == 0.0) {
    res.checks.push_back(check_true("nontrivial_initial_data", true, "delta = 0: zero stays zero, nothing to check"));
    res.summary["vacuous"] = true;
    return finish(res, cfg, sw);
  }
  RunOptions o = nonlinear_options(cfg, s, delta);
  o.monitor_steps = true;
  o.budget = true;
  SpectralField b0 = s.unit_b;
  b0 *= cplx(delta);
  const RunResult r = run_nonlinear(SpectralField::zeros_like(b0, 3), b0, s.nu, cfg.physics.eps, s.profile, o);
  r.trace.write_csv((res.dir / "trace.csv").string());
  res.files.push_back("trace.csv");
  write_checkpoint((res.dir / "final_v.chk").string(), r.v, r.trace.rows.back().t);
  write_checkpoint((res.dir / "final_B.chk").string(), r.b, r.trace.rows.back().t);
  res.files.push_back("final_v.chk");
  res.files.push_back("final_B.chk");
  constraint_checks(res, r, "");
  res.summary["stop_reason"] = to_string(r.reason);
  res.summary["t_final"] = r.trace.rows.back().t;
  return finish(res, cfg, sw);
}

// --- instability-sweep ---------------------------------------------------------------

inline ExperimentResult run_instability_sweep(const SimConfig& cfg) {
  using namespace detail;
  const Stopwatch sw;
  ExperimentResult res = begin(cfg, "instability-sweep");
  const NonlinearSetup s = nonlinear_setup(cfg);
  const auto& deltas = cfg.experiment.delta_list;
  const int n = static_cast<int>(deltas.size());
  if (n < 2) throw ConfigError("experiment.delta_list: the sweep needs at least 2 amplitudes");
  const double re = s.scan.report.leader_value().real();
  // Constraint monitoring on the shortest run (largest amplitude).
  const int shortest = static_cast<int>(std::max_element(deltas.begin(), deltas.end()) - deltas.begin());

  struct Job {
    std::optional<RunResult> run;
    double t_star = std::numeric_limits<double>::quiet_NaN();
    std::array<double, 3> sobolev{};
  };
  std::vector<Job> jobs(n);
  parallel_for(n, [&](int i) {
    SpectralField b0 = s.unit_b;
    b0 *= cplx(deltas[i]);
    for (int k = 0; k < 3; ++k) jobs[i].sobolev[k] = sobolev_norm(b0, k, cfg.experiment.p);
    RunOptions o = nonlinear_options(cfg, s, deltas[i]);
    o.monitor_steps = o.budget = (i == shortest);
    jobs[i].run.emplace(run_nonlinear(SpectralField::zeros_like(b0, 3), b0, s.nu, cfg.physics.eps, s.profile, o));
    if (jobs[i].run->reason == StopReason::escaped) jobs[i].t_star = detect_escape_time(jobs[i].run->trace, s.chi);
  });

  CsvTable tab({"index", "delta", "log_inv_delta", "t_star", "escaped", "t_final", "W0p", "W1p", "W2p"});
  std::vector<double> xs, ys;
  bool all_escaped = true;
  double worst_prop = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto& j = jobs[i];
    const std::string name = "trace_" + std::to_string(i) + ".csv";
    j.run->trace.write_csv((res.dir / name).string());
    res.files.push_back(name);
    const bool esc = j.run->reason == StopReason::escaped;
    all_escaped = all_escaped && esc;
    tab.add({i, deltas[i], std::log(1.0 / deltas[i]), j.t_star, esc ? 1 : 0, j.run->trace.rows.back().t,
             j.sobolev[0], j.sobolev[1], j.sobolev[2]});
    if (esc) {
      xs.push_back(std::log(1.0 / deltas[i]));
      ys.push_back(j.t_star);
    }
    for (int k = 0; k < 3; ++k) {
      const double ref = jobs[0].sobolev[k] / deltas[0];
      worst_prop = std::max(worst_prop, std::abs(j.sobolev[k] / deltas[i] - ref) / ref);
    }
  }
  write_csv(res, "sweep.csv", tab);

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) { return deltas[a] > deltas[b]; });
  bool increasing = all_escaped;
  for (int i = 1; i < n && increasing; ++i) increasing = jobs[order[i]].t_star > jobs[order[i - 1]].t_star;
  double slope = std::numeric_limits<double>::quiet_NaN();
  if (xs.size() >= 2) slope = least_squares(xs, ys).slope;

  res.checks.push_back(check_true("all_escaped", all_escaped, "every run reached chi before its horizon"));
  res.checks.push_back(check_true("t_star_increasing", increasing, "strictly, as delta decreases"));
  res.checks.push_back(check_in("slope_times_growth_rate", slope * re, 0.85, 1.15,
                                "fitted d t_star / d log(1/delta) against 1/Re lambda"));
  res.checks.push_back(check_le("initial_norm_proportionality", worst_prop, 1e-10,
                                "W^{s,p} norms / delta, s = 0, 1, 2"));
  constraint_checks(res, *jobs[shortest].run, "shortest_run_");

  Json runs = Json::array();
  for (int i = 0; i < n; ++i)
    runs.push_back({{"delta", deltas[i]},
                    {"t_star", std::isfinite(jobs[i].t_star) ? Json(jobs[i].t_star) : Json(nullptr)},
                    {"predicted", std::log(s.chi / deltas[i]) / re},
                    {"sobolev", jobs[i].sobolev}});
  res.summary["setup"] = setup_json(s);
  res.summary["runs"] = runs;
  res.summary["slope"] = std::isfinite(slope) ? Json(slope) : Json(nullptr);
  res.summary["inverse_growth_rate"] = 1.0 / re;
  return finish(res, cfg, sw);
}

// --- energy-transfer ------------------------------------------------------------------

inline ExperimentResult run_energy_transfer(const SimConfig& cfg) {
  using namespace detail;
  const Stopwatch sw;
  ExperimentResult res = begin(cfg, "energy-transfer");
  const TCProfile p = cfg.profile();
  const double w1 = tc_w1inf_norm(p, *cfg.grid());
  const double nu = cfg.nu_value();
  const bool large_nu = nu >= 10.0 * w1 * (1.0 - 1e-12);
  if (!large_nu)
    std::fprintf(stderr, "warning: nu = %g is below 10 ||u_TC||_W1inf = %g; proceeding\n", nu, 10.0 * w1);
  res.summary["nu"] = nu;
  res.summary["w1inf_norm"] = w1;
  res.summary["large_nu"] = large_nu;

  const ScanResult linns = leader_scan(cfg, OperatorKind::linns);
  const ScanResult block = leader_scan(cfg, OperatorKind::block);
  const cplx l1 = linns.report.leader_value();
  const NonlinearSetup s = nonlinear_setup(cfg);
  const cplx l2 = s.scan.report.leader_value();
  const int n = s.grid->size();
  const Eigen::VectorXcd xb = block.report.leader_vector();
  const double v_part = xb.head(3 * n).norm();

  res.checks.push_back(check_lt("linns_leader_decaying", l1.real(), 0.0));
  res.checks.push_back(check_gt("dynamo_leader_growing", l2.real(), 0.0));
  res.checks.push_back(check_true("block_leader_is_magnetic",
                                  block.report.winner() == OperatorKind::dynamo && v_part == 0.0,
                                  "eigenvector of the coupled block is (0, B0)"));
  res.summary["linns_leader"] = complex_json(l1);
  res.summary["linns_mode"] = mode_json(linns.report.mode);
  res.summary["setup"] = setup_json(s);

  const double delta = cfg.experiment.delta;
  res.summary["delta"] = delta;
  if (delta == 0.0) {
    res.checks.push_back(check_true("escape_run", true, "delta = 0: trivial run, assertion vacuous"));
    res.summary["vacuous"] = true;
    return finish(res, cfg, sw);
  }
  if (!(l2.real() > 0.0)) {
    res.summary["not_applicable"] = "no growing dynamo mode at the configured eps";
    return finish(res, cfg, sw);
  }
  const RunOptions o = nonlinear_options(cfg, s, delta);
  SpectralField b0 = s.unit_b;
  b0 *= cplx(delta);
  const RunResult r = run_nonlinear(SpectralField::zeros_like(b0, 3), b0, s.nu, cfg.physics.eps, s.profile, o);
  r.trace.write_csv((res.dir / "trace.csv").string());
  res.files.push_back("trace.csv");
  const bool escaped = r.reason == StopReason::escaped;
  res.checks.push_back(check_true("escaped", escaped, "||w||_{L^p} reached chi"));
  if (escaped) {
    const double t_star = detect_escape_time(r.trace, s.chi);
    const TraceRow& last = r.trace.rows.back();  // first sample at or past chi
    std::vector<double> t, v, b;
    for (const auto& row : r.trace.rows) {
      t.push_back(row.t);
      v.push_back(std::sqrt(2.0 * row.ev));
      b.push_back(std::sqrt(2.0 * row.eb));
    }
    const double sv = log_slope(t, v, 0.25 * t_star, 0.75 * t_star).rate;
    const double sb = log_slope(t, b, 0.25 * t_star, 0.75 * t_star).rate;
    res.checks.push_back(check_gt("B_at_escape_over_chi", last.b_lp / s.chi, 1.0 - 1e-15, "||B(t*)||_{L^p} / chi >= 1"));
    res.checks.push_back(check_in("v_B_slope_ratio", sv / sb, 1.7, 2.3, "window [0.25 t*, 0.75 t*]"));
    res.summary["t_star"] = t_star;
    res.summary["t_sample"] = last.t;
    res.summary["B_at_escape"] = last.b_lp;
    res.summary["v_at_escape"] = last.v_lp;
    res.summary["B_growth_factor"] = b.back() / b.front();
    res.summary["slope_v"] = sv;
    res.summary["slope_B"] = sb;
  }
  return finish(res, cfg, sw);
}

// --- dispatch --------------------------------------------------------------------

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {"steady-check",    "spectrum",          "scaling",
                                                 "semigroup-check", "evolve-linear",     "evolve-nonlinear",
                                                 "instability-sweep", "energy-transfer"};
  return names;
}

inline ExperimentResult run_experiment(const std::string& name, const SimConfig& cfg) {
  if (name == "steady-check") return run_steady_check(cfg);
  if (name == "spectrum") return run_spectrum(cfg);
  if (name == "scaling") return run_scaling(cfg);
  if (name == "semigroup-check") return run_semigroup_check(cfg);
  if (name == "evolve-linear") return run_evolve_linear(cfg);
  if (name == "evolve-nonlinear") return run_evolve_nonlinear(cfg);
  if (name == "instability-sweep") return run_instability_sweep(cfg);
  if (name == "energy-transfer") return run_energy_transfer(cfg);
  throw InvalidArgument("unknown experiment '" + name + "'");
}

}  // namespace mhdtc
