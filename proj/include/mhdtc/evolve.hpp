#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mhdtc/error.hpp"
#include "mhdtc/field.hpp"
#include "mhdtc/grid.hpp"
#include "mhdtc/layout.hpp"
#include "mhdtc/oper.hpp"
#include "mhdtc/spectra.hpp"
#include "mhdtc/steady.hpp"

namespace mhdtc {

/// Perturbation state (v, B) with the explicit-slope history of the
/// multistep scheme.  History is per active mode, in reduced coordinates.
struct EvolveState {
  double t = 0.0;
  SpectralField v;
  SpectralField b;
  double dt = 0.0;
  long steps = 0;
  std::vector<Eigen::VectorXcd> slope_v, slope_b;
  bool has_history = false;

  EvolveState(SpectralField v0, SpectralField b0) : v(std::move(v0)), b(std::move(b0)) {
    if (!v.same_shape(b)) throw InvalidArgument("EvolveState: v and B must share grid and layout");
    if (v.ncomp() != 3) throw InvalidArgument("EvolveState: fields must be vectors");
    v.set_bc(BcTag::dirichlet_velocity);
    b.set_bc(BcTag::conducting_magnetic);
  }
};

/// Largest advective rate |m Omega + kz U| of the background over the
/// given modes and all radial nodes.
inline double max_advective_rate(const TCProfile& p, const RadialGrid& g, const ModeLayout& l,
                                 const std::vector<int>& modes) {
  double best = 0.0;
  for (int i : modes)
    for (Eigen::Index j = 0; j < g.size(); ++j)
      best = std::max(best, std::abs(l.mode(i).m * p.omega(g.nodes(j)) + l.kz(i) * p.u_z(g.nodes(j))));
  return best;
}

/// Fixed step from the advective CFL bound, dt = c_cfl / max|m Omega + kz U|,
/// the Fourier form of dx/|u| (infinite when nothing is advected).
inline double cfl_time_step(const TCProfile& p, const RadialGrid& g, const ModeLayout& l, double c_cfl = 0.5) {
  if (!(c_cfl > 0.0)) throw InvalidArgument("cfl_time_step: C_cfl must be > 0");
  std::vector<int> all(l.size());
  for (int i = 0; i < l.size(); ++i) all[i] = i;
  const double rate = max_advective_rate(p, g, l, all);
  return rate > 0.0 ? c_cfl / rate : std::numeric_limits<double>::infinity();
}

struct StepperOptions {
  bool evolve_velocity = true;  // false: kinematic dynamo, v ignored
  bool nonlinear = true;
  double c_cfl = 0.5;           // stability bound used to reject dt
  std::vector<int> active_modes;  // empty: every mode (nonlinear) or the nonzero ones (linear)
};

/// CNAB2 integrator: Crank-Nicolson on nu Lap / eps Lap with the wall rows
/// eliminated, Adams-Bashforth 2 on transport and nonlinear terms, and a
/// Heun predictor-corrector for the first step.
class ImexStepper {
 public:
  ImexStepper(GridPtr grid, LayoutPtr layout, TCProfile profile, double nu, double eps, double dt, StepperOptions opt)
      : grid_(std::move(grid)), layout_(std::move(layout)), profile_(profile), nu_(nu), eps_(eps), dt_(dt),
        opt_(std::move(opt)) {
    if (!grid_ || !layout_) throw InvalidArgument("ImexStepper: grid and layout are required");
    if (!(eps > 0.0)) throw InvalidArgument("ImexStepper: eps must be > 0");
    if (opt_.evolve_velocity && !(nu > 0.0)) throw InvalidArgument("ImexStepper: nu must be > 0");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("ImexStepper: dt must be finite and > 0");
    if (opt_.nonlinear && !opt_.evolve_velocity)
      throw InvalidArgument("ImexStepper: nonlinear stepping requires the velocity equation");
    const ModeLayout& l = *layout_;
    if (opt_.active_modes.empty()) {
      for (int i = 0; i < l.size(); ++i)
        if (!opt_.nonlinear || l.is_canonical(i)) opt_.active_modes.push_back(i);
    }
    if (opt_.nonlinear) {
      // Real fields: only canonical modes are stepped, partners are mirrored.
      std::vector<int> canon;
      for (int i : opt_.active_modes)
        if (l.is_canonical(i)) canon.push_back(i);
      opt_.active_modes = canon;
    }
    const double rate = max_advective_rate(profile_, *grid_, l, opt_.active_modes);
    if (rate > 0.0 && dt_ > opt_.c_cfl / rate * (1.0 + 1e-12)) {
      char msg[256];
      std::snprintf(msg, sizeof msg, "ImexStepper: dt=%.6g exceeds the advective stability bound; use dt <= %.6g", dt_,
                    opt_.c_cfl / rate);
      throw InvalidArgument(msg);
    }
    for (int i : opt_.active_modes) systems_.push_back(build(i));
  }

  const std::vector<int>& active_modes() const { return opt_.active_modes; }
  double dt() const { return dt_; }
  const StepperOptions& options() const { return opt_; }

  void step(EvolveState& s) const {
    if (!s.b.layout().same_as(*layout_) || s.b.grid().nr != grid_->nr)
      throw InvalidArgument("ImexStepper::step: state does not match the stepper's discretization");
    const std::size_t na = systems_.size();
    std::vector<Eigen::VectorXcd> yv(na), yb(na), fv, fb;
    for (std::size_t a = 0; a < na; ++a) {
      const auto& sys = systems_[a];
      yb[a] = s.b.mode_vector(sys.index)(sys.b_rows);
      if (opt_.evolve_velocity) yv[a] = s.v.mode_vector(sys.index)(sys.v_rows);
    }
    slopes(s.v, s.b, yv, yb, fv, fb);

    if (!s.has_history) {
      // Heun: predictor with the current slope, corrector with the average.
      std::vector<Eigen::VectorXcd> pv(na), pb(na), fv1, fb1;
      EvolveState pred = s;
      for (std::size_t a = 0; a < na; ++a) {
        pb[a] = solve_b(a, yb[a], fb[a]);
        if (opt_.evolve_velocity) pv[a] = solve_v(a, yv[a], fv[a]);
      }
      write_back(pred, pv, pb);
      slopes(pred.v, pred.b, pv, pb, fv1, fb1);
      for (std::size_t a = 0; a < na; ++a) {
        yb[a] = solve_b(a, yb[a], 0.5 * (fb[a] + fb1[a]));
        if (opt_.evolve_velocity) yv[a] = solve_v(a, yv[a], 0.5 * (fv[a] + fv1[a]));
      }
    } else {
      for (std::size_t a = 0; a < na; ++a) {
        yb[a] = solve_b(a, yb[a], 1.5 * fb[a] - 0.5 * s.slope_b[a]);
        if (opt_.evolve_velocity) yv[a] = solve_v(a, yv[a], 1.5 * fv[a] - 0.5 * s.slope_v[a]);
      }
    }
    write_back(s, yv, yb);
    s.slope_v = std::move(fv);
    s.slope_b = std::move(fb);
    s.has_history = true;
    s.t += dt_;
    s.dt = dt_;
    ++s.steps;
  }

 private:
  struct ModeSystem {
    int index = 0;
    std::vector<int> b_rows, v_rows;
    // Per component: y' = propagate y + gain f, then y' <- clean y'.
    Eigen::MatrixXcd b_prolong, b_propagate, b_gain, b_transport, b_clean;
    Eigen::MatrixXcd v_prolong, v_propagate, v_gain, v_transport, v_clean, v_project_rows;
  };

  ModeSystem build(int i) const {
    const RadialGrid& g = *grid_;
    const int m = layout_->mode(i).m;
    const double kz = layout_->kz(i);
    ModeSystem sys;
    sys.index = i;
    const Eigen::MatrixXcd proj = LerayProjector(g, m, kz).matrix();
    const Eigen::MatrixXcd lap = modemat::vector_laplacian(g, m, kz);
    {
      const auto e = boundary_elimination(g, BcTag::conducting_magnetic);
      sys.b_rows = e.interior_rows;
      sys.b_prolong = e.prolong;
      const Eigen::MatrixXcd diff = (eps_ * lap)(e.interior_rows, Eigen::all) * e.prolong;
      sys.b_transport = dynamo_transport_matrix(profile_, g, m, kz)(e.interior_rows, Eigen::all) * e.prolong;
      const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(diff.rows(), diff.cols());
      const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(id - 0.5 * dt_ * diff);
      sys.b_propagate = lu.solve(id + 0.5 * dt_ * diff);
      sys.b_gain = lu.solve(dt_ * id);
      sys.b_clean = (proj * e.prolong)(e.interior_rows, Eigen::all);
    }
    if (opt_.evolve_velocity) {
      const auto e = boundary_elimination(g, BcTag::dirichlet_velocity);
      sys.v_rows = e.interior_rows;
      sys.v_prolong = e.prolong;
      sys.v_project_rows = proj(e.interior_rows, Eigen::all);
      const Eigen::MatrixXcd diff = sys.v_project_rows * (nu_ * lap) * e.prolong;
      sys.v_transport = sys.v_project_rows * linns_transport_matrix(profile_, g, m, kz) * e.prolong;
      const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(diff.rows(), diff.cols());
      const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(id - 0.5 * dt_ * diff);
      sys.v_propagate = lu.solve(id + 0.5 * dt_ * diff);
      sys.v_gain = lu.solve(dt_ * id);
      sys.v_clean = (proj * e.prolong)(e.interior_rows, Eigen::all);
    }
    return sys;
  }

  Eigen::VectorXcd solve_b(std::size_t a, const Eigen::VectorXcd& y, const Eigen::VectorXcd& f) const {
    const auto& sys = systems_[a];
    return sys.b_propagate * y + sys.b_gain * f;
  }
  Eigen::VectorXcd solve_v(std::size_t a, const Eigen::VectorXcd& y, const Eigen::VectorXcd& f) const {
    const auto& sys = systems_[a];
    return sys.v_propagate * y + sys.v_gain * f;
  }

  // Explicit slopes (transport + nonlinear) in reduced coordinates.
  void slopes(const SpectralField& v, const SpectralField& b, const std::vector<Eigen::VectorXcd>& yv,
              const std::vector<Eigen::VectorXcd>& yb, std::vector<Eigen::VectorXcd>& fv,
              std::vector<Eigen::VectorXcd>& fb) const {
    const std::size_t na = systems_.size();
    fv.assign(na, {});
    fb.assign(na, {});
    std::unique_ptr<SpectralField> nl_v, nl_b;
    if (opt_.nonlinear && !(v.is_zero() && b.is_zero())) {
      // -div(v (x) v) + div(B (x) B); the projection is applied per mode below.
      nl_v = std::make_unique<SpectralField>(tensor_divergence(b, b) - tensor_divergence(v, v));
      nl_b = std::make_unique<SpectralField>(apply_nonlinear_M(v, b));
    }
    for (std::size_t a = 0; a < na; ++a) {
      const auto& sys = systems_[a];
      fb[a] = sys.b_transport * yb[a];
      if (nl_b) fb[a] += nl_b->mode_vector(sys.index)(sys.b_rows);
      if (opt_.evolve_velocity) {
        fv[a] = sys.v_transport * yv[a];
        if (nl_v) fv[a] += sys.v_project_rows * nl_v->mode_vector(sys.index);
      }
    }
  }

  // Prolongs reduced vectors to nodal fields and re-projects both onto the
  // discretely solenoidal subspace; only wall values of the tangential
  // components change, so the wall conditions are restored exactly.
  void write_back(EvolveState& s, const std::vector<Eigen::VectorXcd>& yv,
                  const std::vector<Eigen::VectorXcd>& yb) const {
    for (std::size_t a = 0; a < systems_.size(); ++a) {
      const auto& sys = systems_[a];
      s.b.set_mode_vector(sys.index, sys.b_prolong * (sys.b_clean * yb[a]));
      if (opt_.evolve_velocity) {
        // The stiff implicit solve leaks round-off out of the solenoidal subspace.
        s.v.set_mode_vector(sys.index, sys.v_prolong * (sys.v_clean * yv[a]));
      }
    }
    if (opt_.nonlinear) {
      s.v.enforce_reality();
      s.b.enforce_reality();
    }
  }

  GridPtr grid_;
  LayoutPtr layout_;
  TCProfile profile_;
  double nu_, eps_, dt_;
  StepperOptions opt_;
  std::vector<ModeSystem> systems_;
};

/// Nonzero modes of a field (the linear problem decouples across modes).
inline std::vector<int> nonzero_modes(const SpectralField& f) {
  std::vector<int> out;
  for (int i = 0; i < f.nmodes(); ++i)
    if (!f.mode_vector(i).isZero(0.0)) out.push_back(i);
  return out;
}

/// One kinematic-dynamo step (v ignored).  Builds the per-mode solvers on
/// every call; long runs should hold an ImexStepper instead.
inline void step_linear_dynamo(EvolveState& s, double eps, const TCProfile& profile) {
  if (s.dt <= 0.0) throw InvalidArgument("step_linear_dynamo: state dt must be > 0");
  StepperOptions o;
  o.evolve_velocity = false;
  o.nonlinear = false;
  o.active_modes = nonzero_modes(s.b);
  if (o.active_modes.empty()) {
    s.t += s.dt;
    ++s.steps;
    return;
  }
  const ImexStepper st(s.b.grid_ptr(), s.b.layout_ptr(), profile, 0.0, eps, s.dt, o);
  st.step(s);
}

/// One step of the full perturbation system.
inline void step_nonlinear_mhd(EvolveState& s, double nu, double eps, const TCProfile& profile) {
  if (s.dt <= 0.0) throw InvalidArgument("step_nonlinear_mhd: state dt must be > 0");
  const ImexStepper st(s.b.grid_ptr(), s.b.layout_ptr(), profile, nu, eps, s.dt, StepperOptions{});
  st.step(s);
}

/// Field carrying one eigenvector on `mode` (and, when `real_pair`, its
/// conjugate on the partner mode), scaled to the given L2 norm.
inline SpectralField eigenmode_field(GridPtr grid, LayoutPtr layout, ModeIndex mode, const Eigen::VectorXcd& x,
                                     bool real_pair, double l2, BcTag bc = BcTag::conducting_magnetic) {
  SpectralField f(grid, layout, 3, bc);
  const int i = f.layout().find(mode);
  if (i < 0) throw InvalidArgument("eigenmode_field: layout lacks the requested mode");
  if (x.size() != 3 * f.nnodes()) throw InvalidArgument("eigenmode_field: vector length must be 3(Nr+1)");
  f.set_mode_vector(i, x);
  if (real_pair) {
    const int j = f.layout().conj_index(i);
    if (j == i) throw InvalidArgument("eigenmode_field: mode (0,0) has no distinct partner");
    f.set_mode_vector(j, x.conjugate());
  }
  const double n = l2_norm(f);
  if (!(n > 0.0)) throw InvalidArgument("eigenmode_field: zero eigenvector");
  f *= cplx(l2 / n);
  return f;
}

// --- traces ------------------------------------------------------------------

struct TraceRow {
  double t = 0, ev = 0, eb = 0, v_lp = 0, b_lp = 0, w_lp = 0, div_v = 0, div_b = 0, dt = 0;
};

/// Per-sample diagnostics not written to the trace CSV.
struct SampleDiagnostics {
  double bc_v = 0.0, bc_b = 0.0;
  double production = 0.0;   // shear production of kinetic + magnetic energy
  double dissipation = 0.0;  // -nu ||grad v||^2 - eps ||curl B||^2
};

struct EnergyTrace {
  double p = 2.0;
  std::vector<TraceRow> rows;
  std::vector<SampleDiagnostics> diagnostics;

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }

  void write_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open trace file for writing: " + path);
    out << "t,Ev,EB,v_Lp,B_Lp,w_Lp,div_v,div_B,dt\n";
    char buf[512];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.t, r.ev, r.eb, r.v_lp,
                    r.b_lp, r.w_lp, r.div_v, r.div_b, r.dt);
      out << buf;
    }
    if (!out) throw IoError("failed writing trace file: " + path);
  }
};

namespace detail {

// area * sum_modes sum_j w_j c(r_j) Re(conj(a_i) b_j): integral of a_i b_j c(r) for real fields.
inline double weighted_product(const SpectralField& a, int ca, const SpectralField& b, int cb,
                               const Eigen::VectorXd& radial) {
  const Eigen::VectorXd w = a.grid().weights.cwiseProduct(radial);
  const auto x = a.component(ca);
  const auto y = b.component(cb);
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.cols(); ++i) s += (x.col(i).conjugate().cwiseProduct(y.col(i))).real().dot(w);
  return a.layout().torus_area() * s;
}

}  // namespace detail

/// Energy sources of the perturbation system at one instant.
inline SampleDiagnostics energy_budget(const SpectralField& v, const SpectralField& b, double nu, double eps,
                                       const TCProfile& p, bool with_velocity) {
  const RadialGrid& g = b.grid();
  Eigen::VectorXd shear(g.size()), du_z(g.size());
  for (Eigen::Index j = 0; j < g.size(); ++j) {
    shear(j) = p.r_domega(g.nodes(j));
    du_z(j) = p.du_z(g.nodes(j));
  }
  SampleDiagnostics d;
  d.production = detail::weighted_product(b, 0, b, 1, shear) + detail::weighted_product(b, 0, b, 2, du_z);
  d.dissipation = -eps * std::pow(l2_norm(curl(b)), 2);
  if (with_velocity) {
    d.production -= detail::weighted_product(v, 0, v, 1, shear) + detail::weighted_product(v, 0, v, 2, du_z);
    d.dissipation -= nu * std::pow(l2_norm(covariant_gradient(v)), 2);
  }
  d.bc_v = boundary_residual(v, BcTag::dirichlet_velocity);
  d.bc_b = boundary_residual(b, BcTag::conducting_magnetic);
  return d;
}

inline TraceRow sample_row(const EvolveState& s, double p) {
  TraceRow r;
  r.t = s.t;
  r.ev = 0.5 * std::pow(l2_norm(s.v), 2);
  r.eb = 0.5 * std::pow(l2_norm(s.b), 2);
  r.v_lp = lp_norm(s.v, p);
  r.b_lp = lp_norm(s.b, p);
  r.w_lp = lp_norm_pair(s.v, s.b, p);
  r.div_v = divergence_score(s.v);
  r.div_b = divergence_score(s.b);
  r.dt = s.dt;
  return r;
}

// --- runs ------------------------------------------------------------------

enum class StopReason { t_end, escaped };

inline const char* to_string(StopReason r) { return r == StopReason::t_end ? "t_end" : "escaped"; }

/// Worst per-step constraint violations over a run.
struct StepMonitor {
  double max_div_v = 0.0, max_div_b = 0.0, max_bc_v = 0.0, max_bc_b = 0.0;
  long steps_checked = 0;
};

struct RunResult {
  RunResult(SpectralField v0, SpectralField b0) : v(std::move(v0)), b(std::move(b0)) {}
  EnergyTrace trace;
  StopReason reason = StopReason::t_end;
  StepMonitor monitor;
  SpectralField v, b;  // final state
};

/// Raised when a run produces non-finite values; carries the trace so far.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, EnergyTrace trace) : NumericalError(what), trace_(std::move(trace)) {}
  const EnergyTrace& trace() const { return trace_; }

 private:
  EnergyTrace trace_;
};

struct RunOptions {
  double t_end = 0.0;
  double dt = 0.0;
  int sample_every = 1;
  double p = 2.0;
  double chi = 0.0;            // > 0: stop at the first sample with ||w||_{L^p} >= chi
  bool monitor_steps = false;  // evaluate divergence and wall residuals after every step
  bool budget = false;         // record energy-budget terms at samples
  double c_cfl = 0.5;
};

namespace detail {

inline void validate(const RunOptions& o) {
  if (!(o.t_end > 0.0)) throw InvalidArgument("run: T_end must be > 0");
  if (!(o.dt > 0.0)) throw InvalidArgument("run: dt must be > 0");
  if (o.sample_every < 1) throw InvalidArgument("run: sample_every must be >= 1");
  if (!(o.p >= 1.0)) throw InvalidArgument("run: p must be >= 1");
}

inline RunResult drive(const ImexStepper& stepper, EvolveState s, const RunOptions& o, double nu, double eps,
                       const TCProfile& profile) {
  RunResult res(s.v, s.b);
  res.trace.p = o.p;
  const bool with_v = stepper.options().evolve_velocity;
  const auto sample = [&] {
    res.trace.rows.push_back(sample_row(s, o.p));
    if (o.budget) res.trace.diagnostics.push_back(energy_budget(s.v, s.b, nu, eps, profile, with_v));
  };
  s.dt = o.dt;
  sample();
  const long nsteps = static_cast<long>(std::ceil(o.t_end / o.dt - 1e-9));
  for (long n = 1; n <= nsteps; ++n) {
    stepper.step(s);
    if (!s.b.all_finite() || !s.v.all_finite()) {
      sample();
      char msg[160];
      std::snprintf(msg, sizeof msg, "run: non-finite values at step %ld (t=%.6g)", n, s.t);
      throw DivergenceError(msg, std::move(res.trace));
    }
    if (o.monitor_steps) {
      auto& m = res.monitor;
      m.max_div_b = std::max(m.max_div_b, divergence_score(s.b));
      m.max_bc_b = std::max(m.max_bc_b, boundary_residual(s.b, BcTag::conducting_magnetic));
      if (with_v) {
        m.max_div_v = std::max(m.max_div_v, divergence_score(s.v));
        m.max_bc_v = std::max(m.max_bc_v, boundary_residual(s.v, BcTag::dirichlet_velocity));
      }
      ++m.steps_checked;
    }
    if (n % o.sample_every == 0 || n == nsteps) {
      sample();
      if (o.chi > 0.0 && res.trace.rows.back().w_lp >= o.chi) {
        res.reason = StopReason::escaped;
        break;
      }
    }
  }
  res.v = std::move(s.v);
  res.b = std::move(s.b);
  return res;
}

}  // namespace detail

/// Kinematic dynamo from B0 (the velocity stays zero).
inline RunResult run_linear(const SpectralField& b0, double eps, const TCProfile& profile, const RunOptions& o) {
  detail::validate(o);
  EvolveState s(SpectralField::zeros_like(b0, 3), b0);
  StepperOptions so;
  so.evolve_velocity = false;
  so.nonlinear = false;
  so.c_cfl = o.c_cfl;
  so.active_modes = nonzero_modes(b0);
  if (so.active_modes.empty()) so.active_modes.push_back(0);
  const ImexStepper st(b0.grid_ptr(), b0.layout_ptr(), profile, 0.0, eps, o.dt, so);
  return detail::drive(st, std::move(s), o, 0.0, eps, profile);
}

/// Full perturbation system from real initial data (v0, B0).
inline RunResult run_nonlinear(const SpectralField& v0, const SpectralField& b0, double nu, double eps,
                               const TCProfile& profile, const RunOptions& o, bool nonlinear = true) {
  detail::validate(o);
  if (v0.reality_defect() > 1e-12 * std::max(1.0, v0.data().cwiseAbs().maxCoeff()) ||
      b0.reality_defect() > 1e-12 * std::max(1.0, b0.data().cwiseAbs().maxCoeff()))
    throw InvalidArgument("run_nonlinear: initial data must be real fields");
  EvolveState s(v0, b0);
  s.v.enforce_reality();
  s.b.enforce_reality();
  StepperOptions so;
  so.nonlinear = nonlinear;
  so.c_cfl = o.c_cfl;
  if (!nonlinear) {
    // Linear evolution keeps every mode independent; step the whole layout.
    for (int i = 0; i < v0.nmodes(); ++i) so.active_modes.push_back(i);
  }
  const ImexStepper st(b0.grid_ptr(), b0.layout_ptr(), profile, nu, eps, o.dt, so);
  return detail::drive(st, std::move(s), o, nu, eps, profile);
}

// --- measurements ------------------------------------------------------------

struct GrowthFit {
  double rate = 0.0;
  double std_error = 0.0;
  int samples = 0;
};

/// Least-squares slope of log ||B||_{L2} over samples with t in [t0, t1].
inline GrowthFit measured_growth_rate(const EnergyTrace& trace, double t0, double t1) {
  std::vector<double> ts, ys;
  for (const auto& r : trace.rows) {
    if (r.t < t0 - 1e-12 || r.t > t1 + 1e-12) continue;
    if (!(r.eb > 0.0)) throw InvalidArgument("measured_growth_rate: non-positive norm in the window");
    ts.push_back(r.t);
    ys.push_back(0.5 * std::log(2.0 * r.eb));
  }
  if (ts.size() < 10) throw InvalidArgument("measured_growth_rate: window holds fewer than 10 samples");
  const LinearFit f = least_squares(ts, ys);
  return {f.slope, f.slope_stderr, f.count};
}

/// Same fit for an arbitrary sampled series (used for the velocity norm).
inline GrowthFit log_slope(const std::vector<double>& t, const std::vector<double>& values, double t0, double t1) {
  std::vector<double> ts, ys;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < t0 - 1e-12 || t[i] > t1 + 1e-12) continue;
    if (!(values[i] > 0.0)) throw InvalidArgument("log_slope: non-positive value in the window");
    ts.push_back(t[i]);
    ys.push_back(std::log(values[i]));
  }
  if (ts.size() < 10) throw InvalidArgument("log_slope: window holds fewer than 10 samples");
  const LinearFit f = least_squares(ts, ys);
  return {f.slope, f.slope_stderr, f.count};
}

/// First crossing of ||w||_{L^p} >= chi, interpolated linearly in log-norm.
inline double detect_escape_time(const EnergyTrace& trace, double chi) {
  if (trace.empty()) throw InvalidArgument("detect_escape_time: empty trace");
  if (!(chi > trace.rows.front().w_lp))
    throw InvalidArgument("detect_escape_time: chi must exceed the initial norm");
  for (std::size_t i = 1; i < trace.rows.size(); ++i) {
    const auto& a = trace.rows[i - 1];
    const auto& b = trace.rows[i];
    if (b.w_lp >= chi) {
      if (!(a.w_lp > 0.0)) return b.t;
      const double la = std::log(a.w_lp), lb = std::log(b.w_lp), lc = std::log(chi);
      if (lb == la) return b.t;
      return a.t + (b.t - a.t) * (lc - la) / (lb - la);
    }
  }
  throw NumericalError("detect_escape_time: threshold not reached before the end of the run");
}

/// Relative mismatch between the centred difference of the sampled energy
/// and the budget (production + dissipation) at each interior sample.
inline std::vector<double> budget_closure(const EnergyTrace& trace) {
  if (trace.diagnostics.size() != trace.rows.size())
    throw InvalidArgument("budget_closure: trace was recorded without budget terms");
  std::vector<double> out;
  for (std::size_t i = 1; i + 1 < trace.rows.size(); ++i) {
    const auto& a = trace.rows[i - 1];
    const auto& c = trace.rows[i];
    const auto& b = trace.rows[i + 1];
    const double h1 = c.t - a.t, h2 = b.t - c.t;
    const double ea = a.ev + a.eb, ec = c.ev + c.eb, eb = b.ev + b.eb;
    // Second-order derivative on a non-uniform stencil.
    const double dedt = (-h2 / (h1 * (h1 + h2))) * ea + ((h2 - h1) / (h1 * h2)) * ec + (h1 / (h2 * (h1 + h2))) * eb;
    const auto& d = trace.diagnostics[i];
    const double rhs = d.production + d.dissipation;
    out.push_back(rhs == 0.0 ? std::abs(dedt) : std::abs(dedt - rhs) / std::abs(rhs));
  }
  return out;
}

}  // namespace mhdtc
