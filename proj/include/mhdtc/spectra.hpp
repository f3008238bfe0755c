#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "mhdtc/error.hpp"
#include "mhdtc/field.hpp"
#include "mhdtc/grid.hpp"
#include "mhdtc/linalg.hpp"
#include "mhdtc/oper.hpp"
#include "mhdtc/parallel.hpp"
#include "mhdtc/steady.hpp"

namespace mhdtc {

/// Thresholds of the spurious-mode filter.
struct SpectrumOptions {
  double residual_tol = 1e-8;  // residual <= residual_tol * (1 + |lambda|)
  double div_tol = 1e-6;
  double drift_tol = 1e-6;  // drift <= drift_tol * (1 + |lambda|)
};

struct EigenReport {
  ModeIndex mode;
  OperatorKind kind = OperatorKind::dynamo;
  int nr = 0;
  std::vector<cplx> eigenvalues;  // descending real part
  std::vector<double> residuals;
  std::vector<double> div_scores;
  std::vector<double> drifts;  // NaN where not evaluated (failed an earlier filter)
  std::vector<bool> retained;
  std::vector<OperatorKind> sources;  // which block each pair belongs to
  Eigen::MatrixXcd vectors;           // nodal eigenvectors, one column per pair, ||x||_{L2} = 1
  int leader = -1;

  bool has_leader() const { return leader >= 0; }
  cplx leader_value() const {
    if (!has_leader()) throw NumericalError("EigenReport: no retained eigenpair for mode (" + std::to_string(mode.m) + "," +
                                            std::to_string(mode.k) + ")");
    return eigenvalues[leader];
  }
  OperatorKind winner() const { return has_leader() ? sources[leader] : kind; }
  Eigen::VectorXcd leader_vector() const {
    leader_value();
    return vectors.col(leader);
  }
  int retained_count() const { return static_cast<int>(std::count(retained.begin(), retained.end(), true)); }
};

namespace detail {

// Quadrature weights of the per-mode L2 norm for `ncomp` stacked components.
inline Eigen::VectorXd stacked_weights(const RadialGrid& g, int ncomp, double area, bool interior_only) {
  const int n = g.size();
  Eigen::VectorXd w(ncomp * n);
  for (int c = 0; c < ncomp; ++c) {
    w.segment(c * n, n) = area * g.weights;
    if (interior_only) {
      w(c * n + g.first()) = 0.0;
      w(c * n + g.last()) = 0.0;
    }
  }
  return w;
}

inline double weighted_norm(const Eigen::VectorXd& w, const Eigen::VectorXcd& x) {
  return std::sqrt((w.array() * x.array().abs2()).sum());
}

// Orthonormal basis of the interior coordinates whose prolongation is
// divergence-free at interior nodes.  The projected Navier-Stokes operator
// maps into this subspace, so restricting to it drops the pressure kernel.
inline Eigen::MatrixXcd solenoidal_basis(const ModeOperator& op) {
  const RadialGrid& g = *op.grid;
  const int n = g.size(), ni = n - 2;
  if (op.mode.m == 0 && op.kz == 0.0) {
    // The only radial field with zero divergence and zero wall values is zero.
    Eigen::MatrixXcd q = Eigen::MatrixXcd::Zero(3 * ni, 2 * ni);
    q.bottomRows(2 * ni).setIdentity();
    return q;
  }
  std::vector<int> inner(ni);
  for (int j = 0; j < ni; ++j) inner[j] = j + 1;
  const Eigen::MatrixXcd div_int = modemat::divergence(g, op.mode.m, op.kz)(inner, Eigen::all) * op.prolong;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr(div_int.adjoint());
  const Eigen::MatrixXcd full = qr.householderQ();
  const int rank = static_cast<int>(qr.rank());
  return full.rightCols(3 * ni - rank);
}

struct RawPairs {
  Eigen::VectorXcd values;
  Eigen::MatrixXcd reduced_vectors;  // in the operator's reduced coordinates
};

// Eigenpairs of a single (dynamo or linns) operator.
inline RawPairs raw_pairs(const ModeOperator& op, bool want_vectors) {
  RawPairs out;
  if (op.kind == OperatorKind::linns) {
    const Eigen::MatrixXcd q = solenoidal_basis(op);
    const Eigen::MatrixXcd restricted = q.adjoint() * op.reduced * q;
    auto e = linalg::eig(restricted, want_vectors);
    out.values = std::move(e.values);
    if (want_vectors) out.reduced_vectors = q * e.vectors;
    return out;
  }
  if (op.kind != OperatorKind::dynamo) throw InvalidArgument("raw_pairs: expects a single block");
  auto e = linalg::eig(op.reduced, want_vectors);
  out.values = std::move(e.values);
  if (want_vectors) out.reduced_vectors = std::move(e.vectors);
  return out;
}

inline ModeOperator rebuild(const ModeOperator& op, OperatorKind kind, GridPtr grid) {
  if (kind == OperatorKind::dynamo) return assemble_dynamo_block(op.mode, op.profile, op.eps, std::move(grid), op.lz);
  if (kind == OperatorKind::linns) return assemble_linns_block(op.mode, op.profile, op.nu, std::move(grid), op.lz);
  return assemble_block(op.mode, op.profile, op.nu, op.eps, std::move(grid), op.lz);
}

inline GridPtr doubled_grid(const RadialGrid& g) { return make_grid(g.r1, g.r2, 2 * g.nr); }

// Filtered pairs of a single block; vectors are nodal (3n).
struct SingleSpectrum {
  std::vector<cplx> values;
  std::vector<double> residuals, div_scores, drifts;
  std::vector<bool> retained;
  Eigen::MatrixXcd vectors;
};

inline SingleSpectrum single_spectrum(const ModeOperator& op, const SpectrumOptions& opt) {
  const RadialGrid& g = *op.grid;
  const int n = g.size();
  const double area = 4.0 * std::numbers::pi * std::numbers::pi * op.lz;
  const RawPairs raw = raw_pairs(op, true);
  const int count = static_cast<int>(raw.values.size());
  const auto order = linalg::order_by_real_desc(raw.values);

  const Eigen::VectorXd w_full = stacked_weights(g, 3, area, false);
  const Eigen::VectorXd w_int = stacked_weights(g, 3, area, true);
  const Eigen::VectorXd w_scalar_int = stacked_weights(g, 1, area, true);
  const Eigen::MatrixXcd div = modemat::divergence(g, op.mode.m, op.kz);
  // Interior-row weights in reduced coordinates (the reduced operator has interior rows only).
  const auto elim = boundary_elimination(g, op.kind == OperatorKind::linns ? BcTag::dirichlet_velocity
                                                                            : BcTag::conducting_magnetic);
  Eigen::VectorXd w_rows(elim.interior_rows.size());
  for (std::size_t i = 0; i < elim.interior_rows.size(); ++i) w_rows(i) = w_full(elim.interior_rows[i]);

  SingleSpectrum s;
  s.vectors.resize(3 * n, count);
  std::optional<Eigen::VectorXcd> fine_values;
  for (int idx = 0; idx < count; ++idx) {
    const int src = order[idx];
    const cplx lambda = raw.values(src);
    const Eigen::VectorXcd y = raw.reduced_vectors.col(src);
    Eigen::VectorXcd x = op.prolong * y;
    const double xnorm = weighted_norm(w_full, x);
    if (!(xnorm > 0.0) || !std::isfinite(xnorm)) throw NumericalError("mode_spectrum: degenerate eigenvector");
    x /= xnorm;
    // Phase: largest-magnitude entry real positive.
    Eigen::Index big = 0;
    x.cwiseAbs().maxCoeff(&big);
    x *= std::conj(x(big)) / std::abs(x(big));
    x(big) = std::abs(x(big));

    // Re-verified independently of the eigensolver, in the L2 norm on interior nodes.
    const double residual = weighted_norm(w_rows, op.reduced * y - lambda * y) / xnorm;
    const double div_score = weighted_norm(w_scalar_int, div * x);  // x has unit norm

    double drift = std::numeric_limits<double>::quiet_NaN();
    // Scaled like the drift test: the backward-error floor of a dense solve
    // grows with the operator norm (||A1|| ~ nu Nr^4).
    bool keep = residual <= opt.residual_tol * (1.0 + std::abs(lambda)) && div_score <= opt.div_tol;
    if (keep) {
      if (!fine_values) {
        const ModeOperator fine = rebuild(op, op.kind, doubled_grid(g));
        fine_values = raw_pairs(fine, false).values;
      }
      drift = (fine_values->array() - lambda).abs().minCoeff();
      keep = drift <= opt.drift_tol * (1.0 + std::abs(lambda));
    }
    s.values.push_back(lambda);
    s.residuals.push_back(residual);
    s.div_scores.push_back(div_score);
    s.drifts.push_back(drift);
    s.retained.push_back(keep);
    s.vectors.col(idx) = x;
  }
  return s;
}

}  // namespace detail

/// Full dense eigendecomposition of one mode with the triple filter
/// (residual, divergence score, drift under radial refinement).
inline EigenReport mode_spectrum(const ModeOperator& op, const SpectrumOptions& opt = {}) {
  if (!op.grid || op.reduced.size() == 0) throw InvalidArgument("mode_spectrum: operator is not assembled");
  EigenReport rep;
  rep.mode = op.mode;
  rep.kind = op.kind;
  rep.nr = op.grid->nr;
  const int n = op.grid->size();

  std::vector<std::pair<OperatorKind, detail::SingleSpectrum>> parts;
  if (op.kind == OperatorKind::block) {
    parts.emplace_back(OperatorKind::linns, detail::single_spectrum(detail::rebuild(op, OperatorKind::linns, op.grid), opt));
    parts.emplace_back(OperatorKind::dynamo,
                       detail::single_spectrum(detail::rebuild(op, OperatorKind::dynamo, op.grid), opt));
  } else {
    parts.emplace_back(op.kind, detail::single_spectrum(op, opt));
  }

  struct Entry {
    cplx value;
    int part, col;
  };
  std::vector<Entry> all;
  for (int p = 0; p < static_cast<int>(parts.size()); ++p)
    for (int c = 0; c < static_cast<int>(parts[p].second.values.size()); ++c)
      all.push_back({parts[p].second.values[c], p, c});
  std::stable_sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) {
    if (a.value.real() != b.value.real()) return a.value.real() > b.value.real();
    return a.value.imag() > b.value.imag();
  });

  const int rows = op.kind == OperatorKind::block ? 6 * n : 3 * n;
  rep.vectors = Eigen::MatrixXcd::Zero(rows, static_cast<Eigen::Index>(all.size()));
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto& [kind, s] = parts[all[i].part];
    rep.eigenvalues.push_back(all[i].value);
    rep.residuals.push_back(s.residuals[all[i].col]);
    rep.div_scores.push_back(s.div_scores[all[i].col]);
    rep.drifts.push_back(s.drifts[all[i].col]);
    rep.retained.push_back(s.retained[all[i].col]);
    rep.sources.push_back(kind);
    // In the direct sum the velocity occupies the first half.
    const int offset = (op.kind == OperatorKind::block && kind == OperatorKind::dynamo) ? 3 * n : 0;
    rep.vectors.block(offset, static_cast<Eigen::Index>(i), 3 * n, 1) = s.vectors.col(all[i].col);
    if (rep.leader < 0 && rep.retained.back()) rep.leader = static_cast<int>(i);
  }
  return rep;
}

/// Raw (unfiltered) eigenvalues of one mode, descending real part.
inline std::vector<cplx> raw_eigenvalues(const ModeOperator& op) {
  std::vector<cplx> out;
  const auto add = [&](const ModeOperator& single) {
    const auto v = detail::raw_pairs(single, false).values;
    out.insert(out.end(), v.data(), v.data() + v.size());
  };
  if (op.kind == OperatorKind::block) {
    add(detail::rebuild(op, OperatorKind::linns, op.grid));
    add(detail::rebuild(op, OperatorKind::dynamo, op.grid));
  } else {
    add(op);
  }
  std::stable_sort(out.begin(), out.end(), [](cplx a, cplx b) {
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() > b.imag();
  });
  return out;
}

// --- mode scans ------------------------------------------------------------

/// Scan window: m in [0, mmax], k in [-kmax, kmax].  Negative m are the
/// complex conjugates of positive ones and are not solved separately.
struct ScanRanges {
  int mmax = 16;
  int kmax = 16;
};

inline std::vector<ModeIndex> scan_modes(const ScanRanges& r) {
  if (r.mmax < 0 || r.kmax < 0) throw InvalidArgument("scan ranges must be non-negative");
  std::vector<ModeIndex> modes;
  for (int m = 0; m <= r.mmax; ++m)
    for (int k = -r.kmax; k <= r.kmax; ++k) {
      if (m == 0 && k <= 0) continue;  // conjugates, and the flux-carrying mean mode
      modes.push_back({m, k});
    }
  return modes;
}

struct OperatorSpec {
  OperatorKind kind = OperatorKind::dynamo;
  TCProfile profile;
  double nu = 0.0;
  double eps = 0.0;
  double lz = 1.0;
};

inline ModeOperator assemble(const OperatorSpec& s, ModeIndex mode, GridPtr grid) {
  switch (s.kind) {
    case OperatorKind::dynamo: return assemble_dynamo_block(mode, s.profile, s.eps, std::move(grid), s.lz);
    case OperatorKind::linns: return assemble_linns_block(mode, s.profile, s.nu, std::move(grid), s.lz);
    default: return assemble_block(mode, s.profile, s.nu, s.eps, std::move(grid), s.lz);
  }
}

/// Process-wide memo of per-mode reports, keyed by everything that
/// determines the operator.
class EigenCache {
 public:
  static EigenCache& instance() {
    static EigenCache c;
    return c;
  }

  std::shared_ptr<const EigenReport> get_or_compute(const OperatorSpec& s, ModeIndex mode, const GridPtr& grid,
                                                    const SpectrumOptions& opt) {
    const std::string k = key(s, mode, *grid, opt);
    {
      std::lock_guard lock(mutex_);
      if (auto it = store_.find(k); it != store_.end()) return it->second;
    }
    auto rep = std::make_shared<const EigenReport>(mode_spectrum(assemble(s, mode, grid), opt));
    std::lock_guard lock(mutex_);
    return store_.emplace(k, std::move(rep)).first->second;
  }

  void clear() {
    std::lock_guard lock(mutex_);
    store_.clear();
  }
  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return store_.size();
  }

 private:
  static std::string key(const OperatorSpec& s, ModeIndex mode, const RadialGrid& g, const SpectrumOptions& o) {
    char buf[512];
    const auto& p = s.profile;
    std::snprintf(buf, sizeof buf, "%d|%.17g,%.17g,%.17g,%.17g|%.17g,%.17g|%.17g,%.17g,%.17g|%d,%d|%d|%.17g,%.17g,%.17g",
                  static_cast<int>(s.kind), p.a1, p.a2, p.a3, p.a4, g.r1, g.r2, s.nu, s.eps, s.lz, mode.m, mode.k, g.nr,
                  o.residual_tol, o.div_tol, o.drift_tol);
    return buf;
  }

  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const EigenReport>> store_;
};

struct ModeTop {
  ModeIndex mode;
  cplx top;  // rightmost raw eigenvalue
};

struct ScanResult {
  EigenReport report;         // full report of the winning mode
  std::vector<ModeTop> tops;  // raw rightmost eigenvalue of every scanned mode, in scan order
  int modes_verified = 0;     // modes that went through the full filter
  ScanRanges ranges;
  bool leader_on_edge() const {
    const auto q = report.mode;
    return std::abs(q.m) >= ranges.mmax || std::abs(q.k) >= ranges.kmax;
  }
};

namespace detail {

inline ScanResult scan_single(const OperatorSpec& s, const ScanRanges& ranges, const GridPtr& grid,
                              const SpectrumOptions& opt, bool use_cache) {
  const auto modes = scan_modes(ranges);
  if (modes.empty()) throw InvalidArgument("rightmost_eigen: empty scan window");
  ScanResult res;
  res.ranges = ranges;
  res.tops.resize(modes.size());
  parallel_for(static_cast<int>(modes.size()), [&](int i) {
    const auto vals = raw_pairs(assemble(s, modes[i], grid), false).values;
    const auto order = linalg::order_by_real_desc(vals);
    res.tops[i] = {modes[i], vals(order.front())};
  });

  std::vector<int> order(modes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return res.tops[a].top.real() > res.tops[b].top.real(); });

  std::optional<EigenReport> best;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    if (best && best->leader_value().real() >= res.tops[order[pos]].top.real()) break;
    const ModeIndex q = modes[order[pos]];
    EigenReport rep = use_cache ? *EigenCache::instance().get_or_compute(s, q, grid, opt)
                                : mode_spectrum(assemble(s, q, grid), opt);
    ++res.modes_verified;
    if (rep.has_leader() && (!best || rep.leader_value().real() > best->leader_value().real())) best = std::move(rep);
  }
  if (!best) throw NumericalError("rightmost_eigen: no retained eigenpair in the scan window (under-resolved?)");
  res.report = std::move(*best);
  return res;
}

}  // namespace detail

/// Globally rightmost retained eigenpair over the scan window.  For the
/// direct sum the leaders of both blocks are compared and the report's
/// sources record which one wins.
inline ScanResult rightmost_eigen(const OperatorSpec& s, const ScanRanges& ranges, const GridPtr& grid,
                                  const SpectrumOptions& opt = {}, bool use_cache = true) {
  if (!grid) throw InvalidArgument("rightmost_eigen: null grid");
  if (s.kind != OperatorKind::block) return detail::scan_single(s, ranges, grid, opt, use_cache);
  OperatorSpec s1 = s, s2 = s;
  s1.kind = OperatorKind::linns;
  s2.kind = OperatorKind::dynamo;
  ScanResult r1 = detail::scan_single(s1, ranges, grid, opt, use_cache);
  ScanResult r2 = detail::scan_single(s2, ranges, grid, opt, use_cache);
  const bool dynamo_wins = r2.report.leader_value().real() >= r1.report.leader_value().real();
  ScanResult out = dynamo_wins ? std::move(r2) : std::move(r1);
  const ScanResult& other = dynamo_wins ? r1 : r2;
  out.modes_verified += other.modes_verified;
  out.tops.insert(out.tops.end(), other.tops.begin(), other.tops.end());
  // Express the winning pair in the stacked (v, B) space.
  EigenReport& rep = out.report;
  const int n = grid->size();
  Eigen::MatrixXcd stacked = Eigen::MatrixXcd::Zero(6 * n, rep.vectors.cols());
  stacked.block(dynamo_wins ? 3 * n : 0, 0, 3 * n, rep.vectors.cols()) = rep.vectors;
  rep.vectors = std::move(stacked);
  rep.kind = OperatorKind::block;
  return out;
}

// --- epsilon scaling -------------------------------------------------------

struct ScalingPoint {
  double eps = 0.0;
  ModeIndex mode;
  cplx leader;
  bool positive = false;
  ScanRanges ranges;
  double drift = 0.0;
};

struct LinearFit {
  double slope = 0.0, intercept = 0.0, slope_stderr = 0.0;
  int count = 0;
};

/// Ordinary least squares y = slope x + intercept, with the slope's standard error.
inline LinearFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("least_squares: need >= 2 paired samples");
  const int n = static_cast<int>(x.size());
  double mx = 0, my = 0;
  for (int i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw InvalidArgument("least_squares: abscissae are all equal");
  LinearFit f;
  f.count = n;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (n > 2) {
    double ssr = 0;
    for (int i = 0; i < n; ++i) ssr += std::pow(y[i] - (f.slope * x[i] + f.intercept), 2);
    f.slope_stderr = std::sqrt(ssr / (n - 2) / sxx);
  }
  return f;
}

struct ScalingResult {
  std::vector<ScalingPoint> points;
  LinearFit fit;  // log(Re lambda) against log(eps), positive leaders only
};

/// Leader of each eps in turn, widening the scan window until every
/// leader mode sits strictly inside it (or the cap is reached).
inline std::vector<ScalingPoint> epsilon_scaling_points(const TCProfile& profile, const std::vector<double>& eps_list,
                                                        ScanRanges ranges, const GridPtr& grid, double lz = 1.0,
                                                        int widen_cap = 64, const SpectrumOptions& opt = {}) {
  if (eps_list.size() < 4) throw InvalidArgument("epsilon_scaling_sweep: need at least 4 eps values");
  const auto [lo, hi] = std::minmax_element(eps_list.begin(), eps_list.end());
  if (!(*lo > 0.0)) throw InvalidArgument("epsilon_scaling_sweep: eps values must be > 0");
  if (std::log10(*hi / *lo) < 1.5 - 1e-12) throw InvalidArgument("epsilon_scaling_sweep: eps list must span >= 1.5 decades");
  const double ratio = eps_list[1] / eps_list[0];
  for (std::size_t i = 1; i < eps_list.size(); ++i)
    if (std::abs(std::log(eps_list[i] / eps_list[i - 1]) - std::log(ratio)) > 1e-9 * std::abs(std::log(ratio)) + 1e-12)
      throw InvalidArgument("epsilon_scaling_sweep: eps list must be geometric");

  std::vector<ScalingPoint> points;
  for (double eps : eps_list) {
    OperatorSpec s{OperatorKind::dynamo, profile, 0.0, eps, lz};
    ScanRanges r = ranges;
    ScanResult scan = rightmost_eigen(s, r, grid, opt);
    while (scan.leader_on_edge() && (r.mmax < widen_cap || r.kmax < widen_cap)) {
      if (std::abs(scan.report.mode.m) >= r.mmax) r.mmax = std::min(widen_cap, r.mmax + std::max(4, r.mmax / 2));
      if (std::abs(scan.report.mode.k) >= r.kmax) r.kmax = std::min(widen_cap, r.kmax + std::max(4, r.kmax / 2));
      scan = rightmost_eigen(s, r, grid, opt);
    }
    ScalingPoint pt;
    pt.eps = eps;
    pt.mode = scan.report.mode;
    pt.leader = scan.report.leader_value();
    pt.positive = pt.leader.real() > 0.0;
    pt.ranges = r;
    pt.drift = scan.report.drifts[scan.report.leader];
    points.push_back(pt);
  }
  return points;
}

/// log(Re lambda) against log(eps) over the growing leaders.
inline LinearFit scaling_fit(const std::vector<ScalingPoint>& points) {
  std::vector<double> xs, ys;
  for (const auto& pt : points) {
    if (!pt.positive) continue;
    xs.push_back(std::log(pt.eps));
    ys.push_back(std::log(pt.leader.real()));
  }
  if (xs.size() < 4)
    throw NumericalError("epsilon_scaling_sweep: fewer than 4 eps values have a growing leader (" +
                         std::to_string(xs.size()) + ")");
  return least_squares(xs, ys);
}

inline ScalingResult epsilon_scaling_sweep(const TCProfile& profile, const std::vector<double>& eps_list,
                                           ScanRanges ranges, const GridPtr& grid, double lz = 1.0,
                                           int widen_cap = 64, const SpectrumOptions& opt = {}) {
  ScalingResult out;
  out.points = epsilon_scaling_points(profile, eps_list, ranges, grid, lz, widen_cap, opt);
  out.fit = scaling_fit(out.points);
  return out;
}

// --- functional calculus -----------------------------------------------------

/// Holomorphic functions of a shifted operator, with operator norms in the
/// inner product <x, y>_G = x^H G y (G Hermitian positive definite).
class FunctionalCalculus {
 public:
  FunctionalCalculus(Eigen::MatrixXcd a, const Eigen::MatrixXcd& gram, double cond_limit = 1e12) : a_(std::move(a)) {
    if (a_.rows() != a_.cols() || gram.rows() != a_.rows() || gram.cols() != a_.cols())
      throw InvalidArgument("FunctionalCalculus: dimension mismatch");
    Eigen::LLT<Eigen::MatrixXcd> llt(gram);
    if (llt.info() != Eigen::Success) throw NumericalError("FunctionalCalculus: Gram matrix is not positive definite");
    upper_ = llt.matrixU();  // G = U^H U
    upper_inv_ = upper_.triangularView<Eigen::Upper>().solve(Eigen::MatrixXcd::Identity(a_.rows(), a_.cols()));

    auto e = linalg::eig(a_, true);
    values_ = e.values;
    spectral_abscissa_ = values_.real().maxCoeff();
    if (!(spectral_abscissa_ < 0.0))
      throw NumericalError("FunctionalCalculus: shifted spectrum is not in the open left half-plane (abscissa " +
                           std::to_string(spectral_abscissa_) + "); increase eta");
    cond_ = linalg::cond2(e.vectors);
    schur_ = !(cond_ <= cond_limit);
    if (!schur_) {
      Eigen::PartialPivLU<Eigen::MatrixXcd> lu(e.vectors);
      left_ = upper_ * e.vectors;
      right_ = lu.solve(upper_inv_);
    }
    const Eigen::MatrixXcd s = upper_ * a_ * upper_inv_;
    numerical_abscissa_ =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(0.5 * (s + s.adjoint()), Eigen::EigenvaluesOnly)
            .eigenvalues()
            .maxCoeff();
  }

  double spectral_abscissa() const { return spectral_abscissa_; }
  double numerical_abscissa() const { return numerical_abscissa_; }
  double eigenvector_condition() const { return cond_; }
  bool uses_schur() const { return schur_; }

  /// (-A)^alpha exp(A t), principal branch.
  Eigen::MatrixXcd smoothing(double alpha, double t) const {
    return apply([&](cplx mu) { return std::pow(-mu, alpha) * std::exp(mu * t); },
                 [&]() -> Eigen::MatrixXcd { return power(alpha) * (a_ * t).exp(); });
  }
  /// (-A)^(-alpha).
  Eigen::MatrixXcd inverse_power(double alpha) const {
    return apply([&](cplx mu) { return std::pow(-mu, -alpha); }, [&]() -> Eigen::MatrixXcd { return power(-alpha); });
  }
  /// ||F||_G for an operator F on this space.
  double norm(const Eigen::MatrixXcd& f) const { return linalg::norm2(upper_ * f * upper_inv_); }
  /// ||(-A)^alpha exp(A t)||_G.
  double smoothing_norm(double alpha, double t) const {
    if (!schur_)
      return linalg::norm2(left_ * (values_.unaryExpr([&](cplx mu) { return std::pow(-mu, alpha) * std::exp(mu * t); }))
                                       .asDiagonal() *
                           right_);
    return norm(smoothing(alpha, t));
  }
  const Eigen::MatrixXcd& upper() const { return upper_; }

 private:
  template <typename Scalar, typename Fallback>
  Eigen::MatrixXcd apply(Scalar&& f, Fallback&& fallback) const {
    if (schur_) return fallback();
    const Eigen::VectorXcd fd = values_.unaryExpr(f);
    // V f(D) V^{-1} = U^{-1} left f(D) right U
    return upper_inv_ * (left_ * fd.asDiagonal() * right_) * upper_;
  }
  Eigen::MatrixXcd power(double p) const {
    const Eigen::MatrixXcd neg = -a_;
    Eigen::MatrixPower<Eigen::MatrixXcd> mp(neg);
    Eigen::MatrixXcd out(neg.rows(), neg.cols());
    mp.compute(out, p);
    return out;
  }

  Eigen::MatrixXcd a_, upper_, upper_inv_, left_, right_;
  Eigen::VectorXcd values_;
  double spectral_abscissa_ = 0.0, numerical_abscissa_ = 0.0, cond_ = 1.0;
  bool schur_ = false;
};

/// Gram matrix of the L2 inner product in an operator's reduced coordinates.
inline Eigen::MatrixXcd reduced_gram(const ModeOperator& op) {
  const Eigen::VectorXd w = detail::stacked_weights(*op.grid, op.ncomp(), 4.0 * std::numbers::pi * std::numbers::pi * op.lz, false);
  return op.prolong.adjoint() * w.cast<cplx>().asDiagonal() * op.prolong;
}

struct ShiftInfo {
  cplx leader;  // rightmost eigenvalue of the assembled mode matrix
  double eta = 0.0;
};

inline ShiftInfo discrete_shift(const ModeOperator& op, double eta) {
  if (!(eta > 0.0)) throw InvalidArgument("eta must be > 0");
  const auto vals = linalg::eigvals(op.reduced);
  const auto order = linalg::order_by_real_desc(vals);
  return {vals(order.front()), eta};
}

inline Eigen::MatrixXcd shifted_operator(const ModeOperator& op, const ShiftInfo& s) {
  Eigen::MatrixXcd a = op.reduced;
  a.diagonal().array() -= cplx(s.leader.real() + s.eta, 0.0);
  return a;
}

struct SemigroupSample {
  double t = 0.0;
  double norm = 0.0;      // ||(-A_eta)^alpha exp(A_eta t)||
  double weighted = 0.0;  // t^alpha * norm
};

struct SemigroupReport {
  double alpha = 0.0;
  ShiftInfo shift;
  int nr = 0;
  double sup = 0.0;
  double t_at_sup = 0.0;
  double numerical_abscissa = 0.0;
  double eigenvector_condition = 1.0;
  bool schur_fallback = false;
  std::vector<SemigroupSample> table;
};

/// sup_t t^alpha ||(-A_eta)^alpha exp(A_eta t)|| in the quadrature-weighted
/// norm, with A_eta = A - (Re lambda + eta) and lambda the discrete leader.
inline SemigroupReport semigroup_smoothing_check(const ModeOperator& op, double alpha, double eta,
                                                 const std::vector<double>& t_grid) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw InvalidArgument("semigroup_smoothing_check: alpha must lie in [0, 1)");
  if (t_grid.empty()) throw InvalidArgument("semigroup_smoothing_check: empty t grid");
  for (double t : t_grid)
    if (!(t > 0.0)) throw InvalidArgument("semigroup_smoothing_check: times must be > 0");
  SemigroupReport rep;
  rep.alpha = alpha;
  rep.shift = discrete_shift(op, eta);
  rep.nr = op.grid->nr;
  const FunctionalCalculus fc(shifted_operator(op, rep.shift), reduced_gram(op));
  rep.numerical_abscissa = fc.numerical_abscissa();
  rep.eigenvector_condition = fc.eigenvector_condition();
  rep.schur_fallback = fc.uses_schur();
  for (double t : t_grid) {
    const double nrm = fc.smoothing_norm(alpha, t);
    const double wt = std::pow(t, alpha) * nrm;
    if (!std::isfinite(wt)) throw NumericalError("semigroup_smoothing_check: non-finite norm at t=" + std::to_string(t));
    rep.table.push_back({t, nrm, wt});
    if (wt > rep.sup) {
      rep.sup = wt;
      rep.t_at_sup = t;
    }
  }
  return rep;
}

struct InverseGradReport {
  double alpha = 0.0;
  ShiftInfo shift;
  int nr = 0;
  double norm = 0.0;  // ||(-A_eta)^(-alpha) grad||, L2(scalar) -> L2(vector)
};

/// Discrete (-A_eta)^(-alpha) composed with the gradient of scalar data on
/// one Fourier mode; the gradient is restricted to the operator's interior
/// coordinates.
inline InverseGradReport inverse_frac_grad_check(const ModeOperator& op, double alpha, double eta) {
  if (!(alpha > 0.5 && alpha < 1.0)) throw InvalidArgument("inverse_frac_grad_check: alpha must lie in (1/2, 1)");
  if (op.kind == OperatorKind::block)
    throw InvalidArgument("inverse_frac_grad_check: apply to a single block (dynamo or linns)");
  InverseGradReport rep;
  rep.alpha = alpha;
  rep.shift = discrete_shift(op, eta);
  rep.nr = op.grid->nr;
  const RadialGrid& g = *op.grid;
  const FunctionalCalculus fc(shifted_operator(op, rep.shift), reduced_gram(op));
  const auto elim = boundary_elimination(g, op.kind == OperatorKind::linns ? BcTag::dirichlet_velocity
                                                                          : BcTag::conducting_magnetic);
  const Eigen::MatrixXcd grad = modemat::gradient(g, op.mode.m, op.kz)(elim.interior_rows, Eigen::all);
  const Eigen::MatrixXcd k = fc.inverse_power(alpha) * grad;
  const Eigen::VectorXd ws = detail::stacked_weights(g, 1, 4.0 * std::numbers::pi * std::numbers::pi * op.lz, false);
  const Eigen::VectorXcd inv_sqrt_w = ws.cwiseSqrt().cwiseInverse().cast<cplx>();
  rep.norm = linalg::norm2(fc.upper() * k * inv_sqrt_w.asDiagonal());
  return rep;
}

/// Logarithmic grid of `count` times in [t0, t1].
inline std::vector<double> log_time_grid(double t0, double t1, int count) {
  if (!(t0 > 0.0 && t1 > t0) || count < 2) throw InvalidArgument("log_time_grid: need 0 < t0 < t1 and count >= 2");
  std::vector<double> t(count);
  for (int i = 0; i < count; ++i) t[i] = t0 * std::pow(t1 / t0, double(i) / (count - 1));
  return t;
}

}  // namespace mhdtc
