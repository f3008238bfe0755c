#pragma once

#include <algorithm>
#include <cmath>

#include "mhdtc/error.hpp"
#include "mhdtc/field.hpp"
#include "mhdtc/grid.hpp"

namespace mhdtc {

/// Swirl-plus-axial Couette profile u = (a1/r + a3 r) e_theta + (a2 log r + a4) e_z.
struct TCProfile {
  double a1 = 0.0, a2 = 0.0, a3 = 0.0, a4 = 0.0;
  double r1 = 1.0, r2 = 2.0;
  double beta1 = 0.0, beta2 = 0.0;

  double u_theta(double r) const { return a1 / r + a3 * r; }
  double u_z(double r) const { return a2 * std::log(r) + a4; }
  double du_theta(double r) const { return -a1 / (r * r) + a3; }
  double d2u_theta(double r) const { return 2.0 * a1 / (r * r * r); }
  double du_z(double r) const { return a2 / r; }
  double d2u_z(double r) const { return -a2 / (r * r); }
  // Angular velocity and its shear r dOmega/dr.
  double omega(double r) const { return a1 / (r * r) + a3; }
  double r_domega(double r) const { return -2.0 * a1 / (r * r); }

  bool is_zero() const { return a1 == 0.0 && a2 == 0.0 && a3 == 0.0 && a4 == 0.0; }
};

/// Matches the wall data: inner wall at rest, outer wall moving with (beta1, beta2).
inline TCProfile solve_tc_coefficients(double r1, double r2, double beta1, double beta2) {
  if (!(r1 > 0.0) || !(r1 < r2)) throw InvalidArgument("solve_tc_coefficients: need 0 < R1 < R2");
  if (beta1 == 0.0) throw InvalidArgument("solve_tc_coefficients: beta1 must be nonzero");
  if (beta2 == 0.0) throw InvalidArgument("solve_tc_coefficients: beta2 must be nonzero");
  TCProfile p;
  p.r1 = r1;
  p.r2 = r2;
  p.beta1 = beta1;
  p.beta2 = beta2;
  p.a3 = beta1 * r2 / (r2 * r2 - r1 * r1);
  p.a1 = -p.a3 * r1 * r1;
  p.a2 = beta2 / std::log(r2 / r1);
  p.a4 = -p.a2 * std::log(r1);
  return p;
}

/// Quiescent background on the same annulus (used for dissipativity checks).
inline TCProfile zero_profile(double r1, double r2) {
  TCProfile p;
  p.r1 = r1;
  p.r2 = r2;
  return p;
}

struct WallResiduals {
  double inner_theta, inner_z, outer_theta, outer_z;
  double max() const {
    return std::max({std::abs(inner_theta), std::abs(inner_z), std::abs(outer_theta), std::abs(outer_z)});
  }
};

inline WallResiduals wall_residuals(const TCProfile& p) {
  return {p.u_theta(p.r1), p.u_z(p.r1), p.u_theta(p.r2) - p.beta1, p.u_z(p.r2) - p.beta2};
}

/// The profile as a field supported on mode (0,0) only.
inline SpectralField evaluate_tc(const TCProfile& p, GridPtr grid, LayoutPtr layout) {
  SpectralField u(grid, layout, 3, BcTag::none);
  const int i0 = u.layout().find({0, 0});
  if (i0 < 0) throw InvalidArgument("evaluate_tc: layout lacks mode (0,0)");
  const auto& r = u.grid().nodes;
  for (Eigen::Index j = 0; j < r.size(); ++j) {
    u.radial(1, i0)(j) = p.u_theta(r(j));
    u.radial(2, i0)(j) = p.u_z(r(j));
  }
  return u;
}

enum class PressureForm {
  centripetal,  // d_r p = u_theta^2 / r, the full square
  printed       // a1^2/r^3 + a3^2 r, missing the 2 a1 a3 / r cross term
};

inline double pressure_gradient(const TCProfile& p, double r, PressureForm form) {
  if (form == PressureForm::printed) return p.a1 * p.a1 / (r * r * r) + p.a3 * p.a3 * r;
  const double ut = p.u_theta(r);
  return ut * ut / r;
}

struct SteadyAudit {
  double residual = 0.0;             // ||R||_{L2} / ||u||_{L2}, analytic derivatives at nodes
  double collocation_residual = 0.0; // same with the viscous term from D1/D2 (discretization diagnostic)
};

/// Relative L^2 size of (u.grad)u + grad p - nu Lap u for the profile.
inline SteadyAudit ns_residual(const TCProfile& p, double nu, const RadialGrid& g,
                               PressureForm form = PressureForm::centripetal) {
  if (!(nu > 0.0)) throw InvalidArgument("ns_residual: nu must be > 0");
  const Eigen::Index n = g.size();
  Eigen::VectorXd ut(n), uz(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    ut(j) = p.u_theta(g.nodes(j));
    uz(j) = p.u_z(g.nodes(j));
  }
  const Eigen::VectorXd dut_c = g.d1 * ut, d2ut_c = g.d2 * ut;
  const Eigen::VectorXd duz_c = g.d1 * uz, d2uz_c = g.d2 * uz;

  double res2 = 0.0, col2 = 0.0, norm2 = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double r = g.nodes(j);
    // Radial row: advection gives -u_theta^2/r, balanced by the pressure.
    const double rr = -ut(j) * ut(j) / r + pressure_gradient(p, r, form);
    const double lap_t = p.d2u_theta(r) + p.du_theta(r) / r - ut(j) / (r * r);
    const double lap_z = p.d2u_z(r) + p.du_z(r) / r;
    const double lap_t_c = d2ut_c(j) + dut_c(j) / r - ut(j) / (r * r);
    const double lap_z_c = d2uz_c(j) + duz_c(j) / r;
    res2 += g.weights(j) * (rr * rr + nu * nu * (lap_t * lap_t + lap_z * lap_z));
    col2 += g.weights(j) * (rr * rr + nu * nu * (lap_t_c * lap_t_c + lap_z_c * lap_z_c));
    norm2 += g.weights(j) * (ut(j) * ut(j) + uz(j) * uz(j));
  }
  if (norm2 == 0.0) throw InvalidArgument("ns_residual: profile is identically zero");
  return {std::sqrt(res2 / norm2), std::sqrt(col2 / norm2)};
}

/// max over nodes of |u| + |d_r u| + |u|/r.
inline double tc_w1inf_norm(const TCProfile& p, const RadialGrid& g) {
  double best = 0.0;
  for (Eigen::Index j = 0; j < g.size(); ++j) {
    const double r = g.nodes(j);
    const double mag = std::hypot(p.u_theta(r), p.u_z(r));
    const double dmag = std::hypot(p.du_theta(r), p.du_z(r));
    best = std::max(best, mag + dmag + mag / r);
  }
  return best;
}

/// ||u_TC||_{L^p(Omega)} on the grid with period 2 pi Lz in z.
inline double tc_lp_norm(const TCProfile& p, const RadialGrid& g, double lp, double lz = 1.0) {
  if (!(lp >= 1.0)) throw InvalidArgument("tc_lp_norm: p must be >= 1");
  const double area = 4.0 * std::numbers::pi * std::numbers::pi * lz;
  if (std::isinf(lp)) {
    double m = 0.0;
    for (Eigen::Index j = 0; j < g.size(); ++j) m = std::max(m, std::hypot(p.u_theta(g.nodes(j)), p.u_z(g.nodes(j))));
    return m;
  }
  double s = 0.0;
  for (Eigen::Index j = 0; j < g.size(); ++j)
    s += g.weights(j) * std::pow(std::hypot(p.u_theta(g.nodes(j)), p.u_z(g.nodes(j))), lp);
  return std::pow(area * s, 1.0 / lp);
}

}  // namespace mhdtc
