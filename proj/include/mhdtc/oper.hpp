#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mhdtc/error.hpp"
#include "mhdtc/field.hpp"
#include "mhdtc/grid.hpp"
#include "mhdtc/steady.hpp"

namespace mhdtc {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;

// --- dense per-mode calculus --------------------------------------------
//
// Vectors are stacked [f_r; f_theta; f_z], each Nr+1 node values.  These
// matrices mirror the field-level operators in field.hpp term by term.

namespace modemat {

inline MatrixXcd diag(const Eigen::VectorXd& v) { return v.cast<cplx>().asDiagonal(); }

inline MatrixXcd divergence(const RadialGrid& g, int m, double kz) {
  const int n = g.size();
  const Eigen::VectorXd rinv = g.nodes.cwiseInverse();
  MatrixXcd d(n, 3 * n);
  d.leftCols(n) = diag(rinv) * g.d1.cast<cplx>() * diag(g.nodes);
  d.middleCols(n, n) = I_unit * double(m) * diag(rinv);
  d.rightCols(n) = I_unit * kz * MatrixXcd::Identity(n, n);
  return d;
}

inline MatrixXcd gradient(const RadialGrid& g, int m, double kz) {
  const int n = g.size();
  MatrixXcd gr(3 * n, n);
  gr.topRows(n) = g.d1.cast<cplx>();
  gr.middleRows(n, n) = I_unit * double(m) * diag(g.nodes.cwiseInverse());
  gr.bottomRows(n) = I_unit * kz * MatrixXcd::Identity(n, n);
  return gr;
}

inline MatrixXcd curl(const RadialGrid& g, int m, double kz) {
  const int n = g.size();
  const MatrixXcd rinv = diag(g.nodes.cwiseInverse());
  const MatrixXcd id = MatrixXcd::Identity(n, n);
  MatrixXcd c = MatrixXcd::Zero(3 * n, 3 * n);
  c.block(0, n, n, n) = -I_unit * kz * id;
  c.block(0, 2 * n, n, n) = I_unit * double(m) * rinv;
  c.block(n, 0, n, n) = I_unit * kz * id;
  c.block(n, 2 * n, n, n) = -g.d1.cast<cplx>();
  c.block(2 * n, 0, n, n) = -I_unit * double(m) * rinv;
  c.block(2 * n, n, n, n) = rinv * g.d1.cast<cplx>() * diag(g.nodes);
  return c;
}

inline MatrixXcd scalar_laplacian(const RadialGrid& g, int m, double kz) {
  const Eigen::VectorXd rinv = g.nodes.cwiseInverse();
  MatrixXcd l = g.d2.cast<cplx>() + diag(rinv) * g.d1.cast<cplx>();
  l.diagonal().array() -= (double(m) * m * rinv.array().square() + kz * kz).cast<cplx>();
  return l;
}

inline MatrixXcd vector_laplacian(const RadialGrid& g, int m, double kz) {
  const int n = g.size();
  const MatrixXcd ls = scalar_laplacian(g, m, kz);
  const MatrixXcd rinv2 = diag(g.nodes.cwiseInverse().cwiseAbs2());
  MatrixXcd l = MatrixXcd::Zero(3 * n, 3 * n);
  l.block(0, 0, n, n) = ls - rinv2;
  l.block(0, n, n, n) = -2.0 * I_unit * double(m) * rinv2;
  l.block(n, 0, n, n) = 2.0 * I_unit * double(m) * rinv2;
  l.block(n, n, n, n) = ls - rinv2;
  l.block(2 * n, 2 * n, n, n) = ls;
  return l;
}

/// Two wall rows (r = R2, r = R1) of the boundary operator for component c.
inline MatrixXcd boundary_rows(const RadialGrid& g, BcTag bc, int c) {
  const int n = g.size();
  MatrixXcd rows = MatrixXcd::Zero(2, n);
  const int walls[2] = {g.first(), g.last()};
  for (int w = 0; w < 2; ++w) {
    const int b = walls[w];
    if (bc == BcTag::dirichlet_velocity || (bc == BcTag::conducting_magnetic && c == 0)) {
      rows(w, b) = 1.0;
    } else if (bc == BcTag::conducting_magnetic && c == 1) {
      rows.row(w) = (g.d1.row(b).array() * g.nodes.transpose().array()).cast<cplx>();  // d_r(r B_theta)
    } else if (bc == BcTag::conducting_magnetic && c == 2) {
      rows.row(w) = g.d1.row(b).cast<cplx>();  // d_r B_z
    } else {
      throw InvalidArgument("boundary_rows: no boundary operator for tag 'none'");
    }
  }
  return rows;
}

}  // namespace modemat

/// Elimination of the wall values through the boundary conditions: every
/// vector satisfying them is prolong * (interior values).
struct BoundaryElimination {
  MatrixXcd prolong;               // 3n x 3(n-2)
  std::vector<int> interior_rows;  // indices into the stacked 3n vector
  std::vector<int> bc_rows;
};

inline BoundaryElimination boundary_elimination(const RadialGrid& g, BcTag bc) {
  const int n = g.size();
  const int ni = n - 2;
  BoundaryElimination e;
  e.prolong = MatrixXcd::Zero(3 * n, 3 * ni);
  std::vector<int> inner(ni), walls = {g.first(), g.last()};
  for (int j = 0; j < ni; ++j) inner[j] = j + 1;
  for (int c = 0; c < 3; ++c) {
    const MatrixXcd rows = modemat::boundary_rows(g, bc, c);
    const MatrixXcd mb = rows(Eigen::all, walls);
    const MatrixXcd mi = rows(Eigen::all, inner);
    const MatrixXcd ext = -mb.fullPivLu().solve(mi);  // wall values from interior values
    for (int j = 0; j < ni; ++j) e.prolong(c * n + inner[j], c * ni + j) = 1.0;
    for (int w = 0; w < 2; ++w) e.prolong.block(c * n + walls[w], c * ni, 1, ni) = ext.row(w);
    for (int j : inner) e.interior_rows.push_back(c * n + j);
    for (int w : walls) e.bc_rows.push_back(c * n + w);
  }
  return e;
}

// --- Leray projection ----------------------------------------------------

/// Discrete Leray projector of one mode: f - grad(phi), with
/// Lap phi = div f inside and d_r phi = f_r on both walls.  The result is
/// divergence-free on interior nodes and has zero wall-normal component.
class LerayProjector {
 public:
  LerayProjector(const RadialGrid& g, int m, double kz) : n_(g.size()), trivial_radial_(m == 0 && kz == 0.0) {
    if (trivial_radial_) return;  // (0,0): the only solenoidal radial field with zero flux is zero
    grad_ = modemat::gradient(g, m, kz);
    rhs_ = modemat::divergence(g, m, kz);
    poisson_ = rhs_ * grad_;
    for (int b : {g.first(), g.last()}) {
      poisson_.row(b) = g.d1.row(b).cast<cplx>();
      rhs_.row(b).setZero();
      rhs_(b, b) = 1.0;
    }
    lu_.compute(poisson_);
    if (!std::isfinite(lu_.rcond()) || lu_.rcond() < 1e-15)
      throw NumericalError("LerayProjector: singular pressure Poisson problem for m=" + std::to_string(m));
  }

  VectorXcd apply(const VectorXcd& f) const {
    if (f.size() != 3 * n_) throw InvalidArgument("LerayProjector::apply: length must be 3(Nr+1)");
    VectorXcd out = f;
    if (trivial_radial_) {
      out.head(n_).setZero();
      return out;
    }
    const VectorXcd rhs = rhs_ * f;
    VectorXcd phi = lu_.solve(rhs);
    phi += lu_.solve(rhs - poisson_ * phi);  // one refinement pass
    out -= grad_ * phi;
    return out;
  }

  MatrixXcd matrix() const {
    MatrixXcd p = MatrixXcd::Identity(3 * n_, 3 * n_);
    if (trivial_radial_) {
      p.topLeftCorner(n_, n_).setZero();
      return p;
    }
    p -= grad_ * lu_.solve(rhs_);
    return p;
  }

 private:
  int n_;
  bool trivial_radial_;
  MatrixXcd grad_, rhs_, poisson_;
  Eigen::PartialPivLU<MatrixXcd> lu_;
};

inline SpectralField leray_project(const SpectralField& f) {
  detail::require_ncomp(f, 3, "leray_project");
  SpectralField out = SpectralField::zeros_like(f, 3, f.bc());
  for (int i = 0; i < f.nmodes(); ++i) {
    const VectorXcd x = f.mode_vector(i);
    if (x.isZero(0.0)) continue;
    LerayProjector p(f.grid(), f.layout().mode(i).m, f.layout().kz(i));
    out.set_mode_vector(i, p.apply(x));
  }
  return out;
}

// --- linearised operator blocks -----------------------------------------

enum class OperatorKind { dynamo, linns, block };

inline const char* to_string(OperatorKind k) {
  switch (k) {
    case OperatorKind::dynamo: return "dynamo";
    case OperatorKind::linns: return "linns";
    default: return "block";
  }
}

/// One Fourier mode of A1 (projected linearised Navier-Stokes), A2
/// (kinematic dynamo) or their direct sum.
///
/// `matrix` is the collocation matrix with wall rows replaced by boundary
/// conditions; `reduced` is the same operator after eliminating the wall
/// values, acting on interior node values, and `prolong` maps those back.
struct ModeOperator {
  ModeIndex mode;
  double kz = 0.0;
  double lz = 1.0;
  OperatorKind kind = OperatorKind::dynamo;
  double nu = 0.0;
  double eps = 0.0;
  TCProfile profile;
  GridPtr grid;
  MatrixXcd matrix;
  std::vector<int> bc_rows;
  MatrixXcd reduced;
  MatrixXcd prolong;

  int ncomp() const { return kind == OperatorKind::block ? 6 : 3; }
};

namespace detail {

struct ProfileSamples {
  Eigen::VectorXd omega, r_domega, u_theta_over_r_plus_du, du_z, sigma_m, sigma_k;
};

inline ProfileSamples sample_profile(const TCProfile& p, const RadialGrid& g) {
  const int n = g.size();
  ProfileSamples s;
  s.omega.resize(n);
  s.r_domega.resize(n);
  s.u_theta_over_r_plus_du.resize(n);
  s.du_z.resize(n);
  s.sigma_m.resize(n);
  s.sigma_k.resize(n);
  for (int j = 0; j < n; ++j) {
    const double r = g.nodes(j);
    s.omega(j) = p.omega(r);
    s.r_domega(j) = p.r_domega(r);
    s.u_theta_over_r_plus_du(j) = p.omega(r) + p.du_theta(r);
    s.du_z(j) = p.du_z(r);
    s.sigma_m(j) = p.omega(r);
    s.sigma_k(j) = p.u_z(r);
  }
  return s;
}

// -i (m Omega + kz U) on every component.
inline Eigen::VectorXcd advection_symbol(const ProfileSamples& s, int m, double kz) {
  return (-I_unit) * (double(m) * s.sigma_m + kz * s.sigma_k).cast<cplx>();
}

}  // namespace detail

/// Advection and stretching part of A2, i.e. curl(u_TC x B) per mode.
inline MatrixXcd dynamo_transport_matrix(const TCProfile& p, const RadialGrid& g, int m, double kz) {
  const int n = g.size();
  const auto s = detail::sample_profile(p, g);
  const VectorXcd adv = detail::advection_symbol(s, m, kz);
  MatrixXcd a = MatrixXcd::Zero(3 * n, 3 * n);
  for (int c = 0; c < 3; ++c) a.block(c * n, c * n, n, n).diagonal() = adv;
  a.block(n, 0, n, n).diagonal() += s.r_domega.cast<cplx>();
  a.block(2 * n, 0, n, n).diagonal() += s.du_z.cast<cplx>();
  return a;
}

/// -(u_TC.grad)v - (v.grad)u_TC per mode, before projection.
inline MatrixXcd linns_transport_matrix(const TCProfile& p, const RadialGrid& g, int m, double kz) {
  const int n = g.size();
  const auto s = detail::sample_profile(p, g);
  const VectorXcd adv = detail::advection_symbol(s, m, kz);
  MatrixXcd a = MatrixXcd::Zero(3 * n, 3 * n);
  for (int c = 0; c < 3; ++c) a.block(c * n, c * n, n, n).diagonal() = adv;
  a.block(0, n, n, n).diagonal() += (2.0 * s.omega).cast<cplx>();
  a.block(n, 0, n, n).diagonal() -= s.u_theta_over_r_plus_du.cast<cplx>();
  a.block(2 * n, 0, n, n).diagonal() -= s.du_z.cast<cplx>();
  return a;
}

namespace detail {

inline void finish_operator(ModeOperator& op, const MatrixXcd& pde, BcTag bc) {
  const RadialGrid& g = *op.grid;
  const int n = g.size();
  const auto elim = boundary_elimination(g, bc);
  op.matrix = pde;
  for (int c = 0; c < 3; ++c) {
    const MatrixXcd rows = modemat::boundary_rows(g, bc, c);
    const int walls[2] = {g.first(), g.last()};
    for (int w = 0; w < 2; ++w) {
      op.matrix.row(c * n + walls[w]).setZero();
      op.matrix.block(c * n + walls[w], c * n, 1, n) = rows.row(w);
    }
  }
  op.bc_rows = elim.bc_rows;
  op.reduced = pde(elim.interior_rows, Eigen::all) * elim.prolong;
  op.prolong = elim.prolong;
}

}  // namespace detail

inline ModeOperator assemble_dynamo_block(ModeIndex mode, const TCProfile& profile, double eps, GridPtr grid,
                                          double lz = 1.0) {
  if (!(eps > 0.0)) throw InvalidArgument("assemble_dynamo_block: eps must be > 0");
  ModeOperator op;
  op.mode = mode;
  op.kz = mode.k / lz;
  op.lz = lz;
  op.kind = OperatorKind::dynamo;
  op.eps = eps;
  op.profile = profile;
  op.grid = std::move(grid);
  const RadialGrid& g = *op.grid;
  const MatrixXcd pde =
      eps * modemat::vector_laplacian(g, mode.m, op.kz) + dynamo_transport_matrix(profile, g, mode.m, op.kz);
  detail::finish_operator(op, pde, BcTag::conducting_magnetic);
  return op;
}

inline ModeOperator assemble_linns_block(ModeIndex mode, const TCProfile& profile, double nu, GridPtr grid,
                                         double lz = 1.0) {
  if (!(nu > 0.0)) throw InvalidArgument("assemble_linns_block: nu must be > 0");
  ModeOperator op;
  op.mode = mode;
  op.kz = mode.k / lz;
  op.lz = lz;
  op.kind = OperatorKind::linns;
  op.nu = nu;
  op.profile = profile;
  op.grid = std::move(grid);
  const RadialGrid& g = *op.grid;
  const MatrixXcd l =
      nu * modemat::vector_laplacian(g, mode.m, op.kz) + linns_transport_matrix(profile, g, mode.m, op.kz);
  const LerayProjector proj(g, mode.m, op.kz);
  detail::finish_operator(op, proj.matrix() * l, BcTag::dirichlet_velocity);
  return op;
}

/// A1 (+) A2 on stacked (v, B); v occupies the first half.
inline ModeOperator assemble_block(ModeIndex mode, const TCProfile& profile, double nu, double eps, GridPtr grid,
                                   double lz = 1.0) {
  const ModeOperator a1 = assemble_linns_block(mode, profile, nu, grid, lz);
  const ModeOperator a2 = assemble_dynamo_block(mode, profile, eps, grid, lz);
  ModeOperator op;
  op.mode = mode;
  op.kz = a1.kz;
  op.lz = lz;
  op.kind = OperatorKind::block;
  op.nu = nu;
  op.eps = eps;
  op.profile = profile;
  op.grid = std::move(grid);
  const auto blockdiag = [](const MatrixXcd& a, const MatrixXcd& b) {
    MatrixXcd m = MatrixXcd::Zero(a.rows() + b.rows(), a.cols() + b.cols());
    m.topLeftCorner(a.rows(), a.cols()) = a;
    m.bottomRightCorner(b.rows(), b.cols()) = b;
    return m;
  };
  op.matrix = blockdiag(a1.matrix, a2.matrix);
  op.reduced = blockdiag(a1.reduced, a2.reduced);
  op.prolong = blockdiag(a1.prolong, a2.prolong);
  op.bc_rows = a1.bc_rows;
  const int shift = static_cast<int>(a1.matrix.rows());
  for (int r : a2.bc_rows) op.bc_rows.push_back(r + shift);
  return op;
}

// --- nonlinear terms ----------------------------------------------------

/// div(a (x) b) with T_ij = a_i b_j, including the cylindrical curvature
/// terms; products are formed on the dealiased physical grid.
inline SpectralField tensor_divergence(const SpectralField& a, const SpectralField& b) {
  detail::require_ncomp(a, 3, "tensor_divergence");
  detail::require_ncomp(b, 3, "tensor_divergence");
  const PhysicalField pa = to_physical(a);
  const PhysicalField pb = to_physical(b);
  PhysicalField prod;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) prod.comps.push_back(pa.comps[i].cwiseProduct(pb.comps[j]));
  const SpectralField t = from_physical(prod, a);
  const auto T = [&](int i, int j) { return t.component(3 * i + j); };

  const auto& g = a.grid();
  const Eigen::VectorXcd r_vec = g.nodes.cast<cplx>();
  const auto r = r_vec.asDiagonal();
  const Eigen::VectorXcd rinv_vec = g.nodes.cwiseInverse().cast<cplx>();
  const auto rinv = rinv_vec.asDiagonal();
  const Eigen::VectorXcd im_vec = detail::i_m(a.layout()), ikz_vec = detail::i_kz(a.layout());
  const auto im = im_vec.asDiagonal();
  const auto ikz = ikz_vec.asDiagonal();
  const Eigen::MatrixXcd d1 = g.d1.cast<cplx>();

  SpectralField out = SpectralField::zeros_like(a, 3);
  {
    Eigen::MatrixXcd rt = r * T(0, 0);
    out.component(0) = rinv * (d1 * rt + T(1, 0) * im - T(1, 1));
    out.component(0) += T(2, 0) * ikz;
  }
  {
    Eigen::MatrixXcd tt = T(0, 1) + T(1, 0);
    out.component(1) = d1 * T(0, 1) + rinv * (tt + T(1, 1) * im);
    out.component(1) += T(2, 1) * ikz;
  }
  {
    Eigen::MatrixXcd rt = r * T(0, 2);
    out.component(2) = rinv * (d1 * rt + T(1, 2) * im);
    out.component(2) += T(2, 2) * ikz;
  }
  return out;
}

/// Pointwise cross product a x b on the dealiased grid.
inline SpectralField cross_product(const SpectralField& a, const SpectralField& b) {
  const PhysicalField pa = to_physical(a);
  const PhysicalField pb = to_physical(b);
  PhysicalField c;
  c.comps.push_back(pa.comps[1].cwiseProduct(pb.comps[2]) - pa.comps[2].cwiseProduct(pb.comps[1]));
  c.comps.push_back(pa.comps[2].cwiseProduct(pb.comps[0]) - pa.comps[0].cwiseProduct(pb.comps[2]));
  c.comps.push_back(pa.comps[0].cwiseProduct(pb.comps[1]) - pa.comps[1].cwiseProduct(pb.comps[0]));
  return from_physical(c, a);
}

/// N(a, a) = P div(a (x) a)
inline SpectralField apply_nonlinear_N(const SpectralField& a) { return leray_project(tensor_divergence(a, a)); }

/// M(v, B) = curl(v x B)
inline SpectralField apply_nonlinear_M(const SpectralField& v, const SpectralField& b) {
  return curl(cross_product(v, b));
}

struct HodgePair {
  double lhs = 0.0;  // <Lap B, B>
  double rhs = 0.0;  // -||curl B||^2
};

inline HodgePair hodge_dissipativity(const SpectralField& b) {
  return {inner(b, vector_laplacian(b)).real(), -std::pow(l2_norm(curl(b)), 2)};
}

/// Applies a per-mode operator family to a field mode by mode.
template <typename MatrixFor>
SpectralField apply_per_mode(const SpectralField& f, MatrixFor&& matrix_for) {
  SpectralField out = SpectralField::zeros_like(f, f.ncomp(), f.bc());
  for (int i = 0; i < f.nmodes(); ++i) {
    const VectorXcd x = f.mode_vector(i);
    if (x.isZero(0.0)) continue;
    out.set_mode_vector(i, matrix_for(f.layout().mode(i), f.layout().kz(i)) * x);
  }
  return out;
}

}  // namespace mhdtc
