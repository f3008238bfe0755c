#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mhdtc/error.hpp"
#include "mhdtc/grid.hpp"
#include "mhdtc/layout.hpp"

namespace mhdtc {

using cplx = std::complex<double>;
inline constexpr cplx I_unit{0.0, 1.0};

enum class BcTag { none, dirichlet_velocity, conducting_magnetic };

inline const char* to_string(BcTag t) {
  switch (t) {
    case BcTag::dirichlet_velocity: return "dirichlet_velocity";
    case BcTag::conducting_magnetic: return "conducting_magnetic";
    default: return "none";
  }
}

/// Complex multi-component field stored as radial node values per Fourier
/// mode.  Storage is one column per (component, mode), component-major, so
/// a component block is an (Nr+1) x nmodes matrix.  Components beyond three
/// are used for tensors (index digits in base 3, r=0, theta=1, z=2).
class SpectralField {
 public:
  SpectralField(GridPtr grid, LayoutPtr layout, int ncomp = 3, BcTag bc = BcTag::none)
      : grid_(std::move(grid)), layout_(std::move(layout)), ncomp_(ncomp), bc_(bc) {
    if (!grid_ || !layout_) throw InvalidArgument("SpectralField: grid and layout are required");
    if (ncomp_ < 1) throw InvalidArgument("SpectralField: ncomp must be >= 1");
    data_ = Eigen::MatrixXcd::Zero(grid_->size(), static_cast<Eigen::Index>(ncomp_) * layout_->size());
  }

  static SpectralField zeros_like(const SpectralField& f, int ncomp, BcTag bc = BcTag::none) {
    return SpectralField(f.grid_, f.layout_, ncomp, bc);
  }

  const RadialGrid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  const ModeLayout& layout() const { return *layout_; }
  const LayoutPtr& layout_ptr() const { return layout_; }
  int ncomp() const { return ncomp_; }
  int nmodes() const { return layout_->size(); }
  int nnodes() const { return grid_->size(); }
  BcTag bc() const { return bc_; }
  void set_bc(BcTag bc) { bc_ = bc; }

  Eigen::MatrixXcd& data() { return data_; }
  const Eigen::MatrixXcd& data() const { return data_; }

  auto component(int c) { return data_.middleCols(static_cast<Eigen::Index>(c) * nmodes(), nmodes()); }
  auto component(int c) const { return data_.middleCols(static_cast<Eigen::Index>(c) * nmodes(), nmodes()); }
  auto radial(int c, int mode) { return data_.col(static_cast<Eigen::Index>(c) * nmodes() + mode); }
  auto radial(int c, int mode) const { return data_.col(static_cast<Eigen::Index>(c) * nmodes() + mode); }

  /// Stacked [c0; c1; ...] node values of one mode.
  Eigen::VectorXcd mode_vector(int mode) const {
    Eigen::VectorXcd v(static_cast<Eigen::Index>(ncomp_) * nnodes());
    for (int c = 0; c < ncomp_; ++c) v.segment(c * nnodes(), nnodes()) = radial(c, mode);
    return v;
  }
  void set_mode_vector(int mode, const Eigen::VectorXcd& v) {
    if (v.size() != static_cast<Eigen::Index>(ncomp_) * nnodes())
      throw InvalidArgument("set_mode_vector: length must be ncomp*(Nr+1)");
    for (int c = 0; c < ncomp_; ++c) radial(c, mode) = v.segment(c * nnodes(), nnodes());
  }

  bool same_shape(const SpectralField& o) const {
    return ncomp_ == o.ncomp_ && (grid_ == o.grid_ || (grid_->nr == o.grid_->nr && grid_->r1 == o.grid_->r1 &&
                                                        grid_->r2 == o.grid_->r2)) &&
           (layout_ == o.layout_ || layout_->same_as(*o.layout_));
  }

  bool is_zero() const { return data_.isZero(0.0); }
  bool all_finite() const { return data_.allFinite(); }

  /// Overwrites non-canonical modes with conjugates of their partners and
  /// makes the self-conjugate (0,0) mode real.
  void enforce_reality() {
    const auto& l = *layout_;
    for (int c = 0; c < ncomp_; ++c) {
      for (int i = 0; i < l.size(); ++i) {
        const int j = l.conj_index(i);
        if (i == j) {
          radial(c, i) = radial(c, i).real().cast<cplx>();
        } else if (l.is_canonical(i)) {
          radial(c, j) = radial(c, i).conjugate();
        }
      }
    }
  }

  /// max |f(-m,-k) - conj f(m,k)|, zero for a real field.
  double reality_defect() const {
    double d = 0.0;
    for (int c = 0; c < ncomp_; ++c)
      for (int i = 0; i < nmodes(); ++i)
        d = std::max(d, (radial(c, i) - radial(c, layout_->conj_index(i)).conjugate()).cwiseAbs().maxCoeff());
    return d;
  }

  SpectralField& operator+=(const SpectralField& o) {
    require_same(o);
    data_ += o.data_;
    return *this;
  }
  SpectralField& operator-=(const SpectralField& o) {
    require_same(o);
    data_ -= o.data_;
    return *this;
  }
  SpectralField& operator*=(cplx s) {
    data_ *= s;
    return *this;
  }
  friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
  friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
  friend SpectralField operator*(cplx s, SpectralField a) { return a *= s; }
  friend SpectralField operator*(double s, SpectralField a) { return a *= cplx(s); }

 private:
  void require_same(const SpectralField& o) const {
    if (!same_shape(o)) throw InvalidArgument("SpectralField: shape mismatch");
  }

  GridPtr grid_;
  LayoutPtr layout_;
  int ncomp_;
  BcTag bc_;
  Eigen::MatrixXcd data_;
};

using ScalarField = SpectralField;  // ncomp == 1 by convention

namespace detail {

inline void require_ncomp(const SpectralField& f, int n, const char* op) {
  if (f.ncomp() != n) throw InvalidArgument(std::string(op) + ": expected " + std::to_string(n) + " components");
}

// Row vectors i*m and i*kz per mode, for column scaling.
inline Eigen::VectorXcd i_m(const ModeLayout& l) {
  Eigen::VectorXcd v(l.size());
  for (int i = 0; i < l.size(); ++i) v(i) = I_unit * double(l.mode(i).m);
  return v;
}
inline Eigen::VectorXcd i_kz(const ModeLayout& l) {
  Eigen::VectorXcd v(l.size());
  for (int i = 0; i < l.size(); ++i) v(i) = I_unit * l.kz(i);
  return v;
}

inline Eigen::MatrixXcd d1_times(const RadialGrid& g, const Eigen::MatrixXcd& x) {
  return g.d1.cast<cplx>() * x;
}

}  // namespace detail

// --- cylindrical vector calculus, mode by mode -----------------------------

/// (1/r) d_r(r f_r) + (i m / r) f_theta + i kz f_z
inline ScalarField divergence(const SpectralField& f) {
  detail::require_ncomp(f, 3, "divergence");
  const auto& g = f.grid();
  const Eigen::VectorXd& r = g.nodes;
  const Eigen::VectorXd rinv = r.cwiseInverse();
  ScalarField out = SpectralField::zeros_like(f, 1);
  Eigen::MatrixXcd rfr = r.cast<cplx>().asDiagonal() * f.component(0);
  out.component(0) = rinv.cast<cplx>().asDiagonal() *
                     (detail::d1_times(g, rfr) + f.component(1) * detail::i_m(f.layout()).asDiagonal());
  out.component(0) += f.component(2) * detail::i_kz(f.layout()).asDiagonal();
  return out;
}

/// (d_r phi, (i m / r) phi, i kz phi)
inline SpectralField gradient(const ScalarField& phi) {
  detail::require_ncomp(phi, 1, "gradient");
  const auto& g = phi.grid();
  const Eigen::VectorXd rinv = g.nodes.cwiseInverse();
  SpectralField out = SpectralField::zeros_like(phi, 3);
  out.component(0) = detail::d1_times(g, phi.component(0));
  out.component(1) = rinv.cast<cplx>().asDiagonal() * phi.component(0) * detail::i_m(phi.layout()).asDiagonal();
  out.component(2) = phi.component(0) * detail::i_kz(phi.layout()).asDiagonal();
  return out;
}

/// ((i m / r) f_z - i kz f_theta,  i kz f_r - d_r f_z,  (1/r) d_r(r f_theta) - (i m / r) f_r)
inline SpectralField curl(const SpectralField& f) {
  detail::require_ncomp(f, 3, "curl");
  const auto& g = f.grid();
  const Eigen::VectorXd& r = g.nodes;
  const Eigen::VectorXcd rinv_vec = r.cwiseInverse().cast<cplx>();
  const auto rinv = rinv_vec.asDiagonal();
  const Eigen::VectorXcd im_vec = detail::i_m(f.layout()), ikz_vec = detail::i_kz(f.layout());
  const auto im = im_vec.asDiagonal();
  const auto ikz = ikz_vec.asDiagonal();
  SpectralField out = SpectralField::zeros_like(f, 3);
  out.component(0) = rinv * f.component(2) * im;
  out.component(0) -= f.component(1) * ikz;
  out.component(1) = f.component(0) * ikz;
  out.component(1) -= detail::d1_times(g, f.component(2));
  Eigen::MatrixXcd rft = r.cast<cplx>().asDiagonal() * f.component(1);
  out.component(2) = rinv * (detail::d1_times(g, rft) - f.component(0) * im);
  return out;
}

/// d_rr + (1/r) d_r - m^2/r^2 - kz^2, per component.
inline SpectralField scalar_laplacian(const SpectralField& f) {
  const auto& g = f.grid();
  const Eigen::VectorXd rinv = g.nodes.cwiseInverse();
  const Eigen::VectorXd rinv2 = rinv.cwiseAbs2();
  SpectralField out = SpectralField::zeros_like(f, f.ncomp());
  for (int c = 0; c < f.ncomp(); ++c) {
    out.component(c) = g.d2.cast<cplx>() * f.component(c);
    out.component(c) += rinv.cast<cplx>().asDiagonal() * detail::d1_times(g, f.component(c));
    for (int i = 0; i < f.nmodes(); ++i) {
      const double m = f.layout().mode(i).m;
      const double kz = f.layout().kz(i);
      out.radial(c, i).array() -= (m * m * rinv2.array() + kz * kz).cast<cplx>() * f.radial(c, i).array();
    }
  }
  return out;
}

/// Cylindrical vector Laplacian with the r/theta curvature couplings.
inline SpectralField vector_laplacian(const SpectralField& f) {
  detail::require_ncomp(f, 3, "vector_laplacian");
  SpectralField out = scalar_laplacian(f);
  const Eigen::VectorXd rinv2 = f.grid().nodes.cwiseInverse().cwiseAbs2();
  for (int i = 0; i < f.nmodes(); ++i) {
    const cplx two_im = 2.0 * I_unit * double(f.layout().mode(i).m);
    const Eigen::VectorXcd fr = f.radial(0, i);
    const Eigen::VectorXcd ft = f.radial(1, i);
    out.radial(0, i).array() -= rinv2.array().cast<cplx>() * (fr.array() + two_im * ft.array());
    out.radial(1, i).array() -= rinv2.array().cast<cplx>() * (ft.array() - two_im * fr.array());
  }
  return out;
}

/// Covariant derivative of a rank-q tensor field (3^q components) giving a
/// rank-(q+1) field whose new leading slot is the derivative direction.
inline SpectralField covariant_gradient(const SpectralField& t) {
  int rank = 0;
  for (int n = t.ncomp(); n > 1; n /= 3) {
    if (n % 3 != 0) throw InvalidArgument("covariant_gradient: ncomp must be a power of 3");
    ++rank;
  }
  const int nc = t.ncomp();
  const auto& g = t.grid();
  const Eigen::VectorXcd rinv_vec = g.nodes.cwiseInverse().cast<cplx>();
  const auto rinv = rinv_vec.asDiagonal();
  const Eigen::VectorXcd im_vec = detail::i_m(t.layout()), ikz_vec = detail::i_kz(t.layout());
  const auto im = im_vec.asDiagonal();
  const auto ikz = ikz_vec.asDiagonal();
  SpectralField out = SpectralField::zeros_like(t, 3 * nc);
  for (int idx = 0; idx < nc; ++idx) {
    out.component(idx) = detail::d1_times(g, t.component(idx));
    out.component(2 * nc + idx) = t.component(idx) * ikz;
    Eigen::MatrixXcd th = t.component(idx) * im;
    // Frame rotation: d_theta e_r = e_theta, d_theta e_theta = -e_r.
    for (int s = 0, place = nc / 3; s < rank; ++s, place /= 3) {
      const int digit = (idx / place) % 3;
      if (digit == 1) th += t.component(idx - place);      // slot theta picks up T_{..r..}
      else if (digit == 0) th -= t.component(idx + place);  // slot r picks up -T_{..theta..}
    }
    out.component(nc + idx) = rinv * th;
  }
  return out;
}

// --- physical space and norms ----------------------------------------------

/// Physical samples: one (npts x nnodes) matrix per component.
struct PhysicalField {
  std::vector<Eigen::MatrixXcd> comps;
};

inline PhysicalField to_physical(const SpectralField& f) {
  PhysicalField p;
  p.comps.reserve(f.ncomp());
  for (int c = 0; c < f.ncomp(); ++c) p.comps.push_back(f.layout().to_physical(f.component(c).transpose()));
  return p;
}

inline SpectralField from_physical(const PhysicalField& p, const SpectralField& like, BcTag bc = BcTag::none) {
  SpectralField out = SpectralField::zeros_like(like, static_cast<int>(p.comps.size()), bc);
  for (int c = 0; c < out.ncomp(); ++c) out.component(c) = like.layout().from_physical(p.comps[c]).transpose();
  return out;
}

namespace detail {

// Pointwise Euclidean magnitude over a set of physical components.
inline Eigen::MatrixXd magnitude(const std::vector<const Eigen::MatrixXcd*>& comps, Eigen::Index rows,
                                 Eigen::Index cols) {
  Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(rows, cols);
  for (const auto* c : comps) sq += c->cwiseAbs2();
  return sq.cwiseSqrt();
}

inline double lp_of_magnitude(const Eigen::MatrixXd& mag, const RadialGrid& g, const ModeLayout& l, double p) {
  if (std::isinf(p)) return mag.size() ? mag.maxCoeff() : 0.0;
  // Columns are radial nodes; rows are physical (theta, z) points.
  const Eigen::RowVectorXd colsum = mag.array().pow(p).colwise().sum();
  const double integral = l.torus_area() / mag.rows() * colsum.dot(g.weights);
  return std::pow(std::max(integral, 0.0), 1.0 / p);
}

}  // namespace detail

/// (integral |f|^p dV)^(1/p) on the oversampled physical grid; p = inf gives
/// the sampled maximum (a lower bound of the true supremum).
inline double lp_norm(const SpectralField& f, double p) {
  if (!(p >= 1.0)) throw InvalidArgument("lp_norm: p must be >= 1");
  const PhysicalField ph = to_physical(f);
  std::vector<const Eigen::MatrixXcd*> ptrs;
  for (const auto& c : ph.comps) ptrs.push_back(&c);
  const auto mag = detail::magnitude(ptrs, f.layout().physical_size(), f.nnodes());
  return detail::lp_of_magnitude(mag, f.grid(), f.layout(), p);
}

/// L^p norm of the stacked pair (v, B), pointwise magnitude over all six components.
inline double lp_norm_pair(const SpectralField& v, const SpectralField& b, double p) {
  if (!(p >= 1.0)) throw InvalidArgument("lp_norm_pair: p must be >= 1");
  const PhysicalField pv = to_physical(v);
  const PhysicalField pb = to_physical(b);
  std::vector<const Eigen::MatrixXcd*> ptrs;
  for (const auto& c : pv.comps) ptrs.push_back(&c);
  for (const auto& c : pb.comps) ptrs.push_back(&c);
  const auto mag = detail::magnitude(ptrs, v.layout().physical_size(), v.nnodes());
  return detail::lp_of_magnitude(mag, v.grid(), v.layout(), p);
}

/// Complex L^2 inner product <f, g> = integral conj(f).g dV via Parseval.
inline cplx inner(const SpectralField& f, const SpectralField& g) {
  if (!f.same_shape(g)) throw InvalidArgument("inner: shape mismatch");
  const Eigen::VectorXcd w = f.grid().weights.cast<cplx>();
  cplx s = 0.0;
  for (Eigen::Index c = 0; c < f.data().cols(); ++c)
    s += (f.data().col(c).conjugate().array() * g.data().col(c).array() * w.array()).sum();
  return f.layout().torus_area() * s;
}

/// L^2 norm from coefficients (mode sum of radial integrals).
inline double l2_norm(const SpectralField& f) { return std::sqrt(std::max(inner(f, f).real(), 0.0)); }

/// L^2 norm restricted to interior radial nodes (boundary rows carry BCs).
inline double l2_norm_interior(const SpectralField& f) {
  Eigen::VectorXd w = f.grid().weights;
  w(0) = 0.0;
  w(w.size() - 1) = 0.0;
  double s = 0.0;
  for (Eigen::Index c = 0; c < f.data().cols(); ++c) s += f.data().col(c).cwiseAbs2().dot(w);
  return std::sqrt(f.layout().torus_area() * s);
}

/// Sum over derivative orders 0..s of the L^p norms of the covariant
/// derivative tensors (pointwise Frobenius magnitude).
inline double sobolev_norm(const SpectralField& f, int s, double p) {
  if (s < 0 || s > 2) throw InvalidArgument("sobolev_norm: only s in {0,1,2} is supported");
  if (!(p > 1.0)) throw InvalidArgument("sobolev_norm: p must be > 1");
  double total = lp_norm(f, p);
  SpectralField d = f;
  for (int order = 1; order <= s; ++order) {
    d = covariant_gradient(d);
    total += lp_norm(d, p);
  }
  return total;
}

/// ||div f||_{L^2(interior)} / ||f||_{L^2}; zero for the zero field.
inline double divergence_score(const SpectralField& f) {
  const double nf = l2_norm(f);
  if (nf == 0.0) return 0.0;
  return l2_norm_interior(divergence(f)) / nf;
}

/// Largest violation of the tagged wall conditions relative to the field
/// scale max|f|; derivative conditions are made dimensionless by the gap.
inline double boundary_residual(const SpectralField& f, BcTag bc) {
  detail::require_ncomp(f, 3, "boundary_residual");
  const double scale = f.data().cwiseAbs().maxCoeff();
  if (scale == 0.0 || bc == BcTag::none) return 0.0;
  const auto& g = f.grid();
  const double gap = g.r2 - g.r1;
  double worst = 0.0;
  for (int b : {g.first(), g.last()}) {
    const Eigen::RowVectorXcd d1row = g.d1.row(b).cast<cplx>();
    for (int i = 0; i < f.nmodes(); ++i) {
      if (bc == BcTag::dirichlet_velocity) {
        for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(f.radial(c, i)(b)));
      } else {
        worst = std::max(worst, std::abs(f.radial(0, i)(b)));
        const Eigen::VectorXcd rbt = g.nodes.cast<cplx>().cwiseProduct(f.radial(1, i));
        worst = std::max(worst, gap / g.r2 * std::abs((d1row * rbt).value()));
        worst = std::max(worst, gap * std::abs((d1row * f.radial(2, i)).value()));
      }
    }
  }
  return worst / scale;
}

}  // namespace mhdtc
