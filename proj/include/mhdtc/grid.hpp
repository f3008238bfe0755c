#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "mhdtc/error.hpp"

namespace mhdtc {

/// Chebyshev–Gauss–Lobatto collocation on the gap [r1, r2].
///
/// Nodes run from r2 (index 0) down to r1 (index nr).  The quadrature
/// weights already contain the cylindrical Jacobian, so that
/// `weights.dot(f)` approximates the integral of f(r) r dr.
struct RadialGrid {
  double r1 = 0.0;
  double r2 = 0.0;
  int nr = 0;
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
  Eigen::MatrixXd d1;
  Eigen::MatrixXd d2;

  int size() const { return nr + 1; }
  int first() const { return 0; }   // r = r2
  int last() const { return nr; }   // r = r1
};

using GridPtr = std::shared_ptr<const RadialGrid>;

/// Azimuthal and axial wavenumbers of one Fourier mode.
struct ModeIndex {
  int m = 0;
  int k = 0;

  friend bool operator==(const ModeIndex&, const ModeIndex&) = default;
  ModeIndex conj() const { return {-m, -k}; }
};

namespace detail {

// Chebyshev differentiation matrix on x_j = cos(j pi / n), diagonal by the
// negative-sum trick so that constants are annihilated to round-off.
inline Eigen::MatrixXd cheb_matrix(int n) {
  const int np = n + 1;
  Eigen::VectorXd x(np), c(np);
  for (int j = 0; j < np; ++j) {
    x(j) = std::cos(std::numbers::pi * j / n);
    c(j) = ((j == 0 || j == n) ? 2.0 : 1.0) * ((j % 2) ? -1.0 : 1.0);
  }
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(np, np);
  for (int i = 0; i < np; ++i) {
    for (int j = 0; j < np; ++j) {
      if (i != j) d(i, j) = (c(i) / c(j)) / (x(i) - x(j));
    }
  }
  for (int i = 0; i < np; ++i) d(i, i) = -d.row(i).sum();
  return d;
}

// Clenshaw–Curtis weights on [-1, 1] for the Lobatto nodes.
inline Eigen::VectorXd clenshaw_curtis(int n) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n + 1);
  const double pi = std::numbers::pi;
  for (int j = 0; j <= n; ++j) {
    const double theta = pi * j / n;
    double s = 0.0;
    if (n % 2 == 0) {
      for (int q = 1; q < n / 2; ++q) s += 2.0 * std::cos(2.0 * q * theta) / (4.0 * q * q - 1.0);
      s += std::cos(n * theta) / (double(n) * n - 1.0);
    } else {
      for (int q = 1; q <= (n - 1) / 2; ++q) s += 2.0 * std::cos(2.0 * q * theta) / (4.0 * q * q - 1.0);
    }
    const double base = (j == 0 || j == n) ? 1.0 / n : 2.0 / n;
    w(j) = base * (1.0 - s);
  }
  return w;
}

}  // namespace detail

/// Builds the collocation grid; rejects annuli touching the axis.
inline RadialGrid build_radial_grid(double r1, double r2, int nr) {
  if (!(r1 > 0.0)) throw InvalidArgument("build_radial_grid: R1 must be > 0 (the axis is excluded)");
  if (!(r1 < r2)) throw InvalidArgument("build_radial_grid: need R1 < R2");
  if (nr < 4) throw InvalidArgument("build_radial_grid: Nr must be >= 4");

  RadialGrid g;
  g.r1 = r1;
  g.r2 = r2;
  g.nr = nr;
  const double mid = 0.5 * (r1 + r2);
  const double half = 0.5 * (r2 - r1);
  g.nodes.resize(nr + 1);
  for (int j = 0; j <= nr; ++j) g.nodes(j) = mid + half * std::cos(std::numbers::pi * j / nr);
  // Pin the endpoints exactly; cos(pi) is exact but mid + half may not be.
  g.nodes(0) = r2;
  g.nodes(nr) = r1;

  g.d1 = detail::cheb_matrix(nr) / half;
  g.d2 = g.d1 * g.d1;
  g.weights = half * detail::clenshaw_curtis(nr).cwiseProduct(g.nodes);
  return g;
}

inline GridPtr make_grid(double r1, double r2, int nr) {
  return std::make_shared<const RadialGrid>(build_radial_grid(r1, r2, nr));
}

inline Eigen::VectorXd radial_derivative(const RadialGrid& g, const Eigen::VectorXd& values, int order) {
  if (values.size() != g.size()) throw InvalidArgument("radial_derivative: expected Nr+1 samples");
  if (order == 1) return g.d1 * values;
  if (order == 2) return g.d2 * values;
  throw InvalidArgument("radial_derivative: order must be 1 or 2");
}

template <typename Vec>
auto radial_integral(const RadialGrid& g, const Vec& values) {
  if (values.size() != g.size()) throw InvalidArgument("radial_integral: expected Nr+1 samples");
  return (g.weights.cast<typename Vec::Scalar>().array() * values.array()).sum();
}

/// Barycentric Chebyshev interpolation of node samples onto arbitrary radii.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> interpolate(const RadialGrid& g,
                                                     const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& values,
                                                     const Eigen::VectorXd& radii) {
  const int n = g.nr;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(radii.size());
  for (int q = 0; q < radii.size(); ++q) {
    Scalar num = Scalar(0);
    double den = 0.0;
    int exact = -1;
    for (int j = 0; j <= n; ++j) {
      const double diff = radii(q) - g.nodes(j);
      if (diff == 0.0) {
        exact = j;
        break;
      }
      double wj = (j % 2) ? -1.0 : 1.0;
      if (j == 0 || j == n) wj *= 0.5;
      num += values(j) * (wj / diff);
      den += wj / diff;
    }
    out(q) = exact >= 0 ? values(exact) : num / den;
  }
  return out;
}

/// Interpolation matrix from grid `from` to the nodes of grid `to`.
inline Eigen::MatrixXd interpolation_matrix(const RadialGrid& from, const RadialGrid& to) {
  Eigen::MatrixXd m(to.size(), from.size());
  for (int j = 0; j < from.size(); ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Unit(from.size(), j);
    m.col(j) = interpolate<double>(from, e, to.nodes);
  }
  return m;
}

}  // namespace mhdtc
