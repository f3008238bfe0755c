#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#ifndef lapack_complex_double
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#endif
#include <lapacke.h>

#include "mhdtc/error.hpp"

namespace mhdtc::linalg {

using cplx = std::complex<double>;
using MatrixXc = Eigen::MatrixXcd;
using VectorXc = Eigen::VectorXcd;

struct EigenDecomposition {
  VectorXc values;
  MatrixXc vectors;  // columns; empty when not requested
};

/// Dense non-Hermitian eigensolve (zgeev).  The input is copied.
inline EigenDecomposition eig(const MatrixXc& a, bool want_vectors) {
  if (a.rows() != a.cols()) throw InvalidArgument("eig: matrix must be square");
  const lapack_int n = static_cast<lapack_int>(a.rows());
  EigenDecomposition out;
  out.values.resize(n);
  if (n == 0) return out;
  MatrixXc work = a;
  MatrixXc vr;
  if (want_vectors) vr.resize(n, n);
  cplx dummy{};
  const lapack_int info =
      LAPACKE_zgeev(LAPACK_COL_MAJOR, 'N', want_vectors ? 'V' : 'N', n, work.data(), n, out.values.data(), &dummy, 1,
                    want_vectors ? vr.data() : &dummy, want_vectors ? n : 1);
  if (info != 0) throw NumericalError("eig: zgeev failed with info=" + std::to_string(info));
  if (want_vectors) out.vectors = std::move(vr);
  return out;
}

inline VectorXc eigvals(const MatrixXc& a) { return eig(a, false).values; }

/// Indices ordering eigenvalues by descending real part, ties broken by
/// descending imaginary part so the order is reproducible.
inline std::vector<int> order_by_real_desc(const VectorXc& values) {
  std::vector<int> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (values(a).real() != values(b).real()) return values(a).real() > values(b).real();
    return values(a).imag() > values(b).imag();
  });
  return idx;
}

/// Singular values (descending) via zgesvd without vectors.
inline Eigen::VectorXd singular_values(const MatrixXc& a) {
  const lapack_int m = static_cast<lapack_int>(a.rows());
  const lapack_int n = static_cast<lapack_int>(a.cols());
  Eigen::VectorXd s(std::min(m, n));
  if (s.size() == 0) return s;
  MatrixXc work = a;
  std::vector<double> superb(std::max<lapack_int>(1, std::min(m, n) - 1));
  cplx dummy{};
  const lapack_int info = LAPACKE_zgesvd(LAPACK_COL_MAJOR, 'N', 'N', m, n, work.data(), m, s.data(), &dummy, 1,
                                         &dummy, 1, superb.data());
  if (info != 0) throw NumericalError("singular_values: zgesvd failed with info=" + std::to_string(info));
  return s;
}

/// Spectral norm (largest singular value).
inline double norm2(const MatrixXc& a) {
  if (a.size() == 0) return 0.0;
  return singular_values(a)(0);
}

/// 2-norm condition number.
inline double cond2(const MatrixXc& a) {
  const Eigen::VectorXd s = singular_values(a);
  if (s.size() == 0) return 1.0;
  return s(s.size() - 1) > 0.0 ? s(0) / s(s.size() - 1) : std::numeric_limits<double>::infinity();
}

/// Shift-invert inverse iteration refining (lambda, x); returns the
/// Rayleigh-quotient estimate and overwrites x with a unit-norm vector.
inline cplx inverse_iteration(const MatrixXc& a, cplx shift, VectorXc& x, int iterations = 4) {
  const Eigen::Index n = a.rows();
  MatrixXc shifted = a - shift * MatrixXc::Identity(n, n);
  // Nudge the shift off the spectrum so the factorization stays regular.
  const double nudge = 1e-13 * std::max(1.0, a.cwiseAbs().maxCoeff());
  shifted.diagonal().array() -= cplx(nudge, nudge);
  Eigen::PartialPivLU<MatrixXc> lu(shifted);
  if (x.norm() == 0.0) x = VectorXc::Ones(n);
  x.normalize();
  for (int it = 0; it < iterations; ++it) {
    VectorXc y = lu.solve(x);
    const double ny = y.norm();
    if (!std::isfinite(ny) || ny == 0.0) throw NumericalError("inverse_iteration: breakdown");
    x = y / ny;
  }
  return x.dot(a * x);  // x is unit norm; dot conjugates the first argument
}

}  // namespace mhdtc::linalg
