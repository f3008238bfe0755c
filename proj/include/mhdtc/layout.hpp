#pragma once

#include <complex>
#include <cstring>
#include <memory>
#include <mutex>
#include <numeric>
#include <string>
#include <vector>

#include <fftw3.h>

#include "mhdtc/error.hpp"
#include "mhdtc/grid.hpp"

namespace mhdtc {

namespace detail {

// FFTW planning is not thread-safe; execution with new arrays is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// Smallest 2^a 3^b 5^c >= n.
inline int fft_size_at_least(int n) {
  if (n <= 1) return 1;
  for (int c = n;; ++c) {
    int v = c;
    for (int p : {2, 3, 5}) {
      while (v % p == 0) v /= p;
    }
    if (v == 1) return c;
  }
}

inline int wrap(int i, int n) { return ((i % n) + n) % n; }

}  // namespace detail

enum class LayoutKind { box, helical };

/// The set of Fourier modes a field carries and the physical grid used for
/// pseudospectral products and norms.
///
/// A box layout holds every (m, k) with |m| <= mmax, |k| <= kmax, ordered m
/// outer, k inner.  A helical layout holds the harmonics j*(m0, k0),
/// |j| <= jmax: the lattice generated by a single mode is closed under
/// products, so a perturbation seeded by one mode stays inside it and its
/// physical representation depends only on the phase m0*theta + k0*z.
class ModeLayout {
 public:
  static std::shared_ptr<const ModeLayout> box(int mmax, int kmax, double lz = 1.0) {
    if (mmax < 0 || kmax < 0) throw InvalidArgument("ModeLayout::box: Mmax and Kmax must be >= 0");
    if (!(lz > 0.0)) throw InvalidArgument("ModeLayout::box: Lz must be > 0");
    auto l = std::shared_ptr<ModeLayout>(new ModeLayout());
    l->kind_ = LayoutKind::box;
    l->mmax_ = mmax;
    l->kmax_ = kmax;
    l->lz_ = lz;
    for (int m = -mmax; m <= mmax; ++m)
      for (int k = -kmax; k <= kmax; ++k) l->modes_.push_back({m, k});
    l->n1_ = mmax == 0 ? 1 : detail::fft_size_at_least(3 * mmax + 2);
    l->n2_ = kmax == 0 ? 1 : detail::fft_size_at_least(3 * kmax + 2);
    for (const auto& q : l->modes_) l->slots_.push_back(detail::wrap(q.m, l->n1_) * l->n2_ + detail::wrap(q.k, l->n2_));
    l->make_plans();
    return l;
  }

  static std::shared_ptr<const ModeLayout> helical(ModeIndex generator, int jmax, double lz = 1.0) {
    if (generator.m == 0 && generator.k == 0) throw InvalidArgument("ModeLayout::helical: generator must be nonzero");
    if (jmax < 0) throw InvalidArgument("ModeLayout::helical: jmax must be >= 0");
    if (!(lz > 0.0)) throw InvalidArgument("ModeLayout::helical: Lz must be > 0");
    if (generator.m < 0 || (generator.m == 0 && generator.k < 0)) generator = generator.conj();
    auto l = std::shared_ptr<ModeLayout>(new ModeLayout());
    l->kind_ = LayoutKind::helical;
    l->generator_ = generator;
    l->jmax_ = jmax;
    l->mmax_ = std::abs(generator.m) * jmax;
    l->kmax_ = std::abs(generator.k) * jmax;
    l->lz_ = lz;
    for (int j = -jmax; j <= jmax; ++j) l->modes_.push_back({j * generator.m, j * generator.k});
    l->n1_ = jmax == 0 ? 1 : detail::fft_size_at_least(3 * jmax + 2);
    l->n2_ = 1;
    for (int j = -jmax; j <= jmax; ++j) l->slots_.push_back(detail::wrap(j, l->n1_));
    l->make_plans();
    return l;
  }

  ModeLayout(const ModeLayout&) = delete;
  ModeLayout& operator=(const ModeLayout&) = delete;
  ~ModeLayout() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    if (forward_) fftw_destroy_plan(forward_);
    if (backward_) fftw_destroy_plan(backward_);
  }

  LayoutKind kind() const { return kind_; }
  int mmax() const { return mmax_; }
  int kmax() const { return kmax_; }
  double lz() const { return lz_; }
  ModeIndex generator() const { return generator_; }
  int jmax() const { return jmax_; }
  int size() const { return static_cast<int>(modes_.size()); }
  const ModeIndex& mode(int i) const { return modes_[i]; }
  const std::vector<ModeIndex>& modes() const { return modes_; }
  double kz(int i) const { return modes_[i].k / lz_; }

  /// Position of a mode, or -1 when the layout does not carry it.
  int find(ModeIndex q) const {
    if (kind_ == LayoutKind::box) {
      if (std::abs(q.m) > mmax_ || std::abs(q.k) > kmax_) return -1;
      return (q.m + mmax_) * (2 * kmax_ + 1) + (q.k + kmax_);
    }
    const auto g = generator_;
    int j = 0;
    if (g.m != 0) {
      if (q.m % g.m != 0) return -1;
      j = q.m / g.m;
    } else {
      if (q.k % g.k != 0) return -1;
      j = q.k / g.k;
    }
    if (q.m != j * g.m || q.k != j * g.k || std::abs(j) > jmax_) return -1;
    return j + jmax_;
  }

  /// Index of the conjugate partner (-m, -k); layouts are symmetric.
  int conj_index(int i) const { return size() - 1 - i; }

  /// Canonical representative of each conjugate pair: (m > 0) or (m = 0, k >= 0).
  bool is_canonical(int i) const {
    const auto& q = modes_[i];
    return q.m > 0 || (q.m == 0 && q.k >= 0);
  }

  int physical_size() const { return n1_ * n2_; }
  int n_theta_like() const { return n1_; }
  int n_z_like() const { return n2_; }

  // T^2 volume factor: (2 pi) * (2 pi Lz).
  double torus_area() const { return 4.0 * std::numbers::pi * std::numbers::pi * lz_; }

  bool same_as(const ModeLayout& o) const {
    return kind_ == o.kind_ && mmax_ == o.mmax_ && kmax_ == o.kmax_ && lz_ == o.lz_ && generator_ == o.generator_ &&
           jmax_ == o.jmax_;
  }

  /// Spectral-to-physical for a batch of columns: coeffs is (nmodes x ncols)
  /// with one column per (component, radial node); output is (npts x ncols).
  Eigen::MatrixXcd to_physical(const Eigen::MatrixXcd& coeffs) const {
    if (coeffs.rows() != size()) throw InvalidArgument("to_physical: row count must equal the mode count");
    Eigen::MatrixXcd out(physical_size(), coeffs.cols());
    FftwBuffer buf(physical_size());
    for (Eigen::Index c = 0; c < coeffs.cols(); ++c) {
      std::fill(buf.data, buf.data + physical_size(), std::complex<double>(0.0));
      for (int i = 0; i < size(); ++i) buf.data[slots_[i]] = coeffs(i, c);
      fftw_execute_dft(backward_, buf.fftw(), buf.fftw());
      std::memcpy(out.col(c).data(), buf.data, sizeof(std::complex<double>) * physical_size());
    }
    return out;
  }

  /// Physical-to-spectral with truncation to the layout's modes.
  Eigen::MatrixXcd from_physical(const Eigen::MatrixXcd& values) const {
    if (values.rows() != physical_size()) throw InvalidArgument("from_physical: row count must equal the grid size");
    Eigen::MatrixXcd out(size(), values.cols());
    FftwBuffer buf(physical_size());
    const double scale = 1.0 / physical_size();
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      std::memcpy(buf.data, values.col(c).data(), sizeof(std::complex<double>) * physical_size());
      fftw_execute_dft(forward_, buf.fftw(), buf.fftw());
      for (int i = 0; i < size(); ++i) out(i, c) = buf.data[slots_[i]] * scale;
    }
    return out;
  }

 private:
  ModeLayout() = default;

  struct FftwBuffer {
    explicit FftwBuffer(int n)
        : data(reinterpret_cast<std::complex<double>*>(fftw_malloc(sizeof(fftw_complex) * std::max(n, 1)))) {
      if (!data) throw NumericalError("fftw_malloc failed");
    }
    ~FftwBuffer() { fftw_free(data); }
    FftwBuffer(const FftwBuffer&) = delete;
    FftwBuffer& operator=(const FftwBuffer&) = delete;
    fftw_complex* fftw() { return reinterpret_cast<fftw_complex*>(data); }
    std::complex<double>* data;
  };

  void make_plans() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    FftwBuffer buf(physical_size());
    // ESTIMATE keeps plan selection, and therefore round-off, reproducible.
    forward_ = fftw_plan_dft_2d(n1_, n2_, buf.fftw(), buf.fftw(), FFTW_FORWARD, FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_2d(n1_, n2_, buf.fftw(), buf.fftw(), FFTW_BACKWARD, FFTW_ESTIMATE);
    if (!forward_ || !backward_) throw NumericalError("FFTW planning failed");
  }

  LayoutKind kind_ = LayoutKind::box;
  int mmax_ = 0;
  int kmax_ = 0;
  double lz_ = 1.0;
  ModeIndex generator_{};
  int jmax_ = 0;
  std::vector<ModeIndex> modes_;
  std::vector<int> slots_;
  int n1_ = 1;
  int n2_ = 1;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

using LayoutPtr = std::shared_ptr<const ModeLayout>;

}  // namespace mhdtc
