#pragma once

#include <cstdint>
#include <random>

#include "mhdtc/field.hpp"
#include "mhdtc/oper.hpp"

namespace mhdtc {

namespace detail {

// Portable uniform deviate in [-1, 1) from the raw 64-bit engine output
// (std::uniform_real_distribution is implementation-defined).
inline double unit_uniform(std::mt19937_64& gen) { return 2.0 * double(gen() >> 11) * 0x1.0p-53 - 1.0; }

// s^a (1-s)^a q(s) with q a random cubic, at the grid nodes.
inline Eigen::VectorXcd bump_profile(const RadialGrid& g, int power, std::mt19937_64& gen, bool real, double amp) {
  cplx q[4];
  for (auto& c : q) {
    const double re = unit_uniform(gen);
    const double im = unit_uniform(gen);
    c = amp * cplx(re, real ? 0.0 : im);
  }
  Eigen::VectorXcd v(g.size());
  for (int j = 0; j < g.size(); ++j) {
    const double s = (g.nodes(j) - g.r1) / (g.r2 - g.r1);
    const double env = std::pow(s * (1.0 - s), power);
    v(j) = env * (q[0] + s * (q[1] + s * (q[2] + s * q[3])));
  }
  return v;
}

}  // namespace detail

/// Overwrites wall values so the field satisfies the tagged conditions
/// exactly, keeping interior values.  Interior divergence is unaffected
/// because the radial wall values are already zero for both tags.
inline void impose_boundary_values(SpectralField& f, BcTag bc) {
  if (bc == BcTag::none) return;
  const auto elim = boundary_elimination(f.grid(), bc);
  for (int i = 0; i < f.nmodes(); ++i) {
    const VectorXcd x = f.mode_vector(i);
    f.set_mode_vector(i, elim.prolong * x(elim.interior_rows));
  }
  f.set_bc(bc);
}

/// Deterministic real divergence-free field curl(T e_z) + curl curl(P e_z)
/// with potentials vanishing to high order at both walls, so both the
/// no-slip and the conducting conditions hold.
inline SpectralField random_divfree(std::uint64_t seed, BcTag bc, GridPtr grid, LayoutPtr layout) {
  std::mt19937_64 gen(seed);
  ScalarField tor(grid, layout, 1), pol(grid, layout, 1);
  const auto& l = *layout;
  for (int i = 0; i < l.size(); ++i) {
    if (!l.is_canonical(i)) continue;
    const auto q = l.mode(i);
    const double amp = 1.0 / (1.0 + q.m * q.m + l.kz(i) * l.kz(i));
    const bool real = l.conj_index(i) == i;
    tor.radial(0, i) = detail::bump_profile(*grid, 3, gen, real, amp);
    pol.radial(0, i) = detail::bump_profile(*grid, 4, gen, real, amp);
  }
  tor.enforce_reality();
  pol.enforce_reality();
  const auto along_z = [](const ScalarField& s) {
    SpectralField v = SpectralField::zeros_like(s, 3);
    v.component(2) = s.component(0);
    return v;
  };
  SpectralField b = curl(along_z(tor)) + curl(curl(along_z(pol)));
  impose_boundary_values(b, bc);
  b.enforce_reality();  // complex GEMM may round conjugate pairs differently
  b.set_bc(bc);
  return b;
}

/// Deterministic real smooth field with no constraints (for projector tests).
inline SpectralField random_smooth(std::uint64_t seed, GridPtr grid, LayoutPtr layout, int ncomp = 3) {
  std::mt19937_64 gen(seed);
  SpectralField f(grid, layout, ncomp);
  const auto& l = *layout;
  for (int c = 0; c < ncomp; ++c) {
    for (int i = 0; i < l.size(); ++i) {
      if (!l.is_canonical(i)) continue;
      const auto q = l.mode(i);
      const double amp = 1.0 / (1.0 + q.m * q.m + l.kz(i) * l.kz(i));
      f.radial(c, i) = detail::bump_profile(*grid, 0, gen, l.conj_index(i) == i, amp);
    }
  }
  f.enforce_reality();
  return f;
}

}  // namespace mhdtc
