#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "mhdtc/error.hpp"
#include "mhdtc/field.hpp"

namespace mhdtc {

// Layout: "MHDTC1", u32 {Nr, Mmax, Kmax, ncomp}, f64 {R1, R2, time}, then
// (re, im) f64 pairs, component-major, m outer / k inner, radial innermost.
// All little-endian.  Only box layouts are stored; see embed_in_box.

namespace detail {

template <typename T>
void put_le(std::ostream& os, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw IoError("checkpoint: truncated file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

inline constexpr char kMagic[6] = {'M', 'H', 'D', 'T', 'C', '1'};

}  // namespace detail

/// Copies a field into the box layout enclosing its modes.
inline SpectralField embed_in_box(const SpectralField& f) {
  if (f.layout().kind() == LayoutKind::box) return f;
  auto box = ModeLayout::box(f.layout().mmax(), f.layout().kmax(), f.layout().lz());
  SpectralField out(f.grid_ptr(), box, f.ncomp(), f.bc());
  for (int i = 0; i < f.nmodes(); ++i) {
    const int j = box->find(f.layout().mode(i));
    for (int c = 0; c < f.ncomp(); ++c) out.radial(c, j) = f.radial(c, i);
  }
  return out;
}

inline void write_checkpoint(const std::string& path, const SpectralField& field, double time) {
  const SpectralField f = embed_in_box(field);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("checkpoint: cannot open '" + path + "' for writing");
  os.write(detail::kMagic, sizeof(detail::kMagic));
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(f.grid().nr));
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(f.layout().mmax()));
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(f.layout().kmax()));
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(f.ncomp()));
  detail::put_le<double>(os, f.grid().r1);
  detail::put_le<double>(os, f.grid().r2);
  detail::put_le<double>(os, time);
  // Column-major storage already is component-major, mode, then radial.
  for (Eigen::Index c = 0; c < f.data().cols(); ++c)
    for (Eigen::Index j = 0; j < f.data().rows(); ++j) {
      detail::put_le<double>(os, f.data()(j, c).real());
      detail::put_le<double>(os, f.data()(j, c).imag());
    }
  if (!os) throw IoError("checkpoint: write failed for '" + path + "'");
}

struct Checkpoint {
  SpectralField field;
  double time;
};

inline Checkpoint read_checkpoint(const std::string& path, double lz = 1.0, BcTag bc = BcTag::none) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open '" + path + "'");
  char magic[sizeof(detail::kMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, detail::kMagic, sizeof(magic)) != 0)
    throw IoError("checkpoint: bad magic in '" + path + "'");
  const auto nr = detail::get_le<std::uint32_t>(is);
  const auto mmax = detail::get_le<std::uint32_t>(is);
  const auto kmax = detail::get_le<std::uint32_t>(is);
  const auto ncomp = detail::get_le<std::uint32_t>(is);
  const double r1 = detail::get_le<double>(is);
  const double r2 = detail::get_le<double>(is);
  const double time = detail::get_le<double>(is);
  SpectralField f(make_grid(r1, r2, static_cast<int>(nr)), ModeLayout::box(int(mmax), int(kmax), lz),
                  static_cast<int>(ncomp), bc);
  for (Eigen::Index c = 0; c < f.data().cols(); ++c)
    for (Eigen::Index j = 0; j < f.data().rows(); ++j) {
      const double re = detail::get_le<double>(is);
      const double im = detail::get_le<double>(is);
      f.data()(j, c) = cplx(re, im);
    }
  if (is.peek() != std::char_traits<char>::eof()) throw IoError("checkpoint: trailing bytes in '" + path + "'");
  return {std::move(f), time};
}

}  // namespace mhdtc
