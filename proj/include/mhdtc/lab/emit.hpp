#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <iterator>
#include <cmath>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <fftw3.h>

#include "mhdtc/error.hpp"
#include "mhdtc/lab/config.hpp"

namespace mhdtc {

inline constexpr const char* kVersion = "1.0.0";

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Hash of the canonical serialization (keys sorted, shortest round-trip doubles).
inline std::string config_hash(const SimConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json(c).dump())));
  return buf;
}

inline std::filesystem::path ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw IoError("cannot create output directory " + dir.string() + (ec ? ": " + ec.message() : ""));
  return dir;
}

/// <output.dir>/<run_id>/<command>; re-running the same run id overwrites in place.
inline std::filesystem::path output_directory(const SimConfig& c, const std::string& command) {
  return ensure_directory(std::filesystem::path(c.output.dir) / c.output.run_id / command);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

/// One CSV cell; numbers use %.17g so values round-trip.
struct Cell {
  std::string text;
  Cell(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    text = buf;
  }
  Cell(int v) : text(std::to_string(v)) {}
  Cell(long v) : text(std::to_string(v)) {}
  Cell(std::string v) : text(std::move(v)) {}
  Cell(const char* v) : text(v) {}
};

/// Buffered CSV with a fixed header.
class CsvTable {
 public:
  explicit CsvTable(const std::vector<std::string>& header) : columns_(header.size()) {
    for (std::size_t i = 0; i < header.size(); ++i) text_ += (i ? "," : "") + header[i];
    text_ += '\n';
  }

  void add(std::initializer_list<Cell> cells) {
    if (cells.size() != columns_) throw InvalidArgument("CsvTable: row has wrong number of cells");
    std::size_t i = 0;
    for (const auto& c : cells) text_ += (i++ ? "," : "") + c.text;
    text_ += '\n';
  }

  const std::string& text() const { return text_; }
  void write(const std::filesystem::path& path) const { write_text(path, text_); }

 private:
  std::size_t columns_;
  std::string text_;
};

/// One pass/fail verdict.
struct Check {
  std::string name;
  bool passed = false;
  double value = 0.0;
  std::string limit;   // human-readable acceptance window
  std::string detail;
};

inline Json to_json(const Check& c) {
  Json j{{"name", c.name}, {"passed", c.passed}, {"limit", c.limit}, {"detail", c.detail}};
  j["value"] = std::isfinite(c.value) ? Json(c.value) : Json(nullptr);
  return j;
}

inline Json version_info() {
  char eigen[32];
  std::snprintf(eigen, sizeof eigen, "%d.%d.%d", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION);
  Json j;
  j["mhdtc"] = kVersion;
  j["eigen"] = eigen;
  j["fftw"] = std::string(fftw_version);
  j["compiler"] = __VERSION__;
  j["cxx_standard"] = static_cast<long>(__cplusplus);
  return j;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// manifest.json: the only emitted file carrying timings and a timestamp.
inline Json write_manifest(const std::filesystem::path& dir, const SimConfig& cfg, const std::string& command,
                           const std::vector<Check>& checks, const Json& timings, const std::vector<std::string>& files) {
  Json m;
  m["command"] = command;
  m["run_id"] = cfg.output.run_id;
  m["config_hash"] = config_hash(cfg);
  m["config"] = to_json(cfg);
  m["versions"] = version_info();
  m["timings_s"] = timings;
  Json cj = Json::array();
  bool all = true;
  for (const auto& c : checks) {
    cj.push_back(to_json(c));
    all = all && c.passed;
  }
  m["checks"] = cj;
  m["passed"] = all;
  m["files"] = files;
  m["timestamp"] = utc_timestamp();
  write_text(dir / "manifest.json", m.dump(2) + "\n");
  return m;
}

}  // namespace mhdtc
