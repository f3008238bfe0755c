#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mhdtc/error.hpp"
#include "mhdtc/grid.hpp"
#include "mhdtc/steady.hpp"

namespace mhdtc {

using Json = nlohmann::json;

struct GeometryConfig {
  double r1 = 1.0;
  double r2 = 2.0;
};

struct WallConfig {
  double beta1 = 3.0;
  double beta2 = 1.0;
};

struct PhysicsConfig {
  std::optional<double> nu;  // empty: nu_factor * ||u_TC||_{W^{1,inf}}
  double nu_factor = 10.0;
  double eps = 1e-3;
  double lz = 1.0;
};

struct ResolutionConfig {
  int nr = 96;
  int mmax = 16;
  int kmax = 16;
};

struct IntegratorConfig {
  double dt = 0.0;     // 0: advective CFL bound
  double cfl = 0.5;
  double t_end = 0.0;  // 0: derived from the leader growth rate
  int sample_every = 4;
};

struct ExperimentConfig {
  std::vector<double> delta_list = {1e-3, 1e-4, 1e-5, 1e-6};
  std::vector<double> eps_list = {1e-2, 0.0031622776601683794, 1e-3, 0.00031622776601683794, 1e-4};
  double delta = 1e-5;     // single nonlinear runs (evolve-nonlinear, energy-transfer)
  double chi = 0.0;        // 0: chi_factor * ||u_TC||_{L^p}
  double chi_factor = 0.01;
  double p = 2.0;
  std::vector<double> alpha_list = {0.55, 0.75, 0.95};
  double eta_factor = 0.1;  // eta = eta_factor * |leading eigenvalue of the mode|
  std::array<int, 2> semigroup_mode = {1, 1};
  int nr_coarse = 64;
  int nr_fine = 128;
  double t_min = 1e-3;
  double t_max = 10.0;
  int t_count = 41;
  double growth_periods = 5.0;  // linear runs last growth_periods / |Re lambda|
  double escape_margin = 3.0;   // nonlinear runs stop by escape_margin * predicted t*
  std::string operator_kind = "dynamo";
  std::uint64_t seed = 1;
  int random_fields = 100;
};

struct OutputConfig {
  std::string dir = "out";
  std::string run_id = "paper-default";
};

struct SimConfig {
  GeometryConfig geometry;
  WallConfig wall;
  PhysicsConfig physics;
  ResolutionConfig resolution;
  IntegratorConfig integrator;
  ExperimentConfig experiment;
  OutputConfig output;

  TCProfile profile() const { return solve_tc_coefficients(geometry.r1, geometry.r2, wall.beta1, wall.beta2); }
  GridPtr grid() const { return make_grid(geometry.r1, geometry.r2, resolution.nr); }
  GridPtr grid(int nr) const { return make_grid(geometry.r1, geometry.r2, nr); }
  /// Viscosity in force: explicit value or the factor times ||u_TC||_{W^{1,inf}} on the grid.
  double nu_value() const {
    if (physics.nu) return *physics.nu;
    return physics.nu_factor * tc_w1inf_norm(profile(), *grid());
  }
  double chi_value() const {
    if (experiment.chi > 0.0) return experiment.chi;
    return experiment.chi_factor * tc_lp_norm(profile(), *grid(), experiment.p, physics.lz);
  }
};

// --- JSON mapping ------------------------------------------------------------

namespace detail {

// Reads one JSON object strictly: every key must be consumed.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where("") + "expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const Json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError(where(key) + "expected a number");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer() && !v.is_number_unsigned()) throw ConfigError(where(key) + "expected an integer");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(where(key) + "expected a string");
      }
      out = v.get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where(key) + "wrong type (" + e.what() + ")");
    }
  }

  const Json* raw(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  ObjectReader child(const char* key) {
    seen_.insert(key);
    static const Json empty = Json::object();
    return ObjectReader(j_.contains(key) ? j_.at(key) : empty, join(key));
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) throw ConfigError(where(item.key()) + "unknown key");
  }

  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where(const std::string& key) const { return (key.empty() ? path_ : join(key)) + ": "; }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ConfigError(path + ": " + what);
}

}  // namespace detail

/// Positivity and ordering constraints of every downstream module.
inline void validate(const SimConfig& c) {
  using detail::require;
  require(c.geometry.r1 > 0.0, "geometry.r1", "must be > 0 (the axis is excluded)");
  require(c.geometry.r2 > c.geometry.r1, "geometry.r2", "must exceed geometry.r1");
  require(c.wall.beta1 != 0.0 && std::isfinite(c.wall.beta1), "wall.beta1", "must be finite and nonzero");
  require(c.wall.beta2 != 0.0 && std::isfinite(c.wall.beta2), "wall.beta2", "must be finite and nonzero");
  if (c.physics.nu) require(*c.physics.nu > 0.0, "physics.nu", "must be > 0");
  require(c.physics.nu_factor > 0.0, "physics.nu_factor", "must be > 0");
  require(c.physics.eps > 0.0, "physics.eps", "must be > 0");
  require(c.physics.lz > 0.0, "physics.lz", "must be > 0");
  require(c.resolution.nr >= 8, "resolution.nr", "must be >= 8");
  require(c.resolution.mmax >= 0, "resolution.mmax", "must be >= 0");
  require(c.resolution.kmax >= 0, "resolution.kmax", "must be >= 0");
  require(c.resolution.mmax + c.resolution.kmax > 0, "resolution", "scan window holds no mode");
  require(c.integrator.dt >= 0.0, "integrator.dt", "must be >= 0 (0 selects the CFL step)");
  require(c.integrator.cfl > 0.0, "integrator.cfl", "must be > 0");
  require(c.integrator.t_end >= 0.0, "integrator.t_end", "must be >= 0 (0 selects an automatic horizon)");
  require(c.integrator.sample_every >= 1, "integrator.sample_every", "must be >= 1");
  const auto& e = c.experiment;
  for (double d : e.delta_list) require(d > 0.0, "experiment.delta_list", "entries must be > 0");
  for (double d : e.eps_list) require(d > 0.0, "experiment.eps_list", "entries must be > 0");
  require(e.delta >= 0.0, "experiment.delta", "must be >= 0");
  require(e.chi >= 0.0, "experiment.chi", "must be >= 0 (0 selects chi_factor * ||u_TC||)");
  require(e.chi_factor > 0.0, "experiment.chi_factor", "must be > 0");
  require(e.p >= 1.0, "experiment.p", "must be >= 1");
  for (double a : e.alpha_list) require(a >= 0.0 && a < 1.0, "experiment.alpha_list", "entries must lie in [0, 1)");
  require(e.eta_factor > 0.0, "experiment.eta_factor", "must be > 0");
  require(e.nr_coarse >= 8, "experiment.nr_coarse", "must be >= 8");
  require(e.nr_fine > e.nr_coarse, "experiment.nr_fine", "must exceed experiment.nr_coarse");
  require(e.t_min > 0.0, "experiment.t_min", "must be > 0");
  require(e.t_max > e.t_min, "experiment.t_max", "must exceed experiment.t_min");
  require(e.t_count >= 2, "experiment.t_count", "must be >= 2");
  require(e.growth_periods > 0.0, "experiment.growth_periods", "must be > 0");
  require(e.escape_margin > 1.0, "experiment.escape_margin", "must be > 1");
  require(e.operator_kind == "dynamo" || e.operator_kind == "linns" || e.operator_kind == "block",
          "experiment.operator_kind", "must be one of dynamo, linns, block");
  require(e.random_fields >= 1, "experiment.random_fields", "must be >= 1");
  require(!c.output.dir.empty(), "output.dir", "must not be empty");
  require(!c.output.run_id.empty() && c.output.run_id.find('/') == std::string::npos, "output.run_id",
          "must be a non-empty name without '/'");
}

inline Json to_json(const SimConfig& c) {
  Json j;
  j["geometry"] = {{"r1", c.geometry.r1}, {"r2", c.geometry.r2}};
  j["wall"] = {{"beta1", c.wall.beta1}, {"beta2", c.wall.beta2}};
  j["physics"] = {{"nu", c.physics.nu ? Json(*c.physics.nu) : Json("auto")},
                  {"nu_factor", c.physics.nu_factor},
                  {"eps", c.physics.eps},
                  {"lz", c.physics.lz}};
  j["resolution"] = {{"nr", c.resolution.nr}, {"mmax", c.resolution.mmax}, {"kmax", c.resolution.kmax}};
  j["integrator"] = {{"dt", c.integrator.dt},
                     {"cfl", c.integrator.cfl},
                     {"t_end", c.integrator.t_end},
                     {"sample_every", c.integrator.sample_every}};
  const auto& e = c.experiment;
  j["experiment"] = {{"delta_list", e.delta_list},
                     {"eps_list", e.eps_list},
                     {"delta", e.delta},
                     {"chi", e.chi},
                     {"chi_factor", e.chi_factor},
                     {"p", e.p},
                     {"alpha_list", e.alpha_list},
                     {"eta_factor", e.eta_factor},
                     {"semigroup_mode", e.semigroup_mode},
                     {"nr_coarse", e.nr_coarse},
                     {"nr_fine", e.nr_fine},
                     {"t_min", e.t_min},
                     {"t_max", e.t_max},
                     {"t_count", e.t_count},
                     {"growth_periods", e.growth_periods},
                     {"escape_margin", e.escape_margin},
                     {"operator_kind", e.operator_kind},
                     {"seed", e.seed},
                     {"random_fields", e.random_fields}};
  j["output"] = {{"dir", c.output.dir}, {"run_id", c.output.run_id}};
  return j;
}

/// Strict mapping onto `base`: absent keys keep the base values, unknown
/// keys and type mismatches are rejected with their dotted path.
inline SimConfig from_json(const Json& j, SimConfig base = {}) {
  detail::ObjectReader root(j, "");
  {
    auto r = root.child("geometry");
    r.get("r1", base.geometry.r1);
    r.get("r2", base.geometry.r2);
    r.finish();
  }
  {
    auto r = root.child("wall");
    r.get("beta1", base.wall.beta1);
    r.get("beta2", base.wall.beta2);
    r.finish();
  }
  {
    auto r = root.child("physics");
    if (const Json* nu = r.raw("nu")) {
      if (nu->is_string() && nu->get<std::string>() == "auto") {
        base.physics.nu.reset();
      } else if (nu->is_number()) {
        base.physics.nu = nu->get<double>();
      } else {
        throw ConfigError("physics.nu: expected a number or \"auto\"");
      }
    }
    r.get("nu_factor", base.physics.nu_factor);
    r.get("eps", base.physics.eps);
    r.get("lz", base.physics.lz);
    r.finish();
  }
  {
    auto r = root.child("resolution");
    r.get("nr", base.resolution.nr);
    r.get("mmax", base.resolution.mmax);
    r.get("kmax", base.resolution.kmax);
    r.finish();
  }
  {
    auto r = root.child("integrator");
    r.get("dt", base.integrator.dt);
    r.get("cfl", base.integrator.cfl);
    r.get("t_end", base.integrator.t_end);
    r.get("sample_every", base.integrator.sample_every);
    r.finish();
  }
  {
    auto r = root.child("experiment");
    auto& e = base.experiment;
    const auto list = [&](const char* key, std::vector<double>& out) {
      if (const Json* v = r.raw(key)) {
        if (!v->is_array()) throw ConfigError(std::string("experiment.") + key + ": expected an array of numbers");
        std::vector<double> vals;
        for (const auto& x : *v) {
          if (!x.is_number()) throw ConfigError(std::string("experiment.") + key + ": expected an array of numbers");
          vals.push_back(x.get<double>());
        }
        out = std::move(vals);
      }
    };
    list("delta_list", e.delta_list);
    list("eps_list", e.eps_list);
    list("alpha_list", e.alpha_list);
    r.get("delta", e.delta);
    r.get("chi", e.chi);
    r.get("chi_factor", e.chi_factor);
    r.get("p", e.p);
    r.get("eta_factor", e.eta_factor);
    if (const Json* v = r.raw("semigroup_mode")) {
      if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number_integer() || !(*v)[1].is_number_integer())
        throw ConfigError("experiment.semigroup_mode: expected [m, k] integers");
      e.semigroup_mode = {(*v)[0].get<int>(), (*v)[1].get<int>()};
    }
    r.get("nr_coarse", e.nr_coarse);
    r.get("nr_fine", e.nr_fine);
    r.get("t_min", e.t_min);
    r.get("t_max", e.t_max);
    r.get("t_count", e.t_count);
    r.get("growth_periods", e.growth_periods);
    r.get("escape_margin", e.escape_margin);
    r.get("operator_kind", e.operator_kind);
    r.get("seed", e.seed);
    r.get("random_fields", e.random_fields);
    r.finish();
  }
  {
    auto r = root.child("output");
    r.get("dir", base.output.dir);
    r.get("run_id", base.output.run_id);
    r.finish();
  }
  root.finish();
  validate(base);
  return base;
}

// --- presets, files, overrides -------------------------------------------------

/// Named starting points.  `paper-default` is the documented default
/// setup; `smoke` shrinks every resolution for quick end-to-end runs.
inline SimConfig preset(const std::string& name) {
  SimConfig c;
  if (name == "paper-default") return c;
  if (name == "smoke") {
    c.resolution = {32, 4, 4};
    c.experiment.nr_coarse = 16;
    c.experiment.nr_fine = 32;
    c.experiment.t_count = 11;
    c.experiment.random_fields = 5;
    c.output.run_id = "smoke";
    return c;
  }
  throw ConfigError("preset: unknown preset '" + name + "' (known: paper-default, smoke)");
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": malformed JSON (" + std::string(e.what()) + ")");
  }
}

/// Sets one dotted path (e.g. "physics.eps") from flag text.  The value is
/// read as JSON when it parses, else as a string; the path must exist.
inline void apply_override(Json& doc, const std::string& dotted, const std::string& text) {
  Json* node = &doc;
  std::stringstream ss(dotted);
  std::string part, seen;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ConfigError("override: empty key");
  for (std::size_t i = 0; i < parts.size(); ++i) {
    seen += (i ? "." : "") + parts[i];
    if (!node->is_object() || !node->contains(parts[i])) throw ConfigError(seen + ": unknown key");
    node = &(*node)[parts[i]];
  }
  if (node->is_object()) throw ConfigError(dotted + ": names a section, not a value");
  Json value;
  try {
    value = Json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  *node = std::move(value);
}

/// Preset, then file, then dotted overrides; the result is validated.
inline SimConfig load_config(const std::string& preset_name, const std::optional<std::string>& file,
                             const std::vector<std::pair<std::string, std::string>>& overrides) {
  SimConfig c = preset(preset_name);
  if (file) c = from_json(read_json_file(*file), c);
  if (overrides.empty()) {
    validate(c);
    return c;
  }
  Json doc = to_json(c);
  for (const auto& [key, value] : overrides) apply_override(doc, key, value);
  return from_json(doc, c);
}

inline bool operator==(const SimConfig& a, const SimConfig& b) { return to_json(a) == to_json(b); }

}  // namespace mhdtc
