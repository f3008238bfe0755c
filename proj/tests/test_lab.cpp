#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "mhdtc/mhdtc.hpp"

using namespace mhdtc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mhdtc_test_lab_" + name);
  fs::remove_all(p);
  return p;
}

std::string error_of(const Json& doc) {
  try {
    from_json(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

SimConfig smoke_in(const fs::path& dir) {
  SimConfig c = preset("smoke");
  c.output.dir = dir.string();
  return c;
}

}  // namespace

TEST(Config, PaperDefaultPreset) {
  const SimConfig c = preset("paper-default");
  EXPECT_EQ(c.geometry.r1, 1.0);
  EXPECT_EQ(c.geometry.r2, 2.0);
  EXPECT_EQ(c.wall.beta1, 3.0);
  EXPECT_EQ(c.wall.beta2, 1.0);
  EXPECT_EQ(c.physics.eps, 1e-3);
  EXPECT_FALSE(c.physics.nu.has_value());
  EXPECT_EQ(c.physics.nu_factor, 10.0);
  EXPECT_EQ(c.resolution.nr, 96);
  EXPECT_EQ(c.resolution.mmax, 16);
  EXPECT_EQ(c.resolution.kmax, 16);
  EXPECT_EQ(c.experiment.p, 2.0);
  EXPECT_EQ(c.experiment.chi_factor, 0.01);
  EXPECT_EQ(c.experiment.delta_list, (std::vector<double>{1e-3, 1e-4, 1e-5, 1e-6}));
  EXPECT_NO_THROW(validate(c));
}

TEST(Config, DerivedViscosityAndThreshold) {
  const SimConfig c;
  const TCProfile p = c.profile();
  EXPECT_DOUBLE_EQ(c.nu_value(), 10.0 * tc_w1inf_norm(p, *c.grid()));
  EXPECT_DOUBLE_EQ(c.chi_value(), 0.01 * tc_lp_norm(p, *c.grid(), 2.0, 1.0));
  SimConfig d = c;
  d.physics.nu = 2.5;
  d.experiment.chi = 0.3;
  EXPECT_EQ(d.nu_value(), 2.5);
  EXPECT_EQ(d.chi_value(), 0.3);
}

TEST(Config, NegativeViscosityNamesTheField) {
  const std::string msg = error_of(Json::parse(R"({"physics": {"nu": -1}})"));
  EXPECT_NE(msg.find("physics.nu"), std::string::npos) << msg;
}

TEST(Config, RejectsUnknownKeysAndWrongTypes) {
  EXPECT_NE(error_of(Json::parse(R"({"physics": {"epsilon": 1}})")).find("physics.epsilon: unknown key"),
            std::string::npos);
  EXPECT_NE(error_of(Json::parse(R"({"colour": 1})")).find("colour: unknown key"), std::string::npos);
  EXPECT_NE(error_of(Json::parse(R"({"resolution": {"nr": 9.5}})")).find("resolution.nr"), std::string::npos);
  EXPECT_NE(error_of(Json::parse(R"({"physics": {"nu": "big"}})")).find("physics.nu"), std::string::npos);
  EXPECT_NE(error_of(Json::parse(R"({"geometry": {"r1": 2, "r2": 1}})")).find("geometry.r2"), std::string::npos);
  EXPECT_NE(error_of(Json::parse(R"({"experiment": {"alpha_list": [1.5]}})")).find("experiment.alpha_list"),
            std::string::npos);
  EXPECT_THROW(preset("nonexistent"), ConfigError);
}

TEST(Config, ExactRoundTrip) {
  SimConfig c = preset("smoke");
  c.physics.nu = 0.1 + 0.2;  // not exactly representable as a short decimal
  c.experiment.eps_list = {1.0 / 3.0, 1.0 / 9.0, 1.0 / 27.0, 1.0 / 81.0};
  const SimConfig back = from_json(Json::parse(to_json(c).dump()));
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
  EXPECT_EQ(*back.physics.nu, *c.physics.nu);
  EXPECT_TRUE(back == c);
}

TEST(Config, DottedOverrides) {
  const SimConfig c = load_config("paper-default", std::nullopt,
                                  {{"physics.eps", "0.01"}, {"physics.nu", "auto"}, {"experiment.delta_list", "[1e-2,1e-3]"},
                                   {"output.run_id", "trial"}});
  EXPECT_EQ(c.physics.eps, 0.01);
  EXPECT_FALSE(c.physics.nu);
  EXPECT_EQ(c.experiment.delta_list, (std::vector<double>{1e-2, 1e-3}));
  EXPECT_EQ(c.output.run_id, "trial");
  EXPECT_THROW(load_config("paper-default", std::nullopt, {{"physics.epsilon", "1"}}), ConfigError);
  EXPECT_THROW(load_config("paper-default", std::nullopt, {{"physics", "1"}}), ConfigError);
  EXPECT_THROW(load_config("paper-default", std::nullopt, {{"physics.nu", "-1"}}), ConfigError);
}

TEST(Config, FileLayersOverPreset) {
  const fs::path dir = scratch("file");
  ensure_directory(dir);
  write_text(dir / "c.json", R"({"resolution": {"nr": 40}})");
  const SimConfig c = load_config("smoke", (dir / "c.json").string(), {});
  EXPECT_EQ(c.resolution.nr, 40);
  EXPECT_EQ(c.resolution.mmax, preset("smoke").resolution.mmax);
  write_text(dir / "bad.json", "{ not json");
  EXPECT_THROW(load_config("smoke", (dir / "bad.json").string(), {}), ConfigError);
  EXPECT_THROW(load_config("smoke", (dir / "missing.json").string(), {}), IoError);
}

TEST(Emit, HashChangesIffConfigChanges) {
  const SimConfig a;
  SimConfig b;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.physics.eps = std::nextafter(a.physics.eps, 1.0);
  EXPECT_NE(config_hash(a), config_hash(b));
  b = a;
  b.output.run_id = "other";
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Emit, Fnv1aReferenceValues) {
  // Published FNV-1a 64-bit test vectors.
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ull);
}

TEST(Emit, MissingDirectoryIsCreated) {
  const fs::path dir = scratch("dirs") / "a" / "b";
  EXPECT_FALSE(fs::exists(dir));
  ensure_directory(dir);
  EXPECT_TRUE(fs::is_directory(dir));
  write_text(dir / "f.txt", "x");
  EXPECT_THROW(ensure_directory(dir / "f.txt"), IoError);
  EXPECT_THROW(write_text(dir / "no" / "such" / "f.txt", "x"), IoError);
}

TEST(Emit, CsvTableFormatting) {
  CsvTable t({"a", "b", "c"});
  t.add({1, 0.1, "x"});
  EXPECT_EQ(t.text(), "a,b,c\n1,0.10000000000000001,x\n");
  EXPECT_THROW(t.add({1, 2}), InvalidArgument);
}

TEST(Lab, SteadyCheckPassesAndIsDeterministic) {
  const fs::path dir = scratch("steady");
  SimConfig c = smoke_in(dir);
  const ExperimentResult r1 = run_steady_check(c);
  EXPECT_TRUE(r1.passed());
  EXPECT_EQ(r1.summary["coefficients"]["a1"].get<double>(), -2.0);
  EXPECT_NEAR(r1.summary["coefficients"]["a2"].get<double>(), 1.0 / std::log(2.0), 1e-14);
  const std::string csv = read_text(r1.dir / "steady_audit.csv");
  const std::string ids = read_text(r1.dir / "identities.csv");
  const Json m1 = Json::parse(read_text(r1.dir / "manifest.json"));
  const ExperimentResult r2 = run_steady_check(c);
  EXPECT_EQ(read_text(r2.dir / "steady_audit.csv"), csv);
  EXPECT_EQ(read_text(r2.dir / "identities.csv"), ids);
  const Json m2 = Json::parse(read_text(r2.dir / "manifest.json"));
  EXPECT_EQ(m1["config_hash"], m2["config_hash"]);
  EXPECT_EQ(m1["checks"], m2["checks"]);
  EXPECT_TRUE(m1["passed"].get<bool>());
  EXPECT_EQ(m1["command"], "steady-check");
  EXPECT_TRUE(m1.contains("timestamp"));
  EXPECT_TRUE(m1["versions"].contains("eigen"));
}

TEST(Lab, SpectrumOutputsAreReproducible) {
  const fs::path dir = scratch("spectrum");
  const SimConfig c = smoke_in(dir);
  EigenCache::instance().clear();
  const ExperimentResult r1 = run_spectrum(c);
  const std::string a = read_text(r1.dir / "spectrum.csv");
  const std::string b = read_text(r1.dir / "scan_tops.csv");
  EigenCache::instance().clear();
  const ExperimentResult r2 = run_spectrum(c);
  EXPECT_EQ(read_text(r2.dir / "spectrum.csv"), a);
  EXPECT_EQ(read_text(r2.dir / "scan_tops.csv"), b);
  EXPECT_EQ(a.substr(0, a.find('\n')), "m,k,re,im,residual,div_score,drift");
  EXPECT_EQ(r1.summary["modes_scanned"].get<int>(), static_cast<int>(scan_modes({4, 4}).size()));
  // Every retained row passes the filter thresholds it was selected by.
  EXPECT_LE(r1.check("leader_residual").value, 1e-8);
}

TEST(Lab, UnknownExperimentRejected) {
  EXPECT_THROW(run_experiment("teleport", SimConfig{}), InvalidArgument);
  EXPECT_EQ(experiment_names().size(), 8u);
}
