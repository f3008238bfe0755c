#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "mhdtc/mhdtc.hpp"

namespace {

// Every leaf of the config document, as "section.key".
void collect_leaves(const mhdtc::Json& j, const std::string& prefix, std::vector<std::string>& out) {
  for (const auto& item : j.items()) {
    const std::string path = prefix.empty() ? item.key() : prefix + "." + item.key();
    if (item.value().is_object())
      collect_leaves(item.value(), path, out);
    else
      out.push_back(path);
  }
}

void print_checks(const mhdtc::ExperimentResult& r) {
  for (const auto& c : r.checks)
    std::fprintf(stderr, "%s %s: %.10g (%s)%s%s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.value,
                 c.limit.c_str(), c.detail.empty() ? "" : " - ", c.detail.c_str());
  std::fprintf(stderr, "%s: %s, outputs in %s\n", r.command.c_str(), r.passed() ? "all checks passed" : "checks FAILED",
               r.dir.string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MHD Taylor-Couette instability lab"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string preset = "paper-default";
  std::optional<std::string> config_file;
  bool print_config = false;
  app.add_option("--preset", preset, "named starting configuration (paper-default, smoke)");
  app.add_option("--config", config_file, "JSON config file applied on top of the preset");
  app.add_flag("--print-config", print_config, "print the resolved config and exit");

  std::vector<std::string> leaves;
  collect_leaves(mhdtc::to_json(mhdtc::SimConfig{}), "", leaves);
  std::map<std::string, std::string> raw;
  for (const auto& leaf : leaves) app.add_option("--" + leaf, raw[leaf], "override " + leaf)->type_name("VALUE");

  std::string chosen;
  for (const auto& name : mhdtc::experiment_names())
    app.add_subcommand(name, "run the " + name + " experiment")->callback([&chosen, name] { chosen = name; });
  app.add_subcommand("config", "print the resolved config")->callback([&] { print_config = true; });

  CLI11_PARSE(app, argc, argv);

  try {
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& leaf : leaves)
      if (app.count("--" + leaf)) overrides.emplace_back(leaf, raw[leaf]);
    const mhdtc::SimConfig cfg = mhdtc::load_config(preset, config_file, overrides);
    if (print_config || chosen.empty()) {
      std::cout << mhdtc::to_json(cfg).dump(2) << "\n";
      return 0;
    }
    const mhdtc::ExperimentResult r = mhdtc::run_experiment(chosen, cfg);
    std::cout << r.summary.dump(2) << "\n";
    print_checks(r);
    return r.passed() ? 0 : 1;
  } catch (const mhdtc::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const mhdtc::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  }
}
