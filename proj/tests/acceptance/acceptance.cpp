// End-to-end acceptance run at the default preset.  Prints one
// PASS/FAIL line per criterion and exits non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mhdtc/mhdtc.hpp"

namespace {

using mhdtc::Check;
using mhdtc::ExperimentResult;

struct Verdict {
  bool passed = false;
  std::string detail;
};

std::string brief(const Check& c) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s=%.6g %s%s", c.name.c_str(), c.value, c.limit.c_str(), c.passed ? "" : " [x]");
  return buf;
}

// Verdict over the checks whose names satisfy `pick`.
Verdict collect(const ExperimentResult& r, const std::function<bool(const std::string&)>& pick) {
  Verdict v{true, ""};
  int n = 0;
  for (const auto& c : r.checks) {
    if (!pick(c.name)) continue;
    ++n;
    v.passed = v.passed && c.passed;
    v.detail += (v.detail.empty() ? "" : "; ") + brief(c);
  }
  if (n == 0) return {false, "no checks recorded"};
  return v;
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

std::vector<std::string> csv_files(const ExperimentResult& r) {
  std::vector<std::string> out;
  for (const auto& f : r.files)
    if (f.size() > 4 && f.compare(f.size() - 4, 4, ".csv") == 0) out.push_back(f);
  return out;
}

Verdict same_csv(const ExperimentResult& a, const ExperimentResult& b) {
  const auto fa = csv_files(a), fb = csv_files(b);
  if (fa != fb || fa.empty()) return {false, a.command + ": file lists differ"};
  for (const auto& f : fa)
    if (mhdtc::read_text(a.dir / f) != mhdtc::read_text(b.dir / f)) return {false, a.command + "/" + f + " differs"};
  return {true, a.command + ": " + std::to_string(fa.size()) + " CSV files identical"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria at the default preset"};
  std::string out = "acceptance_out";
  std::vector<int> only;
  app.add_option("--out", out, "output directory");
  app.add_option("--only", only, "criteria to run (default: all)");
  CLI11_PARSE(app, argc, argv);

  mhdtc::SimConfig cfg = mhdtc::preset("paper-default");
  cfg.output.dir = out;
  cfg.output.run_id = "acceptance";
  const std::set<int> wanted(only.begin(), only.end());
  const auto enabled = [&](int n) { return wanted.empty() || wanted.count(n) > 0; };

  std::map<int, Verdict> verdicts;
  std::map<std::string, ExperimentResult> runs;
  const auto run = [&](const std::string& name, const mhdtc::SimConfig& c) -> const ExperimentResult& {
    const auto t0 = std::chrono::steady_clock::now();
    std::fprintf(stderr, "[acceptance] %s (%s) ...\n", name.c_str(), c.output.run_id.c_str());
    ExperimentResult r = mhdtc::run_experiment(name, c);
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fprintf(stderr, "[acceptance] %s done in %.1f s\n", name.c_str(), s);
    return runs.insert_or_assign(name + "@" + c.output.run_id, std::move(r)).first->second;
  };
  const auto guarded = [&](std::initializer_list<int> ids, const std::function<void()>& body) {
    try {
      body();
    } catch (const std::exception& e) {
      for (int id : ids) verdicts[id] = {false, std::string("error: ") + e.what()};
    }
  };

  // Ordered so that the dynamo scan is computed once and reused from the cache.
  if (enabled(1) || enabled(2))
    guarded({1, 2}, [&] {
      const auto& r = run("steady-check", cfg);
      verdicts[1] = collect(r, [](const std::string& n) { return !starts_with(n, "identity_"); });
      verdicts[2] = collect(r, [](const std::string& n) { return starts_with(n, "identity_"); });
    });
  if (enabled(3))
    guarded({3}, [&] { verdicts[3] = collect(run("spectrum", cfg), [](const std::string&) { return true; }); });
  if (enabled(5))
    guarded({5}, [&] { verdicts[5] = collect(run("evolve-linear", cfg), [](const std::string&) { return true; }); });
  if (enabled(7) || enabled(9))
    guarded({7, 9}, [&] {
      const auto& r = run("instability-sweep", cfg);
      verdicts[7] = collect(r, [](const std::string& n) { return !starts_with(n, "shortest_run_"); });
      verdicts[9] = collect(r, [](const std::string& n) { return starts_with(n, "shortest_run_"); });
    });
  if (enabled(8))
    guarded({8}, [&] { verdicts[8] = collect(run("energy-transfer", cfg), [](const std::string&) { return true; }); });
  if (enabled(6))
    guarded({6}, [&] { verdicts[6] = collect(run("semigroup-check", cfg), [](const std::string&) { return true; }); });
  if (enabled(4))
    guarded({4}, [&] { verdicts[4] = collect(run("scaling", cfg), [](const std::string&) { return true; }); });
  if (enabled(10))
    guarded({10}, [&] {
      // Fresh process state: the eigen cache is emptied so nothing is reused.
      mhdtc::SimConfig again = cfg;
      again.output.run_id = "acceptance-repeat";
      Verdict v{true, ""};
      for (const std::string name : {"spectrum", "instability-sweep"}) {
        mhdtc::EigenCache::instance().clear();
        if (!runs.count(name + "@" + cfg.output.run_id)) run(name, cfg);
        mhdtc::EigenCache::instance().clear();
        const auto& second = run(name, again);
        const Verdict one = same_csv(runs.at(name + "@" + cfg.output.run_id), second);
        v.passed = v.passed && one.passed;
        v.detail += (v.detail.empty() ? "" : "; ") + one.detail;
      }
      verdicts[10] = v;
    });

  static const char* titles[11] = {"",
                                   "steady-state audit",
                                   "calculus identities",
                                   "dynamo growing mode",
                                   "eps^(1/3) scaling",
                                   "linear exponential growth",
                                   "semigroup smoothing",
                                   "nonlinear escape-time law",
                                   "energy transfer",
                                   "conservation and constraints",
                                   "determinism"};
  bool all = true;
  for (int n = 1; n <= 10; ++n) {
    if (!enabled(n)) continue;
    const Verdict& v = verdicts[n];
    all = all && v.passed;
    std::printf("criterion %2d %s: %s | %s\n", n, v.passed ? "PASS" : "FAIL", titles[n], v.detail.c_str());
  }
  std::fflush(stdout);
  return all ? 0 : 1;
}
