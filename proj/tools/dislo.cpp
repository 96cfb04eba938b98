// dislo: run a scenario config through the static check, Pfaff
// reconstruction, time evolution or a convergence study.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dislo/app.hpp"

namespace fs = std::filesystem;

namespace {

void write_outputs(const dislo::Report& r, const dislo::ScenarioConfig& c, const fs::path& out) {
  fs::create_directories(out);
  {
    std::ofstream os(out / "report.json");
    os << dislo::to_json(r).dump(2) << '\n';
  }
  std::ofstream os(out / c.diagnostics_path);
  dislo::write_ndjson(os, r.diagnostics);
}

void print_summary(const dislo::Report& r) {
  std::cout << r.command << " " << r.scenario << ": " << r.summary.dump() << '\n';
  if (r.observed_order) std::cout << "observed order " << *r.observed_order << '\n';
  for (const auto& v : r.violations) std::cout << "violation: " << v << '\n';
  if (r.failure) std::cout << "failure: " << *r.failure << '\n';
  std::cout << "exit " << r.exit_code << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Real-space dislocation kinematics: check, reconstruct, evolve, converge"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  bool quiet = false;
  int refine = 1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "scenario JSON")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_flag("--quiet", quiet, "suppress the summary on stdout");
  };
  CLI::App* check = app.add_subcommand("check", "static invariants of the initial state");
  CLI::App* reconstruct = app.add_subcommand("reconstruct", "Pfaff reconstruction round trip");
  CLI::App* evolve = app.add_subcommand("evolve", "RK4 time evolution with monitors");
  CLI::App* converge = app.add_subcommand("converge", "refinement study of one probe");
  for (CLI::App* s : {check, reconstruct, evolve, converge}) add_common(s);
  converge->add_option("--refine", refine, "number of 2x refinements (levels = N + 1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : dislo::kExitConfig;
  }

  try {
    const dislo::ScenarioConfig c = dislo::load_config(config_path);
    dislo::Report r;
    if (*check) r = dislo::run_check(c);
    else if (*reconstruct) r = dislo::run_reconstruct(c);
    else if (*evolve) r = dislo::run_evolve(c, fs::path(out_dir));
    else r = dislo::run_convergence(c, refine + 1);
    write_outputs(r, c, out_dir);
    if (!quiet) print_summary(r);
    return r.exit_code;
  } catch (const dislo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return dislo::kExitConfig;
  } catch (const dislo::InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return dislo::kExitConfig;
  } catch (const dislo::NumericalBlowUp& e) {
    std::cerr << "blow-up: " << e.what() << '\n';
    return dislo::kExitBlowUp;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
