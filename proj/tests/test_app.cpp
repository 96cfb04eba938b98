#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "dislo/app.hpp"

using namespace dislo;
namespace fs = std::filesystem;

namespace {

const char* kMinimal = R"({"initial": {"distortion": {"name": "flat"}}})";

json minimal() { return json::parse(kMinimal); }

void expect_config_error(const json& j, const std::string& fragment) {
  try {
    (void)parse_config(j);
    ADD_FAILURE() << "expected ConfigError for " << j.dump();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

ScenarioConfig small(const std::string& text) {
  ScenarioConfig c = parse_config_text(text);
  return c;
}

fs::path scratch(const std::string& leaf) {
  const auto p = fs::temp_directory_path() / ("dislo_app_" + leaf);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DISLO_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const auto p = dir / "config.json";
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST(Config, MinimalUsesDefaults) {
  const ScenarioConfig c = parse_config(minimal());
  EXPECT_EQ(c.dims, (std::array<int, 3>{16, 16, 16}));
  EXPECT_EQ(c.chart.name, "identity");
  EXPECT_EQ(c.drivers.name, "zero");
  EXPECT_FALSE(c.dt.has_value());
  EXPECT_EQ(c.steps, 0);
  EXPECT_EQ(c.form, Form::Hatted);
  EXPECT_TRUE(c.expect_realizable);
  EXPECT_EQ(c.thresholds.concordance_max, 1e-10);
  EXPECT_EQ(c.thresholds.min_order, 3.5);
  EXPECT_EQ(c.pfaff.relative_tolerance, 1e-2);
}

TEST(Config, FullSectionsParse) {
  const ScenarioConfig c = small(R"({
    "name": "x",
    "grid": {"dims": [8, 10, 12], "lengths": [1, 2, 3], "origin": [0.5, 0, 0]},
    "chart": {"name": "identity"},
    "initial": {"distortion": {"name": "sin-shear", "params": {"amplitude": 0.2}}, "plastic": true},
    "drivers": {"name": "driven-J", "params": {"amplitude": 0.1, "omega": 0.2}},
    "integrator": {"dt": 0.02, "dt_max": 0.1, "steps": 7, "monitor_every": 3,
                   "track_form_gap": false, "form": "reference"},
    "outputs": {"diagnostics": "d.ndjson", "fields": "f", "dump_every": 2},
    "reconstruct": {"gauge_rotation_deg": 30, "relative_tolerance": 0.05,
                    "absolute_tolerance": 1e-9, "axis_order": [2, 1, 0]},
    "convergence": {"probe": "evolve"},
    "thresholds": {"curvature_max": 1e-3, "min_order": 3.0}
  })");
  EXPECT_EQ(c.name, "x");
  EXPECT_EQ(c.dims, (std::array<int, 3>{8, 10, 12}));
  EXPECT_EQ(c.lengths[2], 3.0);
  EXPECT_EQ(c.distortion->params.at("amplitude"), 0.2);
  EXPECT_TRUE(c.plastic);
  EXPECT_EQ(*c.dt, 0.02);
  EXPECT_EQ(c.form, Form::Reference);
  EXPECT_FALSE(c.track_form_gap);
  EXPECT_EQ(c.dump_every, 2);
  EXPECT_EQ(c.pfaff.axis_order, (std::array<int, 3>{2, 1, 0}));
  EXPECT_EQ(c.convergence_probe, "evolve");
  EXPECT_EQ(c.thresholds.curvature_max, 1e-3);
  EXPECT_EQ(c.thresholds.divergency_max, 1e-4);
}

TEST(Config, UnknownKeysRejectedAtEveryLevel) {
  json j = minimal();
  j["colour"] = 1;
  expect_config_error(j, "config.colour");
  j = minimal();
  j["grid"] = {{"dims", {8, 8, 8}}, {"spacing", 1}};
  expect_config_error(j, "config.grid.spacing");
  j = minimal();
  j["integrator"] = {{"steps", 1}, {"cfl", 0.5}};
  expect_config_error(j, "config.integrator.cfl");
  j = minimal();
  j["initial"]["distortion"]["extra"] = true;
  expect_config_error(j, "config.initial.distortion.extra");
  j = minimal();
  j["thresholds"] = {{"curvature", 1}};
  expect_config_error(j, "config.thresholds.curvature");
}

TEST(Config, UnknownCatalogParamsRejected) {
  json j = minimal();
  j["initial"]["distortion"] = {{"name", "sin-shear"}, {"params", {{"amp", 0.1}}}};
  expect_config_error(j, "amp");
  j = minimal();
  j["drivers"] = {{"name", "rotation"}, {"params", {{"speed", 1}}}};
  expect_config_error(j, "speed");
  j = minimal();
  j["drivers"] = {{"name", "rotation"}, {"params", {{"omega", "fast"}}}};
  expect_config_error(j, "expected a number");
}

TEST(Config, InitialModeMustBeUnique) {
  expect_config_error(json::parse(R"({"grid": {"dims": [8, 8, 8]}})"), "config.initial");
  expect_config_error(json::parse(R"({"initial": {}})"), "exactly one");
  expect_config_error(
      json::parse(R"({"initial": {"distortion": {"name": "flat"}, "direct": {"name": "flat"}}})"),
      "exactly one");
}

TEST(Config, BadValuesRejected) {
  json j = minimal();
  j["chart"] = {{"name", "spherical"}};
  expect_config_error(j, "catalog");
  j = minimal();
  j["drivers"] = {{"name", "shear"}};
  expect_config_error(j, "catalog");
  j = minimal();
  j["grid"] = {{"dims", {4, 8, 8}}};
  expect_config_error(j, "config.grid");
  j = minimal();
  j["grid"] = {{"dims", {8, 8}}};
  expect_config_error(j, "array of 3");
  j = minimal();
  j["integrator"] = {{"dt", -0.1}};
  expect_config_error(j, "positive");
  j = minimal();
  j["integrator"] = {{"form", "implicit"}};
  expect_config_error(j, "hatted");
  j = minimal();
  j["integrator"] = {{"steps", 1.5}};
  expect_config_error(j, "integer");
  j = minimal();
  j["convergence"] = {{"probe", "energy"}};
  expect_config_error(j, "unknown probe");
  j = minimal();
  j["reconstruct"] = {{"axis_order", {0, 0, 1}}};
  expect_config_error(j, "axis_order");
  j = minimal();
  j["chart"] = {{"name", "warped"}};
  j["grid"] = {{"lengths", {1, 2, 3}}};
  expect_config_error(j, "cubic");
  EXPECT_THROW(parse_config_text("{not json"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, ShippedScenariosParse) {
  int count = 0;
  for (const auto& e : fs::directory_iterator(DISLO_SCENARIO_DIR)) {
    if (e.path().extension() != ".json") continue;
    EXPECT_NO_THROW(load_config(e.path())) << e.path();
    ++count;
  }
  EXPECT_GE(count, 6);
}

TEST(Report, FitOrderRecoversPowerLaw) {
  std::vector<ConvergenceRow> rows;
  for (double h : {0.4, 0.2, 0.1}) rows.push_back({h, 0.0, 3.0 * std::pow(h, 4)});
  EXPECT_NEAR(*fit_order(rows), 4.0, 1e-12);
  rows.push_back({0.05, 0.0, 0.0});  // ignored
  EXPECT_NEAR(*fit_order(rows), 4.0, 1e-12);
  EXPECT_FALSE(fit_order({{0.1, 0.0, 1.0}}).has_value());
}

TEST(Report, ExitCodes) {
  Report r;
  r.finish();
  EXPECT_EQ(r.exit_code, kExitOk);
  r.check(false, "x");
  r.finish();
  EXPECT_EQ(r.exit_code, kExitThreshold);
  r.failure = "boom";
  r.finish();
  EXPECT_EQ(r.exit_code, kExitBlowUp);
  EXPECT_EQ(number_or_flag(std::nan("")), json("nan"));
  EXPECT_EQ(number_or_flag(-INFINITY), json("-inf"));
  const json j = to_json(r);
  EXPECT_EQ(j.at("exit_code"), 4);
  EXPECT_EQ(j.at("failure"), "boom");
}

TEST(Run, CheckFlatAndContorsion) {
  const Report flat = run_check(small(R"({"grid": {"dims": [8, 8, 8]},
      "initial": {"distortion": {"name": "flat"}}})"));
  EXPECT_EQ(flat.exit_code, 0) << to_json(flat).dump();
  EXPECT_EQ(flat.summary.at("curvature_sup"), 0.0);

  const std::string cont = R"({"grid": {"dims": [8, 8, 8]},
      "initial": {"direct": {"name": "contorsion-const"}, "expect_realizable": EXPECT}})";
  auto with = [&](const char* v) {
    std::string s = cont;
    s.replace(s.find("EXPECT"), 6, v);
    return run_check(small(s));
  };
  const Report ok = with("false");
  EXPECT_EQ(ok.exit_code, 0) << to_json(ok).dump();
  EXPECT_EQ(ok.summary.at("realizable"), false);
  EXPECT_NEAR(ok.summary.at("curvature_sup").get<double>(), 0.25, 1e-14);
  EXPECT_LE(ok.summary.at("divergency_sup").get<double>(), 1e-15);
  const Report bad = with("true");
  EXPECT_EQ(bad.exit_code, kExitThreshold);
}

TEST(Run, ReconstructRecoversRotatedGauge) {
  const Report r = run_reconstruct(small(R"({"grid": {"dims": [16, 16, 16]},
      "initial": {"distortion": {"name": "sin-shear"}},
      "reconstruct": {"gauge_rotation_deg": 30},
      "thresholds": {"roundtrip_max": 1e-3}})"));
  EXPECT_EQ(r.exit_code, 0) << to_json(r).dump();
  EXPECT_LE(r.summary.at("gauge_base_error").get<double>(), 1e-12);
  EXPECT_LE(r.summary.at("orthogonality_residual").get<double>(), 1e-12);
  ASSERT_TRUE(r.observed_order.has_value());
  EXPECT_GT(*r.observed_order, 3.0);
}

TEST(Run, ReconstructRefusesCurvedState) {
  const Report r = run_reconstruct(small(R"({"grid": {"dims": [8, 8, 8]},
      "initial": {"direct": {"name": "contorsion-const"}, "expect_realizable": false}})"));
  EXPECT_EQ(r.exit_code, kExitThreshold);
  EXPECT_EQ(r.summary.at("compatible"), false);
}

TEST(Run, EvolveCadenceAndDeterminism) {
  const std::string text = R"({"grid": {"dims": [8, 8, 8]},
      "initial": {"distortion": {"name": "sin-shear"}, "plastic": true},
      "drivers": {"name": "driven-J"},
      "integrator": {"dt": 0.05, "steps": 5, "monitor_every": 2}})";
  const Report a = run_evolve(small(text));
  const Report b = run_evolve(small(text));
  EXPECT_EQ(a.exit_code, 0) << to_json(a).dump();
  ASSERT_EQ(a.diagnostics.size(), 4u);  // t = 0, step 2, step 4, step 5
  EXPECT_NEAR(a.diagnostics.back().time, 0.25, 1e-15);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}

TEST(Run, EvolveBlowUpIsReported) {
  const Report r = run_evolve(small(R"({"grid": {"dims": [8, 8, 8]},
      "initial": {"distortion": {"name": "sin-shear", "params": {"amplitude": 0.5}}},
      "drivers": {"name": "rotation", "params": {"omega": 20}},
      "integrator": {"dt": 1.0, "steps": 20}})"));
  EXPECT_EQ(r.exit_code, kExitBlowUp) << to_json(r).dump();
  ASSERT_TRUE(r.failure.has_value());
}

TEST(Run, ConvergenceNeedsTwoLevels) {
  const ScenarioConfig c = small(R"({"grid": {"dims": [8, 8, 8]},
      "initial": {"distortion": {"name": "sin-shear"}},
      "convergence": {"probe": "derivative"}})");
  EXPECT_THROW(run_convergence(c, 1), InvalidArgument);
  const Report r = run_convergence(c, 3);
  ASSERT_EQ(r.convergence.size(), 3u);
  EXPECT_EQ(r.exit_code, 0) << to_json(r).dump();
  EXPECT_GT(*r.observed_order, 3.5);
  ScenarioConfig d = c;
  d.distortion.reset();
  d.direct = NamedParams{"flat", {}};
  EXPECT_THROW(run_convergence(d, 2), ConfigError);
}

// -- command line ---------------------------------------------------------------

TEST(Cli, ExitCodesAndOutputs) {
  const fs::path dir = scratch("cli");
  const std::string flat = (fs::path(DISLO_SCENARIO_DIR) / "flat.json").string();
  EXPECT_EQ(run_cli("check --config " + flat + " --out " + (dir / "a").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "a" / "report.json"));
  EXPECT_TRUE(fs::exists(dir / "a" / "diagnostics.ndjson"));
  const json rep = json::parse(std::ifstream(dir / "a" / "report.json"));
  EXPECT_EQ(rep.at("command"), "check");
  EXPECT_EQ(rep.at("exit_code"), 0);

  const std::string cont = (fs::path(DISLO_SCENARIO_DIR) / "contorsion-const.json").string();
  EXPECT_EQ(run_cli("reconstruct --config " + cont + " --out " + (dir / "b").string()),
            kExitThreshold);

  const fs::path bad = write_config(dir, R"({"initial": {"distortion": {"name": "flat"}}, "typo": 1})");
  EXPECT_EQ(run_cli("check --config " + bad.string() + " --out " + (dir / "c").string()),
            kExitConfig);
  EXPECT_EQ(run_cli("check"), kExitConfig);
  EXPECT_EQ(run_cli("bogus --config " + flat), kExitConfig);
  EXPECT_EQ(run_cli("converge --refine 0 --config " + flat + " --out " + (dir / "d").string()),
            kExitConfig);
}

TEST(Cli, BlowUpExitCode) {
  const fs::path dir = scratch("cli_blowup");
  const fs::path cfg = write_config(dir, R"({"grid": {"dims": [8, 8, 8]},
      "initial": {"distortion": {"name": "sin-shear", "params": {"amplitude": 0.5}}},
      "drivers": {"name": "rotation", "params": {"omega": 20}},
      "integrator": {"dt": 1.0, "steps": 20}})");
  EXPECT_EQ(run_cli("evolve --config " + cfg.string() + " --out " + (dir / "o").string()),
            kExitBlowUp);
  const json rep = json::parse(std::ifstream(dir / "o" / "report.json"));
  EXPECT_TRUE(rep.contains("failure"));
}

TEST(Cli, EvolveWritesFieldDumps) {
  const fs::path dir = scratch("cli_dump");
  const fs::path cfg = write_config(dir, R"({"grid": {"dims": [8, 8, 8]},
      "initial": {"distortion": {"name": "sin-shear"}},
      "drivers": {"name": "rotation"},
      "integrator": {"dt": 0.05, "steps": 4, "monitor_every": 2},
      "outputs": {"diagnostics": "diag.ndjson", "fields": "fields", "dump_every": 2}})");
  const fs::path out = dir / "o";
  ASSERT_EQ(run_cli("evolve --quiet --config " + cfg.string() + " --out " + out.string()), 0);
  for (const char* f : {"Ghat_0.vtk", "Ghat_2.vtk", "R_4.vtk", "Ghat_4.tdgf", "R_4.tdgf"})
    EXPECT_TRUE(fs::exists(out / "fields" / f)) << f;
  std::ifstream nd(out / "diag.ndjson");
  EXPECT_EQ(read_ndjson(nd).size(), 3u);
  const TensorField G = read_binary_file(out / "fields" / "Ghat_4.tdgf", Grid({8, 8, 8}, {2 * std::numbers::pi, 2 * std::numbers::pi, 2 * std::numbers::pi}));
  EXPECT_EQ(G.signature(), kLower2);
}
