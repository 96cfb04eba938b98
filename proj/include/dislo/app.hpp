#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dislo/errors.hpp"
#include "dislo/evolve.hpp"
#include "dislo/geometry.hpp"
#include "dislo/io.hpp"
#include "dislo/reconstruct.hpp"
#include "dislo/scenario.hpp"

namespace dislo {

using json = nlohmann::json;

struct NamedParams {
  std::string name;
  Params params;
};

struct Thresholds {
  double concordance_max = 1e-10;
  double torsion_max = 1e-12;
  /// Static curvature and divergency limits for realizable initial states.
  double curvature_max = 1e-5;
  double divergency_max = 1e-4;
  double roundtrip_max = 1e-4;
  double orthogonality_max = 1e-8;
  /// Final curvature must stay below growth * initial + 1e-12.
  double curvature_growth_max = 10.0;
  double form_equiv_max = 1e-8;
  double min_order = 3.5;
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::array<int, 3> dims{16, 16, 16};
  Vec3 lengths{2 * std::numbers::pi, 2 * std::numbers::pi, 2 * std::numbers::pi};
  Vec3 origin{0.0, 0.0, 0.0};
  NamedParams chart{"identity", {}};
  std::optional<NamedParams> distortion;
  std::optional<NamedParams> direct;
  bool plastic = false;
  bool expect_realizable = true;
  NamedParams drivers{"zero", {}};
  std::optional<double> dt;
  double dt_max = 0.05;
  int steps = 0;
  int monitor_every = 10;
  Form form = Form::Hatted;
  bool track_form_gap = true;
  std::string diagnostics_path = "diagnostics.ndjson";
  std::string fields_path = "fields";
  int dump_every = 0;
  /// Rotation angle (degrees, about Burgers axis 3) applied to the Pfaff
  /// initial value before gauge alignment.
  double gauge_rotation_deg = 0.0;
  std::string convergence_probe = "roundtrip";
  PfaffOptions pfaff;
  Thresholds thresholds;

  Grid grid() const { return Grid(dims, lengths, origin); }
};

// -- parsing -------------------------------------------------------------------

namespace detail {

class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }
  ~ObjectReader() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(path_ + "." + k + ": unknown key");
  }
  ObjectReader(const ObjectReader&) = delete;
  ObjectReader& operator=(const ObjectReader&) = delete;

  const json* find(const std::string& k) {
    seen_.insert(k);
    const auto it = j_.find(k);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string at(const std::string& k) const { return path_ + "." + k; }

  double number(const std::string& k, double fallback) {
    const json* v = find(k);
    if (!v) return fallback;
    if (!v->is_number()) throw ConfigError(at(k) + ": expected a number");
    const double d = v->get<double>();
    if (!std::isfinite(d)) throw ConfigError(at(k) + ": must be finite");
    return d;
  }
  int integer(const std::string& k, int fallback) {
    const json* v = find(k);
    if (!v) return fallback;
    if (!v->is_number_integer()) throw ConfigError(at(k) + ": expected an integer");
    return v->get<int>();
  }
  bool boolean(const std::string& k, bool fallback) {
    const json* v = find(k);
    if (!v) return fallback;
    if (!v->is_boolean()) throw ConfigError(at(k) + ": expected true or false");
    return v->get<bool>();
  }
  std::string string(const std::string& k, const std::string& fallback) {
    const json* v = find(k);
    if (!v) return fallback;
    if (!v->is_string()) throw ConfigError(at(k) + ": expected a string");
    return v->get<std::string>();
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline NamedParams parse_named(const json& j, const std::string& path,
                               const std::vector<std::string>& catalog) {
  ObjectReader r(j, path);
  NamedParams np;
  const json* name = r.find("name");
  if (!name || !name->is_string()) throw ConfigError(r.at("name") + ": expected a string");
  np.name = name->get<std::string>();
  if (std::find(catalog.begin(), catalog.end(), np.name) == catalog.end())
    throw ConfigError(r.at("name") + ": '" + np.name + "' is not in the catalog");
  if (const json* p = r.find("params")) {
    ObjectReader pr(*p, r.at("params"));
    for (const auto& [k, v] : p->items()) pr.number(k, 0.0), np.params[k] = v.get<double>();
  }
  return np;
}

template <typename T>
std::array<T, 3> triple(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(path + ": expected an array of 3");
  std::array<T, 3> out{};
  for (int a = 0; a < 3; ++a) {
    if constexpr (std::is_integral_v<T>) {
      if (!j[a].is_number_integer()) throw ConfigError(path + ": expected integers");
    } else if (!j[a].is_number()) {
      throw ConfigError(path + ": expected numbers");
    }
    out[a] = j[a].get<T>();
  }
  return out;
}

}  // namespace detail

inline ScenarioConfig parse_config(const json& j) {
  ScenarioConfig c;
  detail::ObjectReader r(j, "config");
  c.name = r.string("name", c.name);
  if (const json* g = r.find("grid")) {
    detail::ObjectReader gr(*g, "config.grid");
    if (const json* d = gr.find("dims")) c.dims = detail::triple<int>(*d, gr.at("dims"));
    if (const json* l = gr.find("lengths")) c.lengths = detail::triple<double>(*l, gr.at("lengths"));
    if (const json* o = gr.find("origin")) c.origin = detail::triple<double>(*o, gr.at("origin"));
  }
  try {
    (void)c.grid();
  } catch (const InvalidGrid& e) {
    throw ConfigError(std::string("config.grid: ") + e.what());
  }
  if (const json* ch = r.find("chart")) c.chart = detail::parse_named(*ch, "config.chart", chart_names());

  const json* init = r.find("initial");
  if (!init) throw ConfigError("config.initial: required");
  {
    detail::ObjectReader ir(*init, "config.initial");
    if (const json* d = ir.find("distortion"))
      c.distortion = detail::parse_named(*d, "config.initial.distortion", distortion_names());
    if (const json* d = ir.find("direct"))
      c.direct = detail::parse_named(*d, "config.initial.direct", direct_names());
    c.plastic = ir.boolean("plastic", c.plastic);
    c.expect_realizable = ir.boolean("expect_realizable", c.expect_realizable);
    if (c.distortion.has_value() == c.direct.has_value())
      throw ConfigError("config.initial: set exactly one of 'distortion' or 'direct'");
  }
  if (const json* d = r.find("drivers"))
    c.drivers = detail::parse_named(*d, "config.drivers", driver_names());
  if (const json* in = r.find("integrator")) {
    detail::ObjectReader ir(*in, "config.integrator");
    if (ir.find("dt")) c.dt = ir.number("dt", 0.0);
    c.dt_max = ir.number("dt_max", c.dt_max);
    c.steps = ir.integer("steps", c.steps);
    c.monitor_every = ir.integer("monitor_every", c.monitor_every);
    c.track_form_gap = ir.boolean("track_form_gap", c.track_form_gap);
    const std::string form = ir.string("form", "hatted");
    if (form == "hatted") c.form = Form::Hatted;
    else if (form == "reference") c.form = Form::Reference;
    else throw ConfigError(ir.at("form") + ": expected 'hatted' or 'reference'");
    if (c.dt && !(*c.dt > 0.0)) throw ConfigError(ir.at("dt") + ": must be positive");
    if (!(c.dt_max > 0.0)) throw ConfigError(ir.at("dt_max") + ": must be positive");
    if (c.steps < 0) throw ConfigError(ir.at("steps") + ": must be >= 0");
    if (c.monitor_every < 1) throw ConfigError(ir.at("monitor_every") + ": must be >= 1");
  }
  if (const json* o = r.find("outputs")) {
    detail::ObjectReader orr(*o, "config.outputs");
    c.diagnostics_path = orr.string("diagnostics", c.diagnostics_path);
    c.fields_path = orr.string("fields", c.fields_path);
    c.dump_every = orr.integer("dump_every", c.dump_every);
    if (c.dump_every < 0) throw ConfigError(orr.at("dump_every") + ": must be >= 0");
  }
  if (const json* rc = r.find("reconstruct")) {
    detail::ObjectReader rr(*rc, "config.reconstruct");
    c.gauge_rotation_deg = rr.number("gauge_rotation_deg", c.gauge_rotation_deg);
    c.pfaff.relative_tolerance = rr.number("relative_tolerance", c.pfaff.relative_tolerance);
    c.pfaff.absolute_tolerance = rr.number("absolute_tolerance", c.pfaff.absolute_tolerance);
    if (const json* ao = rr.find("axis_order")) {
      c.pfaff.axis_order = detail::triple<int>(*ao, rr.at("axis_order"));
      try {
        detail::validate_axis_order(c.pfaff.axis_order);
      } catch (const InvalidArgument& e) {
        throw ConfigError(rr.at("axis_order") + ": " + e.what());
      }
    }
  }
  if (const json* cv = r.find("convergence")) {
    detail::ObjectReader cr(*cv, "config.convergence");
    c.convergence_probe = cr.string("probe", c.convergence_probe);
    static const std::set<std::string> probes{"derivative", "curvature", "concordance",
                                              "roundtrip", "evolve"};
    if (!probes.count(c.convergence_probe))
      throw ConfigError(cr.at("probe") + ": unknown probe '" + c.convergence_probe + "'");
  }
  if (const json* t = r.find("thresholds")) {
    detail::ObjectReader tr(*t, "config.thresholds");
    Thresholds& th = c.thresholds;
    th.concordance_max = tr.number("concordance_max", th.concordance_max);
    th.torsion_max = tr.number("torsion_max", th.torsion_max);
    th.curvature_max = tr.number("curvature_max", th.curvature_max);
    th.divergency_max = tr.number("divergency_max", th.divergency_max);
    th.roundtrip_max = tr.number("roundtrip_max", th.roundtrip_max);
    th.orthogonality_max = tr.number("orthogonality_max", th.orthogonality_max);
    th.curvature_growth_max = tr.number("curvature_growth_max", th.curvature_growth_max);
    th.form_equiv_max = tr.number("form_equiv_max", th.form_equiv_max);
    th.min_order = tr.number("min_order", th.min_order);
  }
  // Catalog parameter names are validated by building the providers once.
  (void)make_chart(c.chart.name, c.chart.params, c.lengths);
  if (c.distortion) (void)make_distortion_provider(c.distortion->name, c.distortion->params, c.lengths);
  if (c.direct) (void)make_direct_providers(c.direct->name, c.direct->params);
  (void)make_drivers(c.drivers.name, c.drivers.params, c.lengths);
  return c;
}

inline ScenarioConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  return parse_config(j);
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

// -- report ----------------------------------------------------------------------

struct ConvergenceRow {
  double h = 0.0;
  double dt = 0.0;
  double residual = 0.0;
};

struct Report {
  std::string command;
  std::string scenario;
  std::vector<Diagnostics> diagnostics;
  json summary = json::object();
  std::vector<ConvergenceRow> convergence;
  std::optional<double> observed_order;
  std::vector<std::string> violations;
  /// Set when a numerical blow-up ended the run.
  std::optional<std::string> failure;
  int exit_code = 0;

  void check(bool ok, const std::string& what) {
    if (!ok) violations.push_back(what);
  }
  void finish() {
    if (failure) exit_code = 4;
    else exit_code = violations.empty() ? 0 : 2;
  }
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitThreshold = 2;
inline constexpr int kExitConfig = 3;
inline constexpr int kExitBlowUp = 4;

/// JSON value for a double; non-finite values become a flagged string.
inline json number_or_flag(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

inline json to_json(const Report& r) {
  json j;
  j["command"] = r.command;
  j["scenario"] = r.scenario;
  j["exit_code"] = r.exit_code;
  j["summary"] = r.summary;
  j["violations"] = r.violations;
  if (r.failure) j["failure"] = *r.failure;
  json d = json::array();
  for (const auto& x : r.diagnostics) d.push_back(to_json(x));
  j["diagnostics"] = d;
  if (!r.convergence.empty()) {
    json t = json::array();
    for (const auto& row : r.convergence)
      t.push_back({{"h", row.h}, {"dt", row.dt}, {"residual", number_or_flag(row.residual)}});
    j["convergence"] = t;
    j["observed_order"] = r.observed_order ? number_or_flag(*r.observed_order) : json();
  }
  return j;
}

/// Least-squares slope of log(residual) against log(h), over rows with a
/// positive residual. Empty when fewer than two rows qualify.
inline std::optional<double> fit_order(const std::vector<ConvergenceRow>& rows) {
  double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& r : rows) {
    if (!(r.residual > 0.0) || !std::isfinite(r.residual)) continue;
    const double x = std::log(r.h), y = std::log(r.residual);
    n += 1;
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  if (n < 2) return std::nullopt;
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// -- runners ---------------------------------------------------------------------

namespace detail {

struct Prepared {
  Background bg;
  std::optional<RealizedState> realized;
  KinematicState state;
  Drivers drivers;
};

inline Prepared prepare(const ScenarioConfig& c, const Grid& grid) {
  const Chart chart = make_chart(c.chart.name, c.chart.params, c.lengths);
  Background bg = make_background(chart, grid);
  std::optional<RealizedState> realized;
  if (c.distortion)
    realized = realize(make_distortion_provider(c.distortion->name, c.distortion->params, c.lengths), bg);
  KinematicState state =
      realized ? realized->state
               : direct_state(make_direct_providers(c.direct->name, c.direct->params), grid);
  if (c.plastic) {
    TensorField gc(grid, kMixed);
    for (int i = 0; i < 3; ++i)
      std::fill_n(gc.component(TensorField::comp(i, i)), grid.size(), 1.0);
    state.Gcheck = std::move(gc);
  }
  return {std::move(bg), std::move(realized), std::move(state),
          make_drivers(c.drivers.name, c.drivers.params, c.lengths)};
}

inline Mat3 rotation_about_axis3(double deg) {
  const double a = deg * std::numbers::pi / 180.0;
  const double cs = std::cos(a), sn = std::sin(a);
  return Mat3{{{cs, -sn, 0.0}, {sn, cs, 0.0}, {0.0, 0.0, 1.0}}};
}

struct CheckNumbers {
  double concordance = 0.0;
  double concordance_analytic = std::numeric_limits<double>::quiet_NaN();
  double torsion_roundtrip = 0.0;
  double burgers_roundtrip = 0.0;
  CompatibilityReport compat;
  double divergency = 0.0;
};

inline CheckNumbers check_numbers(const ScenarioConfig& c, const Prepared& p) {
  CheckNumbers out;
  const MaterialGeometry mg = material_geometry(p.state, p.bg);
  out.concordance = concordance_residual(p.state.Ghat, mg.dGhat, mg.hat);
  if (p.realized) {
    const Connection hat = connection_from_metric_and_torsion(
        p.state.Ghat, p.realized->dGhat,
        torsion_from_burgers_density(p.state.R, p.bg.metric, p.bg.omega));
    out.concordance_analytic = concordance_residual(p.state.Ghat, p.realized->dGhat, hat);
  }
  const TensorField T = torsion_from_burgers_density(p.state.R, p.bg.metric, p.bg.omega);
  out.torsion_roundtrip = sup_diff(mg.hat.torsion, T);
  out.burgers_roundtrip =
      sup_diff(burgers_density_from_Z(mg.Z, p.bg.metric, p.bg.omega), p.state.R);
  CompatibilityReport rep;
  detail::curvature_scale(mg.hat, c.pfaff, rep);
  out.compat = rep;
  out.divergency = sup_norm(divergency(p.state.R, mg.Z, p.bg));
  return out;
}

struct RoundTrip {
  bool compatible = true;
  double curvature_sup = 0.0;
  double threshold = 0.0;
  double error = std::numeric_limits<double>::quiet_NaN();
  double base_error = std::numeric_limits<double>::quiet_NaN();
  double path_defect = 0.0;
  std::array<double, 3> monodromy{};
  double orthogonality = std::numeric_limits<double>::quiet_NaN();
  bool reflection = false;
};

inline RoundTrip round_trip(const ScenarioConfig& c, const Prepared& p) {
  RoundTrip rt;
  const TensorField dG = gradient(p.state.Ghat);
  const Connection hat = connection_from_metric_and_torsion(
      p.state.Ghat, dG, torsion_from_burgers_density(p.state.R, p.bg.metric, p.bg.omega));
  const CompatibilityReport rep = compatibility_residual(hat, c.pfaff);
  rt.curvature_sup = rep.curvature_sup;
  rt.threshold = rep.threshold;
  rt.path_defect = rep.path_defect;
  rt.monodromy = rep.monodromy;
  Mat3 t0 = identity3();
  if (p.realized) t0 = p.realized->distortion.t.mat(0);
  const Mat3 rot = rotation_about_axis3(c.gauge_rotation_deg);
  t0 = matmul(rot, t0);
  std::optional<Distortion> d;
  try {
    d = integrate_pfaff(hat, t0, 0, c.pfaff);
  } catch (const IncompatibleConnection&) {
    rt.compatible = false;
    return rt;
  }
  if (p.realized) {
    const GaugeMatrix g = gauge_align(*d, p.realized->distortion, 0);
    rt.error = g.global_residual;
    rt.orthogonality = g.orthogonality_residual;
    rt.reflection = g.reflection;
    rt.base_error = 0.0;
    const Mat3 expect = transpose(rot);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) rt.base_error = std::max(rt.base_error, std::abs(g.o[i][j] - expect[i][j]));
  }
  return rt;
}

inline Grid coarsened(const Grid& g) {
  return Grid({g.dim(0) / 2, g.dim(1) / 2, g.dim(2) / 2}, g.lengths(), g.origin());
}

inline bool can_coarsen(const Grid& g) {
  for (int a = 0; a < 3; ++a)
    if (g.dim(a) % 2 != 0 || g.dim(a) / 2 < Grid::kMinPoints) return false;
  return true;
}

}  // namespace detail

/// Static pipeline on the initial state: concordance, torsion round trip,
/// curvature and divergency.
inline Report run_check(const ScenarioConfig& c) {
  Report r;
  r.command = "check";
  r.scenario = c.name;
  const detail::Prepared p = detail::prepare(c, c.grid());
  const detail::CheckNumbers n = detail::check_numbers(c, p);
  const bool realizable = n.compat.compatible;
  r.summary = {{"concordance_sup", n.concordance},
               {"concordance_analytic_sup", number_or_flag(n.concordance_analytic)},
               {"torsion_roundtrip_sup", n.torsion_roundtrip},
               {"burgers_roundtrip_sup", n.burgers_roundtrip},
               {"curvature_sup", n.compat.curvature_sup},
               {"curvature_threshold", n.compat.threshold},
               {"divergency_sup", n.divergency},
               {"realizable", realizable}};
  Diagnostics d;
  d.time = p.state.t;
  d.curvature_sup = n.compat.curvature_sup;
  d.divergency_sup = n.divergency;
  d.concordance_sup = n.concordance;
  r.diagnostics.push_back(d);
  const Thresholds& th = c.thresholds;
  r.check(n.concordance <= th.concordance_max, "concordance_sup above concordance_max");
  r.check(n.torsion_roundtrip <= th.torsion_max, "torsion round trip above torsion_max");
  r.check(realizable == c.expect_realizable,
          realizable ? "state is realizable but expected otherwise"
                     : "state is not realizable (curved connection)");
  if (c.expect_realizable) {
    r.check(n.compat.curvature_sup <= th.curvature_max, "curvature_sup above curvature_max");
    r.check(n.divergency <= th.divergency_max, "divergency_sup above divergency_max");
  }
  r.finish();
  return r;
}

/// Pfaff reconstruction of T from the state's (Ghat, R) and gauge alignment
/// with the known source distortion. Reports the measured order against the
/// grid coarsened by 2 when possible.
inline Report run_reconstruct(const ScenarioConfig& c) {
  Report r;
  r.command = "reconstruct";
  r.scenario = c.name;
  const Grid grid = c.grid();
  const detail::Prepared p = detail::prepare(c, grid);
  const detail::RoundTrip rt = detail::round_trip(c, p);
  r.summary = {{"compatible", rt.compatible},
               {"curvature_sup", rt.curvature_sup},
               {"curvature_threshold", rt.threshold},
               {"path_defect", rt.path_defect},
               {"monodromy", rt.monodromy},
               {"roundtrip_error", number_or_flag(rt.error)},
               {"gauge_base_error", number_or_flag(rt.base_error)},
               {"orthogonality_residual", number_or_flag(rt.orthogonality)},
               {"reflection", rt.reflection}};
  if (!rt.compatible) {
    r.check(false, "incompatible connection: Pfaff system refused");
    r.finish();
    return r;
  }
  if (p.realized) {
    r.check(rt.error <= c.thresholds.roundtrip_max, "roundtrip_error above roundtrip_max");
    r.check(rt.orthogonality <= c.thresholds.orthogonality_max,
            "gauge orthogonality residual above orthogonality_max");
    if (detail::can_coarsen(grid)) {
      // The coarse level only measures truncation error, so its curvature
      // is not held to the compatibility threshold.
      const Grid coarse = detail::coarsened(grid);
      ScenarioConfig cc = c;
      cc.pfaff.check_compatibility = false;
      const detail::RoundTrip rc = detail::round_trip(cc, detail::prepare(cc, coarse));
      r.convergence = {{coarse.min_spacing(), 0.0, rc.error}, {grid.min_spacing(), 0.0, rt.error}};
      r.observed_order = fit_order(r.convergence);
      r.summary["observed_order"] = r.observed_order ? json(*r.observed_order) : json();
    }
  }
  r.finish();
  return r;
}

namespace detail {

struct EvolveResult {
  std::vector<Diagnostics> records;
  KinematicState final_state;
  double dt = 0.0;
  double max_form_gap = 0.0;
  std::optional<std::string> failure;
};

inline EvolveResult evolve_run(const ScenarioConfig& c, const Prepared& p,
                               const std::filesystem::path* out_dir, int steps, double dt) {
  EvolveResult res{{}, p.state, dt, 0.0, std::nullopt};
  KinematicState s = p.state;
  const bool dump = out_dir && c.dump_every > 0;
  auto dump_state = [&](const KinematicState& st, long k) {
    const auto dir = *out_dir / c.fields_path;
    write_vtk_file(dir, st.Ghat, "Ghat", k);
    write_vtk_file(dir, st.R, "R", k);
    write_binary_file(dir / ("Ghat_" + std::to_string(k) + ".tdgf"), st.Ghat);
    write_binary_file(dir / ("R_" + std::to_string(k) + ".tdgf"), st.R);
    if (st.Gcheck) write_vtk_file(dir, *st.Gcheck, "Gcheck", k);
  };
  const Drivers* drv = c.track_form_gap ? &p.drivers : nullptr;
  res.records.push_back(monitor(s, p.bg, drv));
  if (dump) dump_state(s, 0);
  const StepOptions opts{c.form, c.track_form_gap};
  int k = 0;
  try {
    for (k = 1; k <= steps; ++k) {
      StepStats st;
      s = step(s, p.drivers, p.bg, dt, opts, &st);
      res.max_form_gap = std::max(res.max_form_gap, st.max_form_gap);
      if (k % c.monitor_every == 0 || k == steps) {
        Diagnostics d = monitor(s, p.bg, drv);
        d.form_equiv_sup = std::max(d.form_equiv_sup, st.max_form_gap);
        res.records.push_back(d);
      }
      if (dump && (k % c.dump_every == 0 || k == steps)) dump_state(s, k);
    }
  } catch (const NumericalBlowUp& e) {
    res.failure = "step " + std::to_string(k) + ": " + e.what();
  } catch (const InvalidMetric& e) {
    res.failure = "step " + std::to_string(k) + ": " + e.what();
  }
  res.final_state = std::move(s);
  return res;
}

inline double resolve_dt(const ScenarioConfig& c, const Prepared& p) {
  return c.dt ? *c.dt : default_dt(p.drivers, p.bg.grid(), p.state.t, c.dt_max);
}

inline json state_summary(const KinematicState& s) {
  double dmin = std::numeric_limits<double>::infinity(), dmax = -dmin, asym = 0.0;
  for (std::size_t n = 0; n < s.Ghat.nodes(); ++n) {
    const Mat3 G = s.Ghat.mat(n);
    const double d = det3(G);
    dmin = std::min(dmin, d);
    dmax = std::max(dmax, d);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) asym = std::max(asym, std::abs(G[i][j] - G[j][i]));
  }
  return {{"time", s.t},
          {"Ghat_sup", sup_norm(s.Ghat)},
          {"R_sup", sup_norm(s.R)},
          {"det_Ghat_min", dmin},
          {"det_Ghat_max", dmax},
          {"Ghat_asymmetry_sup", asym}};
}

}  // namespace detail

/// Time integration with monitors at the configured cadence and optional
/// field dumps under out_dir.
inline Report run_evolve(const ScenarioConfig& c,
                         const std::optional<std::filesystem::path>& out_dir = std::nullopt) {
  Report r;
  r.command = "evolve";
  r.scenario = c.name;
  const detail::Prepared p = detail::prepare(c, c.grid());
  const double dt = detail::resolve_dt(c, p);
  const detail::EvolveResult res =
      detail::evolve_run(c, p, out_dir ? &*out_dir : nullptr, c.steps, dt);
  r.diagnostics = res.records;
  r.failure = res.failure;
  r.summary = detail::state_summary(res.final_state);
  r.summary["dt"] = dt;
  r.summary["steps"] = c.steps;
  r.summary["max_form_gap"] = res.max_form_gap;
  const Diagnostics& first = res.records.front();
  const Diagnostics& last = res.records.back();
  r.summary["curvature_growth"] = first.curvature_sup > 0 ? last.curvature_sup / first.curvature_sup : 0.0;
  const Thresholds& th = c.thresholds;
  r.check(last.curvature_sup <= th.curvature_growth_max * first.curvature_sup + 1e-12,
          "final curvature_sup grew beyond curvature_growth_max");
  if (c.track_form_gap)
    for (const auto& d : res.records)
      r.check(d.form_equiv_sup <= th.form_equiv_max,
              "form_equiv_sup above form_equiv_max at t = " + std::to_string(d.time));
  r.finish();
  return r;
}

/// Residual of the configured probe at one grid level.
inline double convergence_residual(const ScenarioConfig& c, const Grid& grid, double dt,
                                   int steps) {
  const detail::Prepared p = detail::prepare(c, grid);
  const std::string& probe = c.convergence_probe;
  if (probe == "derivative") {
    if (!p.realized) throw ConfigError("derivative probe needs a distortion initial state");
    return sup_diff(gradient(p.realized->distortion.t), p.realized->dT);
  }
  if (probe == "curvature") return sup_norm(curvature(material_geometry(p.state, p.bg).hat));
  if (probe == "concordance") {
    if (!p.realized) throw ConfigError("concordance probe needs a distortion initial state");
    const MaterialGeometry mg = material_geometry(p.state, p.bg);
    return concordance_residual(p.state.Ghat, p.realized->dGhat, mg.hat);
  }
  if (probe == "roundtrip") {
    if (!p.realized) throw ConfigError("roundtrip probe needs a distortion initial state");
    return detail::round_trip(c, p).error;
  }
  // evolve: final curvature after the configured interval
  const detail::EvolveResult res = detail::evolve_run(c, p, nullptr, steps, dt);
  if (res.failure) throw BlowUpError(*res.failure, 0, res.final_state.t);
  return res.records.back().curvature_sup;
}

/// Residual against h for `levels` grids, each refining the previous by 2.
/// The evolve probe halves dt with h and doubles the step count.
inline Report run_convergence(const ScenarioConfig& c, int levels) {
  if (levels < 2) throw InvalidArgument("convergence needs at least 2 refinement levels");
  Report r;
  r.command = "converge";
  r.scenario = c.name;
  Grid grid = c.grid();
  double dt = 0.0;
  int steps = c.steps;
  if (c.convergence_probe == "evolve") dt = detail::resolve_dt(c, detail::prepare(c, grid));
  for (int l = 0; l < levels; ++l) {
    if (l > 0) {
      grid = refine(grid, 2);
      dt *= 0.5;
      steps *= 2;
    }
    try {
      r.convergence.push_back({grid.min_spacing(), dt, convergence_residual(c, grid, dt, steps)});
    } catch (const NumericalBlowUp& e) {
      r.failure = e.what();
      break;
    }
  }
  r.observed_order = fit_order(r.convergence);
  r.summary = {{"probe", c.convergence_probe}, {"levels", levels}};
  r.summary["observed_order"] = r.observed_order ? number_or_flag(*r.observed_order) : json();
  r.check(r.observed_order.has_value() && *r.observed_order >= c.thresholds.min_order,
          "observed order below min_order");
  r.finish();
  return r;
}

}  // namespace dislo
