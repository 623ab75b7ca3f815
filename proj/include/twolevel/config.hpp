#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "twolevel/materials.hpp"
#include "twolevel/multirate.hpp"

namespace twolevel {

enum class RunMode { reference, two_level_space, two_level_spacetime, convergence_study, compare };
enum class GlobalSourceModel { gaussian, distributed };
enum class SnapshotPolicy { all, macro, none };

inline const char* to_string(RunMode m) {
  switch (m) {
    case RunMode::reference: return "reference";
    case RunMode::two_level_space: return "two-level-space";
    case RunMode::two_level_spacetime: return "two-level-spacetime";
    case RunMode::convergence_study: return "convergence-study";
    case RunMode::compare: return "compare";
  }
  return "?";
}

inline SnapshotPolicy parse_snapshots(const std::string& s) {
  if (s == "all") return SnapshotPolicy::all;
  if (s == "macro") return SnapshotPolicy::macro;
  if (s == "none") return SnapshotPolicy::none;
  throw ValidationError("snapshot policy must be all, macro or none");
}

/// Every parameter of one experiment, in SI units and Kelvin.
struct ExperimentConfig {
  std::filesystem::path source;  // config file
  RunMode mode = RunMode::two_level_spacetime;
  int dim = 2;
  Formulation formulation = Formulation::alternate;

  // domain
  std::vector<double> global_lo, global_hi;
  std::vector<double> local_lo, local_hi;  // fixed local box
  std::vector<double> local_size;          // moving local box
  double trailing_fraction = 2.0 / 3.0;
  std::vector<double> snap;
  double h_global = 0.0, h_local = 0.0, h_reference = 0.0;
  bool moving_local() const { return !local_size.empty(); }

  // materials
  std::filesystem::path global_material_file, local_material_file;
  MaterialModel global_material, local_material;
  bool latent = true;

  // laser and path
  LaserBeam beam;
  GlobalSourceModel global_source = GlobalSourceModel::gaussian;
  int tracks = 1;
  double track_length = 0.0;
  double sweep_duration = 0.0;  // when set, track_length = speed * sweep_duration
  double hatch = 0.0;
  std::vector<double> origin;
  std::vector<std::vector<double>> segments;  // explicit path: x0.. x1.. per segment

  // boundary data
  ThermalBC bc;
  double T_initial = 298.15;

  // schedule
  double t_start = 0.0, t_end = 0.0;
  double dt_global = 0.0, dt_local = 0.0, dt_reference = 0.0;
  std::vector<double> dt_global_list, dt_local_list;

  SolverSettings solver;
  CouplingSettings coupling;

  // output
  std::filesystem::path out_dir = "out";
  SnapshotPolicy snapshots = SnapshotPolicy::macro;
  int vtk_every = 1;
  std::vector<double> control_line;  // fixed transverse coordinates of the x-line
  std::vector<double> control_x;     // x0 x1
  std::optional<double> profile_time;

  /// Strict constants: σ_SB = 5.87e-8 and, in 2D, scan speed 0.01 mm/s.
  void apply_strict_paper() {
    bc.sigma_sb = 5.87e-8;
    if (dim == 2) {
      beam.speed = 1e-5;
      if (sweep_duration <= 0.0 && segments.empty())
        throw ValidationError("strict 2D speed needs a sweep_duration path");
    }
  }

  /// Length of each alternating track.
  double effective_track_length() const { return sweep_duration > 0.0 ? beam.speed * sweep_duration : track_length; }

  void validate() const;
};

namespace detail {

/// Unit conversion to SI for one quantity; temperatures carry an offset.
struct Quantity {
  std::map<std::string, double> scale;
  bool temperature = false;
};

inline const Quantity& quantity(const std::string& kind) {
  static const std::map<std::string, Quantity> table{
      {"length", {{{"m", 1.0}, {"mm", 1e-3}, {"um", 1e-6}}, false}},
      {"time", {{{"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}}, false}},
      {"speed", {{{"m/s", 1.0}, {"mm/s", 1e-3}}, false}},
      {"power", {{{"W", 1.0}, {"kW", 1e3}}, false}},
      {"temperature", {{{"K", 0.0}, {"C", kCelsiusOffset}}, true}},
      {"htc", {{{"W/m2K", 1.0}}, false}},
      {"sigma", {{{"W/m2K4", 1.0}}, false}},
      {"none", {{}, false}},
  };
  return table.at(kind);
}

struct RawValue {
  std::vector<std::string> tokens;
  int line = 0;
};

}  // namespace detail

/// Parser state for the sectioned key-value format: `[section]` headers, `key = values
/// [unit]` lines, `#` comments. Keys are addressed as `section.key`.
class ConfigReader {
 public:
  explicit ConfigReader(const std::filesystem::path& path) : file_(path.string()) {
    std::ifstream in(path);
    if (!in) throw ConfigError(file_, 0, "", "cannot open config file");
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      std::istringstream ls(line);
      std::string first;
      if (!(ls >> first)) continue;
      if (first.front() == '[') {
        if (first.back() != ']') throw ConfigError(file_, lineno, first, "malformed section header");
        section = first.substr(1, first.size() - 2);
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(file_, lineno, first, "expected 'key = value'");
      std::string key = line.substr(0, eq);
      key.erase(key.find_last_not_of(" \t") + 1);
      key.erase(0, key.find_first_not_of(" \t"));
      if (section.empty()) throw ConfigError(file_, lineno, key, "key outside any section");
      detail::RawValue v;
      v.line = lineno;
      std::istringstream vs(line.substr(eq + 1));
      for (std::string t; vs >> t;) v.tokens.push_back(t);
      if (v.tokens.empty()) throw ConfigError(file_, lineno, key, "missing value");
      const std::string full = section + "." + key;
      if (values_.count(full)) throw ConfigError(file_, lineno, full, "duplicate key");
      values_[full] = std::move(v);
      last_line_ = lineno;
    }
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  /// Numbers of a key converted to SI with the trailing unit token.
  std::vector<double> numbers(const std::string& key, const std::string& kind) {
    const auto& v = raw(key);
    const auto& q = detail::quantity(kind);
    std::vector<std::string> toks = v.tokens;
    double scale = 1.0, offset = 0.0;
    if (kind != "none") {
      const std::string unit = toks.back();
      const auto it = q.scale.find(unit);
      if (it == q.scale.end()) throw ConfigError(file_, v.line, key, "missing or unknown unit '" + unit + "'");
      toks.pop_back();
      if (q.temperature) offset = it->second;
      else scale = it->second;
    }
    if (toks.empty()) throw ConfigError(file_, v.line, key, "missing value");
    std::vector<double> out;
    for (const auto& t : toks) {
      std::size_t pos = 0;
      double x = 0.0;
      try {
        x = std::stod(t, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != t.size() || !std::isfinite(x)) throw ConfigError(file_, v.line, key, "not a number: '" + t + "'");
      out.push_back(x * scale + offset);
    }
    return out;
  }

  double number(const std::string& key, const std::string& kind) {
    const auto v = numbers(key, kind);
    if (v.size() != 1) throw ConfigError(file_, raw(key).line, key, "expected a single value");
    return v.front();
  }

  std::string word(const std::string& key) {
    const auto& v = raw(key);
    if (v.tokens.size() != 1) throw ConfigError(file_, v.line, key, "expected a single word");
    return v.tokens.front();
  }

  bool flag(const std::string& key) {
    const auto w = word(key);
    if (w == "true" || w == "yes" || w == "on") return true;
    if (w == "false" || w == "no" || w == "off") return false;
    throw ConfigError(file_, raw(key).line, key, "expected true or false");
  }

  template <class T>
  T choice(const std::string& key, const std::map<std::string, T>& options) {
    const auto w = word(key);
    const auto it = options.find(w);
    if (it == options.end()) throw ConfigError(file_, raw(key).line, key, "unknown value '" + w + "'");
    return it->second;
  }

  /// Keys that were never read.
  std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
      if (!used_.count(k)) out.push_back(k);
    return out;
  }

  int line_of(const std::string& key) const {
    const auto it = values_.find(key);
    return it == values_.end() ? last_line_ : it->second.line;
  }
  const std::string& file() const { return file_; }

 private:
  const detail::RawValue& raw(const std::string& key) {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError(file_, last_line_, key, "missing key");
    used_.insert(key);
    return it->second;
  }

  std::string file_;
  std::map<std::string, detail::RawValue> values_;
  std::set<std::string> used_;
  int last_line_ = 0;
};

inline void ExperimentConfig::validate() const {
  if (dim != 2 && dim != 3) throw ValidationError("dimension must be 2 or 3");
  auto sized = [&](const std::vector<double>& v, const char* what) {
    if (static_cast<int>(v.size()) != dim) throw ValidationError(std::string(what) + " needs one value per axis");
  };
  sized(global_lo, "domain.global_lo");
  sized(global_hi, "domain.global_hi");
  for (int a = 0; a < dim; ++a)
    if (!(global_hi[a] > global_lo[a])) throw ValidationError("global box must have positive extent");
  if (moving_local()) {
    sized(local_size, "domain.local_size");
    if (!snap.empty()) sized(snap, "domain.snap");
  } else {
    sized(local_lo, "domain.local_lo");
    sized(local_hi, "domain.local_hi");
    for (int a = 0; a < dim; ++a)
      if (!(local_hi[a] > local_lo[a])) throw ValidationError("local box must have positive extent");
  }
  if (!(h_global > 0.0) || !(h_local > 0.0) || !(h_reference > 0.0))
    throw ValidationError("mesh spacings must be positive");
  if (!(trailing_fraction > 0.0 && trailing_fraction < 1.0))
    throw ValidationError("laser offset must lie inside the local box");
  global_material.validate();
  local_material.validate();
  beam.validate();
  bc.validate();
  if (!(T_initial > 0.0)) throw ValidationError("initial temperature must be positive (K)");
  if (segments.empty()) {
    if (tracks < 1) throw ValidationError("track count must be at least 1");
    if (!(effective_track_length() > 0.0)) throw ValidationError("track length must be positive");
    if (!(beam.speed > 0.0)) throw ValidationError("scan speed must be positive");
    sized(origin, "path.origin");
  } else {
    for (const auto& s : segments)
      if (static_cast<int>(s.size()) != 2 * dim) throw ValidationError("path segments need two points");
  }
  if (dim == 2 && hatch != 0.0) throw ValidationError("hatch spacing needs a 3D path");
  if (dim == 2 && global_source == GlobalSourceModel::distributed)
    throw ValidationError("the distributed source is defined in 3D only");
  if (t_end < t_start) throw ValidationError("end time precedes start time");
  solver.validate();
  coupling.validate();
  if (vtk_every < 1) throw ValidationError("VTK cadence must be at least 1");
  if (!control_line.empty()) {
    if (static_cast<int>(control_line.size()) != dim - 1) throw ValidationError("control line needs dim-1 coordinates");
    if (control_x.size() != 2 || !(control_x[1] > control_x[0])) throw ValidationError("control line needs x0 < x1");
  }
  auto check_steps = [&](double G, double l) {
    MacroSchedule::from_steps(t_start, t_end, G, l);
  };
  switch (mode) {
    case RunMode::reference:
      MacroSchedule{t_start, t_end, dt_reference, 1}.validate();
      break;
    case RunMode::two_level_space:
      MacroSchedule{t_start, t_end, dt_local, 1}.validate();
      break;
    case RunMode::two_level_spacetime:
    case RunMode::compare:
      check_steps(dt_global, dt_local);
      MacroSchedule{t_start, t_end, dt_local, 1}.validate();
      break;
    case RunMode::convergence_study:
      if (dt_global_list.empty() || dt_local_list.empty()) throw ValidationError("study needs step lists");
      MacroSchedule{t_start, t_end, dt_reference, 1}.validate();
      for (double G : dt_global_list)
        for (double l : dt_local_list)
          if (l <= G * (1 + 1e-12)) check_steps(G, l);
      for (double l : dt_local_list) {
        const double r = l / dt_reference;
        if (std::abs(r - std::round(r)) > 1e-9 * r) throw ValidationError("reference step must divide every local step");
      }
      break;
  }
}

/// Reads and validates an experiment config. Material paths are relative to the config
/// file. Unknown keys are rejected.
inline ExperimentConfig load_config(const std::filesystem::path& path) {
  ConfigReader r(path);
  ExperimentConfig c;
  c.source = path;
  const auto dir = path.parent_path();
  try {
    c.mode = r.choice<RunMode>("run.mode", {{"reference", RunMode::reference},
                                            {"two-level-space", RunMode::two_level_space},
                                            {"two-level-spacetime", RunMode::two_level_spacetime},
                                            {"convergence-study", RunMode::convergence_study},
                                            {"compare", RunMode::compare}});
    c.dim = static_cast<int>(r.number("run.dim", "none"));
    if (r.has("run.formulation"))
      c.formulation = r.choice<Formulation>("run.formulation", {{"full", Formulation::full},
                                                                {"alternate", Formulation::alternate}});

    c.global_lo = r.numbers("domain.global_lo", "length");
    c.global_hi = r.numbers("domain.global_hi", "length");
    if (r.has("domain.local_size")) {
      c.local_size = r.numbers("domain.local_size", "length");
      if (r.has("domain.trailing_fraction")) c.trailing_fraction = r.number("domain.trailing_fraction", "none");
      if (r.has("domain.snap")) c.snap = r.numbers("domain.snap", "length");
    } else {
      c.local_lo = r.numbers("domain.local_lo", "length");
      c.local_hi = r.numbers("domain.local_hi", "length");
    }
    c.h_global = r.number("domain.h_global", "length");
    c.h_local = r.number("domain.h_local", "length");
    c.h_reference = r.has("domain.h_reference") ? r.number("domain.h_reference", "length") : c.h_local;

    auto material = [&](const std::string& key, std::filesystem::path& file, MaterialModel& m) {
      file = dir / r.word(key);
      if (!std::filesystem::exists(file)) throw ConfigError(r.file(), r.line_of(key), key, "file does not exist");
      m = load_material(file);
    };
    material("material.global", c.global_material_file, c.global_material);
    material("material.local", c.local_material_file, c.local_material);
    if (r.has("material.latent")) c.latent = r.flag("material.latent");

    c.beam.power = r.number("laser.power", "power");
    c.beam.absorptivity = r.number("laser.absorptivity", "none");
    c.beam.radius = r.number("laser.radius", "length");
    c.beam.depth = r.number("laser.depth", "length");
    c.beam.speed = r.number("laser.speed", "speed");
    if (r.has("laser.global_source"))
      c.global_source = r.choice<GlobalSourceModel>(
          "laser.global_source", {{"gaussian", GlobalSourceModel::gaussian}, {"distributed", GlobalSourceModel::distributed}});

    if (r.has("path.segments")) {
      const auto v = r.numbers("path.segments", "length");
      const std::size_t per = 2 * static_cast<std::size_t>(c.dim);
      if (v.size() % per != 0) throw ConfigError(r.file(), r.line_of("path.segments"), "path.segments", "expected point pairs");
      for (std::size_t k = 0; k < v.size(); k += per) c.segments.emplace_back(v.begin() + k, v.begin() + k + per);
    } else {
      c.tracks = static_cast<int>(r.number("path.tracks", "none"));
      if (r.has("path.sweep_duration")) c.sweep_duration = r.number("path.sweep_duration", "time");
      else c.track_length = r.number("path.track_length", "length");
      if (r.has("path.hatch")) c.hatch = r.number("path.hatch", "length");
      c.origin = r.numbers("path.origin", "length");
    }

    c.bc.h_conv = r.number("bc.h_conv", "htc");
    c.bc.emissivity = r.number("bc.emissivity", "none");
    if (r.has("bc.sigma_sb")) c.bc.sigma_sb = r.number("bc.sigma_sb", "sigma");
    c.bc.T_ambient = r.number("bc.T_ambient", "temperature");
    c.bc.T_build_plate = r.number("bc.T_build_plate", "temperature");
    c.T_initial = r.number("bc.T_initial", "temperature");

    c.t_start = r.has("schedule.t_start") ? r.number("schedule.t_start", "time") : 0.0;
    c.t_end = r.number("schedule.t_end", "time");
    if (r.has("schedule.dt_global")) c.dt_global = r.number("schedule.dt_global", "time");
    if (r.has("schedule.dt_local")) c.dt_local = r.number("schedule.dt_local", "time");
    if (r.has("schedule.dt_reference")) c.dt_reference = r.number("schedule.dt_reference", "time");
    if (r.has("schedule.dt_global_list")) c.dt_global_list = r.numbers("schedule.dt_global_list", "time");
    if (r.has("schedule.dt_local_list")) c.dt_local_list = r.numbers("schedule.dt_local_list", "time");

    if (r.has("solver.linear"))
      c.solver.linear_solver = r.choice<LinearSolverKind>(
          "solver.linear", {{"direct", LinearSolverKind::direct}, {"cg", LinearSolverKind::conjugate_gradient}});
    if (r.has("solver.picard_tolerance")) c.solver.picard_tolerance = r.number("solver.picard_tolerance", "none");
    if (r.has("solver.picard_max_iterations"))
      c.solver.picard_max_iterations = static_cast<int>(r.number("solver.picard_max_iterations", "none"));
    if (r.has("solver.linear_tolerance")) c.solver.linear_tolerance = r.number("solver.linear_tolerance", "none");
    if (r.has("solver.source_quadrature"))
      c.solver.source_quadrature = static_cast<int>(r.number("solver.source_quadrature", "none"));

    if (r.has("coupling.relaxation")) c.coupling.relaxation = r.number("coupling.relaxation", "none");
    if (r.has("coupling.tolerance")) c.coupling.tolerance = r.number("coupling.tolerance", "none");
    if (r.has("coupling.max_iterations"))
      c.coupling.max_iterations = static_cast<int>(r.number("coupling.max_iterations", "none"));
    if (r.has("coupling.predictor"))
      c.coupling.predictor = r.choice<PredictorLoad>(
          "coupling.predictor", {{"coupled", PredictorLoad::coupled}, {"transmission", PredictorLoad::transmission}});
    if (r.has("coupling.trace_timing"))
      c.coupling.trace_timing = r.choice<TraceTiming>(
          "coupling.trace_timing", {{"step_end", TraceTiming::step_end}, {"step_start", TraceTiming::step_start}});

    if (r.has("output.dir")) c.out_dir = r.word("output.dir");
    if (r.has("output.snapshots")) c.snapshots = parse_snapshots(r.word("output.snapshots"));
    if (r.has("output.vtk_every")) c.vtk_every = static_cast<int>(r.number("output.vtk_every", "none"));
    if (r.has("output.control_line")) {
      c.control_line = r.numbers("output.control_line", "length");
      c.control_x = r.numbers("output.control_x", "length");
    }
    if (r.has("output.profile_time")) c.profile_time = r.number("output.profile_time", "time");
  } catch (const ValidationError& e) {
    throw ConfigError(r.file(), 0, "", e.what());
  }
  if (const auto extra = r.unused(); !extra.empty())
    throw ConfigError(r.file(), r.line_of(extra.front()), extra.front(), "unknown key");
  c.validate();
  return c;
}

}  // namespace twolevel
