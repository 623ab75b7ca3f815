#pragma once

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "twolevel/config.hpp"
#include "twolevel/metrics.hpp"
#include "twolevel/vtk.hpp"

namespace twolevel {

namespace fs = std::filesystem;
using json = nlohmann::json;

template <int Dim>
Point<Dim> to_point(const std::vector<double>& v) {
  if (static_cast<int>(v.size()) != Dim) throw ValidationError("coordinate has the wrong dimension");
  Point<Dim> p{};
  for (int a = 0; a < Dim; ++a) p[a] = v[a];
  return p;
}

/// Meshes, materials, sources and models of one config.
template <int Dim>
struct Experiment {
  ExperimentConfig cfg;
  std::shared_ptr<const Mesh<Dim>> global_mesh, reference_mesh, local_mesh;
  LaserSources<Dim> laser;
  std::optional<MovingDomain<Dim>> moving;
  TwoLevelModel<Dim> model;
  MonolithicModel<Dim> reference;
};

template <int Dim>
ScanPath<Dim> make_scan_path(const ExperimentConfig& c, const Box<Dim>& bounds) {
  if (!c.segments.empty()) {
    std::vector<std::pair<Point<Dim>, Point<Dim>>> pieces;
    for (const auto& s : c.segments)
      pieces.emplace_back(to_point<Dim>({s.begin(), s.begin() + Dim}), to_point<Dim>({s.begin() + Dim, s.end()}));
    return make_path<Dim>(pieces, c.beam.speed, c.t_start);
  }
  return build_alternating_path<Dim>(c.tracks, c.effective_track_length(), c.hatch, c.beam.speed,
                                     to_point<Dim>(c.origin), c.t_start, bounds);
}

template <int Dim>
Experiment<Dim> make_experiment(const ExperimentConfig& c) {
  if (c.dim != Dim) throw ValidationError("config dimension does not match the driver");
  c.validate();
  Experiment<Dim> x;
  x.cfg = c;
  const Box<Dim> gbox(to_point<Dim>(c.global_lo), to_point<Dim>(c.global_hi));
  x.global_mesh = std::make_shared<const Mesh<Dim>>(build_structured_mesh<Dim>(gbox, c.h_global));
  x.reference_mesh = c.h_reference == c.h_global
                         ? x.global_mesh
                         : std::make_shared<const Mesh<Dim>>(build_structured_mesh<Dim>(gbox, c.h_reference));
  x.laser.beam = c.beam;
  x.laser.path = make_scan_path<Dim>(c, gbox);

  Box<Dim> lbox;
  if (c.moving_local()) {
    MovingDomain<Dim> md;
    md.policy.size = to_point<Dim>(c.local_size);
    md.policy.trailing_fraction = c.trailing_fraction;
    if (!c.snap.empty()) md.policy.snap = to_point<Dim>(c.snap);
    md.policy.validate();
    md.path = x.laser.path;
    Point<Dim> lattice = md.policy.snap;
    for (int a = 0; a < Dim; ++a)
      if (!(lattice[a] > 0.0)) lattice[a] = c.h_local;
    lbox = target_local_box<Dim>(md.policy, laser_position(md.path, c.t_start), scan_direction(md.path, c.t_start), gbox,
                                 lattice);
    x.moving = md;
  } else {
    lbox = Box<Dim>(to_point<Dim>(c.local_lo), to_point<Dim>(c.local_hi));
  }
  if (!is_immersed(lbox, gbox, 1e-9 * c.h_local))
    throw LocalDomainEscapes("local domain is not immersed in the global domain");
  x.local_mesh = std::make_shared<const Mesh<Dim>>(build_structured_mesh<Dim>(lbox, c.h_local));

  auto gmat = std::make_shared<const MaterialModel>(c.global_material);
  auto lmat = std::make_shared<const MaterialModel>(c.local_material);
  const auto laser = x.laser;
  auto gaussian = [laser](double a, double b) { return laser.gaussian(a, b); };

  x.model.global_mesh = x.global_mesh;
  x.model.global_material = gmat;
  x.model.local_material = lmat;
  x.model.bc = c.bc;
  x.model.formulation = c.formulation;
  x.model.coupling = c.coupling;
  x.model.solver = c.solver;
  x.model.local_source = gaussian;
  if (c.global_source == GlobalSourceModel::distributed)
    x.model.global_source = [laser](double a, double b) { return laser.distributed(a, b); };
  else
    x.model.global_source = gaussian;

  x.reference.mesh = x.reference_mesh;
  x.reference.material = lmat;
  x.reference.bc = c.bc;
  x.reference.top = TopFlux::convection_radiation;
  x.reference.latent = c.latent;
  x.reference.source = gaussian;
  x.reference.solver = c.solver;
  return x;
}

/// Stored monolithic trajectory on a uniform grid of step dt.
template <int Dim>
ReferenceTrajectory<Dim> compute_reference(const Experiment<Dim>& x, double dt,
                                           const std::function<void(const FieldState<Dim>&)>& observer = {}) {
  const auto& c = x.cfg;
  const int steps = static_cast<int>(std::llround((c.t_end - c.t_start) / dt));
  ReferenceTrajectory<Dim> ref{c.t_start, dt, {}};
  ref.fields.reserve(steps + 1);
  solve_monolithic<Dim>(x.reference, c.t_start, dt, steps, c.T_initial, [&](const FieldState<Dim>& f) {
    ref.fields.push_back(f);
    if (observer) observer(f);
  });
  return ref;
}

/// Per-run output bundle: steps.csv, errors.csv, VTK snapshots, profile.csv.
template <int Dim>
class RunRecorder {
 public:
  RunRecorder(const Experiment<Dim>& x, fs::path dir, const ReferenceTrajectory<Dim>* ref)
      : x_(x), dir_(std::move(dir)), ref_(ref) {
    fs::create_directories(dir_);
    steps_.open(dir_ / "steps.csv");
    steps_ << "time,kind,coupling_iterations,local_seconds,global_seconds\n" << std::setprecision(12);
    errors_.open(dir_ / "errors.csv");
    errors_ << "t,step_kind,rel_l2_local,T_star\n" << std::setprecision(12);
    if (!steps_ || !errors_) throw Error("cannot write into " + dir_.string());
  }

  const ErrorReport& errors() const { return report_; }
  const std::vector<std::pair<double, double>>& profile() const { return profile_; }
  double last_time() const { return last_time_; }
  const char* last_kind() const { return last_kind_; }

  /// Two-level event (micro, macro, predictor, initial).
  void operator()(const StepEvent<Dim>& e) {
    last_time_ = e.time;
    last_kind_ = to_string(e.kind);
    if (e.kind != StepKind::initial) {
      steps_ << e.time << ',' << to_string(e.kind) << ',' << e.coupling_iterations << ',' << e.local_seconds << ','
             << e.global_seconds << '\n';
    }
    if (e.kind == StepKind::predictor || e.kind == StepKind::initial) return;
    const auto& local = *e.local;
    const auto& global = *e.global;
    auto T = [&](const Point<Dim>& p) { return composite_value<Dim>(local, global, p); };
    const double ts = control(T);
    if (ref_) {
      const double err = relative_l2(local, ref_->at(e.time));
      report_.add(e.time, to_string(e.kind), err, ts);
      errors_ << e.time << ',' << to_string(e.kind) << ',' << err << ',' << ts << '\n';
    }
    sample_profile(e.time, T);
    const bool macro = e.kind == StepKind::macro;
    ++local_count_;
    if (macro) ++macro_count_;
    if (snapshot_due(macro)) {
      if (x_.cfg.snapshots == SnapshotPolicy::all || macro)
        write_vtk<Dim>(dir_ / "vtk" / name("local", e.time), *local.mesh, {{"temperature", &local.values}},
                       "local t=" + fmt(e.time));
      if (macro)
        write_vtk<Dim>(dir_ / "vtk" / name("global", e.time), *global.mesh, {{"temperature", &global.values}},
                       "global t=" + fmt(e.time));
    }
  }

  /// Reference (monolithic) step.
  void reference(const FieldState<Dim>& f, double seconds) {
    last_time_ = f.time;
    last_kind_ = "reference";
    if (f.time == x_.cfg.t_start) return;
    steps_ << f.time << ",reference,0,0," << seconds << '\n';
    auto T = [&](const Point<Dim>& p) { return f.evaluate(p); };
    const double ts = control(T);
    report_.add(f.time, "reference", 0.0, ts);
    errors_ << f.time << ",reference,0," << ts << '\n';
    sample_profile(f.time, T);
    ++local_count_;
    ++macro_count_;
    if (snapshot_due(true))
      write_vtk<Dim>(dir_ / "vtk" / name("reference", f.time), *f.mesh, {{"temperature", &f.values}},
                     "reference t=" + fmt(f.time));
  }

  void finish() {
    steps_.flush();
    errors_.flush();
    if (!profile_.empty()) {
      std::ofstream out(dir_ / "profile.csv");
      out << "x,T\n" << std::setprecision(12);
      for (const auto& [xv, T] : profile_) out << xv << ',' << T << '\n';
    }
  }

 private:
  template <class F>
  double control(F&& T) const {
    const auto& c = x_.cfg;
    if (c.control_line.empty()) return std::nan("");
    std::array<double, Dim - 1> at{};
    for (int a = 0; a < Dim - 1; ++a) at[a] = c.control_line[a];
    return line_integral<Dim>(T, at, c.control_x[0], c.control_x[1], c.h_local);
  }

  template <class F>
  void sample_profile(double t, F&& T) {
    const auto& c = x_.cfg;
    if (!c.profile_time || c.control_line.empty()) return;
    if (std::abs(t - *c.profile_time) > 1e-9 * std::max(1.0, std::abs(t))) return;
    profile_.clear();
    const double dx = 0.5 * c.h_local;
    const int n = static_cast<int>(std::ceil((c.control_x[1] - c.control_x[0]) / dx - 1e-9));
    for (int k = 0; k <= n; ++k) {
      Point<Dim> p{};
      p[0] = std::min(c.control_x[0] + k * dx, c.control_x[1]);
      for (int a = 1; a < Dim; ++a) p[a] = c.control_line[a - 1];
      profile_.emplace_back(p[0], T(p));
    }
  }

  bool snapshot_due(bool macro) const {
    const auto& c = x_.cfg;
    if (c.snapshots == SnapshotPolicy::none) return false;
    if (c.snapshots == SnapshotPolicy::macro) return macro && macro_count_ % c.vtk_every == 0;
    return local_count_ % c.vtk_every == 0;
  }

  static std::string fmt(double t) {
    std::ostringstream os;
    os << std::setprecision(10) << t;
    return os.str();
  }

  std::string name(const char* what, double t) const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%07ld.vtk", what, std::lround((t - x_.cfg.t_start) / time_unit()));
    return buf;
  }

  double time_unit() const {
    const auto& c = x_.cfg;
    double u = c.dt_local > 0.0 ? c.dt_local : c.dt_reference;
    if (c.dt_reference > 0.0) u = std::min(u, c.dt_reference);
    return u > 0.0 ? u : 1.0;
  }

  const Experiment<Dim>& x_;
  fs::path dir_;
  const ReferenceTrajectory<Dim>* ref_;
  std::ofstream steps_, errors_;
  ErrorReport report_;
  std::vector<std::pair<double, double>> profile_;
  long local_count_ = 0, macro_count_ = 0;
  double last_time_ = 0.0;
  const char* last_kind_ = "initial";
};

inline void write_timing(const fs::path& file, const TimingReport& t) {
  std::ofstream out(file);
  out << "phase,seconds,count\n" << std::setprecision(9);
  for (const auto& [phase, e] : t.phases) out << phase << ',' << e.seconds << ',' << e.count << '\n';
}

inline void write_json(const fs::path& file, const json& j) {
  std::ofstream out(file);
  out << j.dump(2) << '\n';
}

/// Outcome of one simulation run.
struct RunResult {
  std::string variant;
  double dt_global = 0.0, dt_local = 0.0;
  ErrorReport errors;
  TimingReport timing;
  TwoLevelCounters counters;
  long macro_steps = 0;
  int micro_steps = 1;
  double wall_seconds = 0.0;
  std::vector<std::pair<double, double>> profile;

  json to_json() const {
    json j;
    j["variant"] = variant;
    j["dt_global"] = dt_global;
    j["dt_local"] = dt_local;
    j["macro_steps"] = macro_steps;
    j["micro_steps_per_macro"] = micro_steps;
    j["global_solves"] = counters.global_solves;
    j["local_solves"] = counters.local_solves;
    j["coupling_iterations"] = counters.coupling_iterations;
    j["picard_iterations"] = counters.picard_iterations;
    j["wall_seconds"] = wall_seconds;
    j["global_seconds"] = counters.global_seconds;
    j["local_seconds"] = counters.local_seconds;
    if (!errors.rel_l2.empty()) j["mean_rel_l2"] = errors.mean();
    return j;
  }
};

/// Rethrows the active exception with the step that failed.
[[noreturn]] inline void rethrow_with_provenance(const std::string& what, double t, const char* kind) {
  try {
    throw;
  } catch (const std::exception& e) {
    std::ostringstream os;
    os << what << " failed after the " << kind << " step at t = " << std::setprecision(10) << t << " s: " << e.what();
    throw Error(os.str());
  }
}

inline TimingReport timing_of(const TwoLevelCounters& c, double wall) {
  TimingReport t;
  t.add("overall", wall, 1);
  t.add("global", c.global_seconds, c.global_solves);
  t.add("local", c.local_seconds, c.local_solves);
  t.add("assembly", c.assembly_seconds, c.picard_iterations);
  t.add("coupling", std::max(0.0, wall - c.global_seconds - c.local_seconds), c.coupling_iterations);
  return t;
}

/// Monolithic run at the reference step; the trajectory is returned for error metrics.
template <int Dim>
RunResult run_reference(const Experiment<Dim>& x, const fs::path& dir, ReferenceTrajectory<Dim>* keep = nullptr) {
  RunRecorder<Dim> rec(x, dir, nullptr);
  RunResult r;
  r.variant = "reference";
  r.dt_global = r.dt_local = x.cfg.dt_reference;
  Stopwatch sw, step;
  try {
    auto traj = compute_reference<Dim>(x, x.cfg.dt_reference, [&](const FieldState<Dim>& f) {
      rec.reference(f, step.seconds());
      step = Stopwatch();
    });
    if (keep) *keep = std::move(traj);
  } catch (...) {
    rec.finish();
    rethrow_with_provenance("reference run", rec.last_time(), rec.last_kind());
  }
  rec.finish();
  r.wall_seconds = sw.seconds();
  r.errors = rec.errors();
  r.macro_steps = static_cast<long>(std::llround((x.cfg.t_end - x.cfg.t_start) / x.cfg.dt_reference));
  r.counters.global_solves = r.macro_steps;
  r.counters.global_seconds = r.wall_seconds;
  r.timing.add("overall", r.wall_seconds, 1);
  r.timing.add("global", r.wall_seconds, r.macro_steps);
  r.profile = rec.profile();
  write_timing(dir / "timing.csv", r.timing);
  json s = r.to_json();
  s["mode"] = "reference";
  write_json(dir / "summary.json", s);
  return r;
}

/// Two-level run: spacetime with (dt_global, dt_local), or space-only with dt_local when
/// `space_only` is set. Errors are measured when a reference is given.
template <int Dim>
RunResult run_two_level(const Experiment<Dim>& x, double dt_global, double dt_local, bool space_only, const fs::path& dir,
                        const ReferenceTrajectory<Dim>* ref = nullptr) {
  const auto& c = x.cfg;
  RunRecorder<Dim> rec(x, dir, ref);
  RunResult r;
  r.variant = space_only ? "space" : "spacetime";
  r.dt_global = space_only ? dt_local : dt_global;
  r.dt_local = dt_local;
  auto s = make_two_level_state<Dim>(x.model, x.local_mesh, c.T_initial, c.t_start);
  Stopwatch sw;
  try {
    if (space_only) {
      run_space<Dim>(x.model, s, c.t_start, c.t_end, dt_local, std::ref(rec), x.moving);
      r.macro_steps = static_cast<long>(std::llround((c.t_end - c.t_start) / dt_local));
    } else {
      const auto sch = MacroSchedule::from_steps(c.t_start, c.t_end, dt_global, dt_local);
      run_spacetime<Dim>(x.model, s, sch, std::ref(rec), x.moving);
      r.macro_steps = sch.macro_count();
      r.micro_steps = sch.micro_steps;
    }
  } catch (...) {
    rec.finish();
    rethrow_with_provenance(r.variant + " two-level run", rec.last_time(), rec.last_kind());
  }
  rec.finish();
  r.wall_seconds = sw.seconds();
  r.counters = s.counters;
  r.errors = rec.errors();
  r.timing = timing_of(s.counters, r.wall_seconds);
  r.profile = rec.profile();
  write_timing(dir / "timing.csv", r.timing);
  json j = r.to_json();
  j["mode"] = space_only ? "two-level-space" : "two-level-spacetime";
  j["formulation"] = c.formulation == Formulation::full ? "full" : "alternate";
  if (!space_only) {
    const long expected = r.macro_steps * r.micro_steps + r.counters.coupling_iterations;
    j["local_solve_accounting_ok"] = expected == r.counters.local_solves;
  }
  write_json(dir / "summary.json", j);
  return r;
}

inline std::string step_tag(double dt) {
  std::ostringstream os;
  os << std::setprecision(6) << dt;
  return os.str();
}

/// Members of a study: every (Δt, δt) pair with δt ≤ Δt, in list order.
inline std::vector<std::pair<double, double>> study_members(const ExperimentConfig& c) {
  std::vector<std::pair<double, double>> out;
  for (double G : c.dt_global_list)
    for (double l : c.dt_local_list)
      if (l <= G * (1 + 1e-12)) out.emplace_back(G, l);
  return out;
}

struct StudyResult {
  RunResult reference;
  std::vector<RunResult> members;
};

/// Reference solve, then every member run against it, `threads` members at a time.
template <int Dim>
StudyResult run_study(const Experiment<Dim>& x, const fs::path& out, int threads = 1) {
  fs::create_directories(out);
  StudyResult result;
  ReferenceTrajectory<Dim> ref;
  result.reference = run_reference(x, out / "reference", &ref);
  const auto members = study_members(x.cfg);
  result.members.resize(members.size());
  std::vector<std::exception_ptr> failures(members.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k; (k = next++) < members.size();) {
      const auto [G, l] = members[k];
      try {
        result.members[k] = run_two_level(x, G, l, false, out / ("dtG_" + step_tag(G) + "_dtL_" + step_tag(l)), &ref);
      } catch (...) {
        failures[k] = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(members.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::ofstream csv(out / "study_matrix.csv");
  csv << "dt_global,dt_local,mean_rel_l2\n" << std::setprecision(12);
  json j;
  j["mode"] = "convergence-study";
  j["reference"] = result.reference.to_json();
  for (std::size_t k = 0; k < members.size(); ++k) {
    if (failures[k]) continue;
    const auto& m = result.members[k];
    csv << m.dt_global << ',' << m.dt_local << ',' << m.errors.mean() << '\n';
    j["members"].push_back(m.to_json());
  }
  csv.close();
  write_json(out / "summary.json", j);
  for (auto& f : failures)
    if (f) std::rethrow_exception(f);
  return result;
}

struct CompareResult {
  RunResult spacetime, space;
  double wall_ratio() const { return spacetime.wall_seconds / space.wall_seconds; }
  double global_solve_reduction() const {
    return static_cast<double>(space.counters.global_solves) / std::max<long>(1, spacetime.counters.global_solves);
  }
};

/// Spacetime (Δt, δt) against space-only stepping at the uniform δt.
template <int Dim>
CompareResult run_compare(const Experiment<Dim>& x, const fs::path& out) {
  fs::create_directories(out);
  CompareResult r;
  r.spacetime = run_two_level(x, x.cfg.dt_global, x.cfg.dt_local, false, out / "spacetime");
  r.space = run_two_level(x, x.cfg.dt_local, x.cfg.dt_local, true, out / "space");
  TimingReport t;
  for (const auto* v : {&r.spacetime, &r.space})
    for (const auto& [phase, e] : v->timing.phases) t.add(v->variant + "_" + phase, e.seconds, e.count);
  write_timing(out / "timing.csv", t);
  json j;
  j["mode"] = "compare";
  j["spacetime"] = r.spacetime.to_json();
  j["space"] = r.space.to_json();
  j["wall_ratio_spacetime_over_space"] = r.wall_ratio();
  j["speedup"] = 1.0 / r.wall_ratio();
  j["global_solve_reduction"] = r.global_solve_reduction();
  write_json(out / "summary.json", j);
  return r;
}

/// Single run in the config's own mode. Spacetime runs are measured against a reference
/// when dt_reference is set.
template <int Dim>
RunResult run_single(const Experiment<Dim>& x, const fs::path& out) {
  const auto& c = x.cfg;
  switch (c.mode) {
    case RunMode::reference:
      return run_reference(x, out);
    case RunMode::two_level_space:
    case RunMode::two_level_spacetime: {
      const bool space = c.mode == RunMode::two_level_space;
      std::optional<ReferenceTrajectory<Dim>> ref;
      if (c.dt_reference > 0.0) {
        ref.emplace();
        run_reference(x, out / "reference", &*ref);
      }
      return run_two_level(x, space ? c.dt_local : c.dt_global, c.dt_local, space, out, ref ? &*ref : nullptr);
    }
    default:
      throw ValidationError(std::string("mode ") + to_string(c.mode) + " is not a single-run mode");
  }
}

}  // namespace twolevel
