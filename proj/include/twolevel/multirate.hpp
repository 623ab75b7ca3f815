#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "twolevel/scanpath.hpp"

namespace twolevel {

/// Macro step Δt split into m micro steps δt = Δt/m over [t0, t_end].
struct MacroSchedule {
  double t0 = 0.0;
  double t_end = 0.0;
  double macro_dt = 0.0;
  int micro_steps = 1;

  double micro_dt() const { return macro_dt / micro_steps; }
  int macro_count() const { return static_cast<int>(std::llround((t_end - t0) / macro_dt)); }
  double macro_time(int n) const { return t0 + n * macro_dt; }
  double micro_time(int n, int i) const { return t0 + (static_cast<double>(n) * micro_steps + i) * micro_dt(); }

  void validate() const {
    if (!(macro_dt > 0.0)) throw ValidationError("macro step must be positive");
    if (micro_steps < 1) throw ValidationError("micro step count must be at least 1");
    if (t_end < t0) throw ValidationError("end time precedes start time");
    const double r = (t_end - t0) / macro_dt;
    if (std::abs(r - std::round(r)) > 1e-9 * std::max(1.0, r))
      throw ValidationError("simulated interval must be an integer number of macro steps");
  }

  /// Schedule from Δt and δt; m = Δt/δt must be an integer.
  static MacroSchedule from_steps(double t0, double t_end, double macro_dt, double micro_dt) {
    const double r = macro_dt / micro_dt;
    if (!(micro_dt > 0.0) || std::abs(r - std::round(r)) > 1e-9 * r)
      throw ValidationError("macro step must be an integer multiple of the micro step");
    MacroSchedule s{t0, t_end, macro_dt, static_cast<int>(std::llround(r))};
    s.validate();
    return s;
  }
};

/// Convex combination (1 − i/m) a + (i/m) b of two traces.
inline std::vector<double> blend_traces(int i, int m, const std::vector<double>& a, const std::vector<double>& b) {
  if (m < 1 || i < 0 || i > m) throw ValidationError("micro index must satisfy 0 <= i <= m");
  if (a.size() != b.size()) throw ValidationError("trace sizes differ");
  if (i == 0) return a;
  if (i == m) return b;
  const double w = static_cast<double>(i) / m;
  std::vector<double> out(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = (1.0 - w) * a[k] + w * b[k];
  return out;
}

/// Local boundary data of micro step i: (1 − i/m) T⁺ + (i/m) T̃⁺ sampled on γ_D.
template <int Dim>
std::vector<double> interpolate_trace(int i, int m, const FieldState<Dim>& T_plus, const FieldState<Dim>& T_pred,
                                      const InterfaceGamma<Dim>& gamma) {
  return blend_traces(i, m, gamma.trace_of(T_plus), gamma.trace_of(T_pred));
}

/// Uncoupled global step of size Δt with the coupling load frozen at the current state.
template <int Dim>
FieldState<Dim> predictor_global(const TwoLevelModel<Dim>& model, TwoLevelState<Dim>& s, double macro_dt) {
  const auto frozen = frozen_coupling_load(model, s, s.time(), s.time() + macro_dt);
  return solve_global(model, s, s.global, macro_dt, s.local, s.local.values, &frozen);
}

enum class StepKind { initial, predictor, micro, macro, reference };

inline const char* to_string(StepKind k) {
  switch (k) {
    case StepKind::initial: return "initial";
    case StepKind::predictor: return "predictor";
    case StepKind::micro: return "micro";
    case StepKind::macro: return "macro";
    case StepKind::reference: return "reference";
  }
  return "?";
}

/// What an observer sees after every solve of the time loop.
template <int Dim>
struct StepEvent {
  StepKind kind = StepKind::macro;
  double time = 0.0;
  int macro_index = 0;  // n of the interval [t_n, t_n + Δt]
  int micro_index = 0;  // i within the interval (micro events)
  int coupling_iterations = 0;
  double local_seconds = 0.0;
  double global_seconds = 0.0;
  const FieldState<Dim>* local = nullptr;
  const FieldState<Dim>* global = nullptr;  // at micro events: the blended global estimate
  const TwoLevelState<Dim>* state = nullptr;
};

template <int Dim>
using StepObserver = std::function<void(const StepEvent<Dim>&)>;

/// One cycle of the multirate scheme over [t_n, t_n + Δt]:
///  predictor T̃⁺; micro steps i = 0..m−1 with trace weight i/m or (i+1)/m depending on
///  the trace timing (the last one is provisional); corrector coupling that re-solves the
///  last micro interval from the local state at t_n + (m−1)δt, so local time never runs
///  ahead of global time.
template <int Dim>
void macro_step(const TwoLevelModel<Dim>& model, TwoLevelState<Dim>& s, const MacroSchedule& sch, int n,
                const StepObserver<Dim>& observer = {}) {
  const int m = sch.micro_steps;
  const double dt = sch.micro_dt();
  auto emit = [&](StepKind kind, double t, int i, int iters, const FieldState<Dim>* local,
                  const FieldState<Dim>* global, double ls, double gs) {
    if (!observer) return;
    StepEvent<Dim> e;
    e.kind = kind;
    e.time = t;
    e.macro_index = n;
    e.micro_index = i;
    e.coupling_iterations = iters;
    e.local = local;
    e.global = global;
    e.local_seconds = ls;
    e.global_seconds = gs;
    e.state = &s;
    observer(e);
  };

  const double g0 = s.counters.global_seconds;
  auto pred = predictor_global(model, s, sch.macro_dt);
  pred.time = sch.macro_time(n + 1);
  emit(StepKind::predictor, pred.time, 0, 0, nullptr, &pred, 0.0, s.counters.global_seconds - g0);

  const auto tr_n = s.gamma.trace_of(s.global);
  const auto tr_pred = s.gamma.trace_of(pred);
  FieldState<Dim> local = s.local;
  FieldState<Dim> before_last = s.local;
  for (int i = 0; i < m; ++i) {
    const int k = model.coupling.trace_timing == TraceTiming::step_end ? i + 1 : i;
    const auto trace = blend_traces(k, m, tr_n, tr_pred);
    if (i == m - 1) before_last = local;
    const double l0 = s.counters.local_seconds;
    local = solve_local(model, s, local, dt, trace);
    local.time = sch.micro_time(n, i + 1);
    if (i < m - 1) {
      const double w = static_cast<double>(i + 1) / m;
      std::vector<double> blend(pred.values.size());
      for (std::size_t k = 0; k < blend.size(); ++k) blend[k] = (1.0 - w) * s.global.values[k] + w * pred.values[k];
      const FieldState<Dim> g(s.global.mesh, std::move(blend), local.time);
      emit(StepKind::micro, local.time, i + 1, 0, &local, &g, s.counters.local_seconds - l0, 0.0);
    }
  }

  const double l0 = s.counters.local_seconds, g1 = s.counters.global_seconds;
  CouplingStart<Dim> st;
  st.global_from = s.global;
  st.global_dt = sch.macro_dt;
  st.local_from = before_last;
  st.local_dt = dt;
  st.local_rate_origin = s.local.values;
  st.trace = tr_pred;
  st.local_guess = local;
  st.global_guess = &pred.values;
  two_level_iterate(model, s, std::move(st));
  const double t = sch.macro_time(n + 1);
  s.global.time = t;
  s.local.time = t;
  emit(StepKind::macro, t, m, s.last_iterations, &s.local, &s.global, s.counters.local_seconds - l0,
       s.counters.global_seconds - g1);
}

/// Optional moving local domain: relocated at macro boundaries after the corrector.
template <int Dim>
struct MovingDomain {
  LocalDomainPolicy<Dim> policy;
  ScanPath<Dim> path;
};

template <int Dim>
void maybe_relocate(TwoLevelState<Dim>& s, const std::optional<MovingDomain<Dim>>& moving, double t) {
  if (!moving || !moving->path.covers(t)) return;
  relocate_local<Dim>(s, moving->policy, laser_position(moving->path, t), scan_direction(moving->path, t));
}

/// Multirate time loop: the initial state is the consistent two-level state at t0, then
/// N = (t_end − t0)/Δt macro steps.
template <int Dim>
void run_spacetime(const TwoLevelModel<Dim>& model, TwoLevelState<Dim>& s, const MacroSchedule& sch,
                   const StepObserver<Dim>& observer = {}, const std::optional<MovingDomain<Dim>>& moving = {}) {
  sch.validate();
  if (observer) {
    StepEvent<Dim> e;
    e.kind = StepKind::initial;
    e.time = s.time();
    e.local = &s.local;
    e.global = &s.global;
    e.state = &s;
    observer(e);
  }
  const int N = sch.macro_count();
  for (int n = 0; n < N; ++n) {
    macro_step(model, s, sch, n, observer);
    maybe_relocate(s, moving, sch.macro_time(n + 1));
  }
}

/// Space-only two-level stepping with a uniform step for both problems.
template <int Dim>
void run_space(const TwoLevelModel<Dim>& model, TwoLevelState<Dim>& s, double t0, double t_end, double dt,
               const StepObserver<Dim>& observer = {}, const std::optional<MovingDomain<Dim>>& moving = {}) {
  MacroSchedule sch{t0, t_end, dt, 1};
  sch.validate();
  if (observer) {
    StepEvent<Dim> e;
    e.kind = StepKind::initial;
    e.time = s.time();
    e.local = &s.local;
    e.global = &s.global;
    e.state = &s;
    observer(e);
  }
  const int N = sch.macro_count();
  for (int n = 0; n < N; ++n) {
    const double l0 = s.counters.local_seconds, g0 = s.counters.global_seconds;
    two_level_step(model, s, dt);
    const double t = sch.macro_time(n + 1);
    s.global.time = t;
    s.local.time = t;
    if (observer) {
      StepEvent<Dim> e;
      e.kind = StepKind::macro;
      e.time = t;
      e.macro_index = n;
      e.coupling_iterations = s.last_iterations;
      e.local = &s.local;
      e.global = &s.global;
      e.local_seconds = s.counters.local_seconds - l0;
      e.global_seconds = s.counters.global_seconds - g0;
      e.state = &s;
      observer(e);
    }
    maybe_relocate(s, moving, t);
  }
}

}  // namespace twolevel
