#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "twolevel/assembly.hpp"
#include "twolevel/interface.hpp"
#include "twolevel/timing.hpp"

namespace twolevel {

enum class Formulation { alternate, full };

/// Coupling load frozen by the multirate predictor.
enum class PredictorLoad { transmission, coupled };
/// Time at which micro step i samples the blended trace: its start t_n + iδt (weight i/m)
/// or its end t_n + (i+1)δt (weight (i+1)/m).
enum class TraceTiming { step_start, step_end };

struct CouplingSettings {
  double relaxation = 1.0;
  double tolerance = 1e-6;
  int max_iterations = 50;
  PredictorLoad predictor = PredictorLoad::coupled;
  TraceTiming trace_timing = TraceTiming::step_end;

  void validate() const {
    if (!(relaxation > 0.0 && relaxation <= 1.0)) throw ValidationError("relaxation must lie in (0, 1]");
    if (!(tolerance > 0.0 && tolerance < 1.0)) throw ValidationError("coupling tolerance must lie in (0, 1)");
    if (max_iterations < 1) throw ValidationError("coupling iteration cap must be at least 1");
  }
};

/// Static data of a two-level simulation: global mesh, materials, boundary data and
/// the two source models (local Gaussian, global Gaussian or distributed).
template <int Dim>
struct TwoLevelModel {
  std::shared_ptr<const Mesh<Dim>> global_mesh;
  std::shared_ptr<const MaterialModel> global_material;
  std::shared_ptr<const MaterialModel> local_material;
  ThermalBC bc;
  Formulation formulation = Formulation::alternate;
  CouplingSettings coupling;
  SolverSettings solver;
  std::function<SourceTerm<Dim>(double t_old, double t_new)> local_source;
  std::function<SourceTerm<Dim>(double t_old, double t_new)> global_source;
};

/// Solve counters and wall-clock of the two sub-problems.
struct TwoLevelCounters {
  long global_solves = 0;
  long local_solves = 0;
  long coupling_iterations = 0;
  double global_seconds = 0.0;
  double local_seconds = 0.0;
  double assembly_seconds = 0.0;  // part of the two above
  long picard_iterations = 0;
};

template <int Dim>
struct TwoLevelState {
  FieldState<Dim> global;
  FieldState<Dim> local;
  InterfaceGamma<Dim> gamma;
  std::vector<double> trace;          // last Dirichlet data on gamma.trace_nodes
  LocatedPoints<Dim> local_nodes;     // local nodes located in the global mesh
  LocatedPoints<Dim> local_centroids; // local element centroids located in the global mesh
  int last_iterations = 0;
  double last_change = 0.0;
  std::vector<double> change_history;
  TwoLevelCounters counters;
  std::shared_ptr<LinearSolver> global_solver = std::make_shared<LinearSolver>();
  std::shared_ptr<LinearSolver> local_solver = std::make_shared<LinearSolver>();

  double time() const { return global.time; }
  const Mesh<Dim>& local_mesh() const { return *local.mesh; }
  const Box<Dim>& local_box() const { return local.mesh->box(); }
};

/// Rebuilds gamma and the cached point locations after the local mesh changed.
template <int Dim>
void refresh_geometry(TwoLevelState<Dim>& s) {
  const auto& lm = *s.local.mesh;
  const auto& gm = *s.global.mesh;
  s.gamma = extract_interface(lm, gm);
  s.local_nodes = LocatedPoints<Dim>::locate(gm, lm.nodes());
  std::vector<Point<Dim>> c(lm.num_elements());
  for (std::size_t e = 0; e < c.size(); ++e) c[e] = lm.centroid(static_cast<int>(e));
  s.local_centroids = LocatedPoints<Dim>::locate(gm, c);
  if (s.trace.size() != s.gamma.trace_nodes.size()) {
    s.trace.resize(s.gamma.trace_nodes.size());
    for (std::size_t k = 0; k < s.trace.size(); ++k) s.trace[k] = s.local.values[s.gamma.trace_nodes[k]];
  }
}

/// Both fields uniform at T0 at time t0 (the consistent initial two-level state).
template <int Dim>
TwoLevelState<Dim> make_two_level_state(const TwoLevelModel<Dim>& model, std::shared_ptr<const Mesh<Dim>> local_mesh,
                                        double T0, double t0) {
  TwoLevelState<Dim> s;
  s.global = FieldState<Dim>::constant(model.global_mesh, T0, t0);
  s.local = FieldState<Dim>::constant(std::move(local_mesh), T0, t0);
  refresh_geometry(s);
  return s;
}

namespace detail {

template <int Dim>
void scatter(const Mesh<Dim>& mesh, const PointLocation<Dim>& loc, double value, std::vector<double>& rhs) {
  const auto& el = mesh.element(loc.element);
  for (int v = 0; v <= Dim; ++v) rhs[el[v]] += value * loc.bary[v];
}

template <int Dim>
double facet_value(const InterfaceFacet<Dim>& f, const InterfacePoint<Dim>& q, const std::vector<double>& local) {
  double s = 0.0;
  for (int k = 0; k < Dim; ++k) s += q.facet_bary[k] * local[f.facet.nodes[k]];
  return s;
}

}  // namespace detail

/// ∫_γ (κ⁺ − κ⁻) ∂T⁻/∂n w for every global test function w, n pointing out of Ω₋.
/// kappa_plus(facet, point) and kappa_minus(facet, point) return the two conductivities
/// at an interface quadrature point; ∂T⁻/∂n is the gradient of the adjacent local element.
template <int Dim, class KPlus, class KMinus>
std::vector<double> transmission_load(const FieldState<Dim>& local, const InterfaceGamma<Dim>& gamma,
                                      const Mesh<Dim>& global_mesh, KPlus&& kappa_plus, KMinus&& kappa_minus) {
  std::vector<double> rhs(global_mesh.num_nodes(), 0.0);
  for (const auto& f : gamma.facets) {
    const double dTdn = dot(local.gradient(f.facet.element), f.normal);
    if (dTdn == 0.0) continue;
    for (const auto& q : f.points) {
      const double jump = kappa_plus(f, q) - kappa_minus(f, q);
      if (jump == 0.0) continue;
      detail::scatter(global_mesh, q.global, q.weight * jump * dTdn, rhs);
    }
  }
  return rhs;
}

/// Transmission load with κ⁺ at the global field and κ⁻ at the local field.
template <int Dim>
std::vector<double> transmission_load(const TwoLevelModel<Dim>& model, const TwoLevelState<Dim>& s,
                                      const std::vector<double>& global_values, const FieldState<Dim>& local) {
  const auto& gm = *model.global_mesh;
  const auto& gmat = *model.global_material;
  const auto& lmat = *model.local_material;
  return transmission_load(
      local, s.gamma, gm,
      [&](const InterfaceFacet<Dim>&, const InterfacePoint<Dim>& q) {
        const auto& el = gm.element(q.global.element);
        double T = 0.0;
        for (int v = 0; v <= Dim; ++v) T += q.global.bary[v] * global_values[el[v]];
        return conductivity(gmat, T);
      },
      [&](const InterfaceFacet<Dim>& f, const InterfacePoint<Dim>& q) {
        return conductivity(lmat, detail::facet_value(f, q, local.values));
      });
}

/// Overlap terms of the full global formulation, integrated on the local mesh and
/// mapped into the global basis:
///   − (c₋ρ₋κ₊/κ₋ − c₊ρ₊) (T⁻ − T⁻_old)/Δt            (vertex quadrature, lumped)
///   + (κ₊/κ₋) Q₋                                      (local source quadrature)
///   + (κ₊/κ₋) κ₋′ |∇T⁻|² − κ₊′ |∇T⁻|²                 (element centroids)
///   + [q₊ − (κ₊/κ₋) q₋] on the local top face
/// All coefficients are evaluated at T⁻, so the load does not depend on the global
/// iterate. The global source itself is switched off inside Ω₋ by the caller.
template <int Dim>
class OverlapLoad {
 public:
  OverlapLoad(const TwoLevelModel<Dim>& model, const TwoLevelState<Dim>& s, const FieldState<Dim>& local,
              const std::vector<double>& local_old, double dt, const SourceTerm<Dim>& local_source)
      : load_(model.global_mesh->num_nodes(), 0.0) {
    const auto& lm = *local.mesh;
    const auto& gm = *model.global_mesh;
    const auto& gmat = *model.global_material;
    const auto& lmat = *model.local_material;
    const auto& Tl = local.values;
    auto ratio = [&](double T) { return conductivity(gmat, T) / conductivity(lmat, T); };

    const auto& lumped = lm.lumped_volumes();
    for (std::size_t k = 0; k < lm.num_nodes(); ++k) {
      const double rate = (Tl[k] - local_old[k]) / dt;
      if (rate == 0.0) continue;
      const double cm = step_capacity(lmat, local_old[k], Tl[k], true) * lmat.density;
      const double cp = heat_capacity(gmat, Tl[k]) * gmat.density;
      detail::scatter(gm, s.local_nodes.locations[k], -lumped[k] * (cm * ratio(Tl[k]) - cp) * rate, load_);
    }

    for_each_source_sample(lm, local_source, model.solver.source_quadrature,
                           [&](int e, const auto& bary, const SourceSample<Dim>& smp) {
                             double T = 0.0;
                             const auto& el = lm.element(e);
                             for (int v = 0; v <= Dim; ++v) T += bary[v] * Tl[el[v]];
                             detail::scatter(gm, gm.locate(smp.x), smp.value * ratio(T), load_);
                           });

    for (std::size_t e = 0; e < lm.num_elements(); ++e) {
      const int ei = static_cast<int>(e);
      const auto& el = lm.element(ei);
      double Tm = 0.0;
      for (int v : el) Tm += Tl[v];
      Tm /= Dim + 1;
      const auto gl = local.gradient(ei);
      const double val =
          (ratio(Tm) * conductivity_derivative(lmat, Tm) - conductivity_derivative(gmat, Tm)) * dot(gl, gl);
      if (val == 0.0) continue;
      const double share = val * lm.volume(ei) / (Dim + 1);
      for (int v : el) detail::scatter(gm, s.local_nodes.locations[v], share, load_);
    }

    for (const auto& f : lm.boundary_facets()) {
      if (f.tag != BoundaryTag::top) continue;
      const double share = f.measure / Dim;
      for (int k : f.nodes) {
        const double val = conv_flux_global(model.bc, Tl[k]) - ratio(Tl[k]) * robin_flux_local(model.bc, Tl[k]);
        if (val != 0.0) detail::scatter(gm, s.local_nodes.locations[k], share * val, load_);
      }
    }
  }

  void add(std::vector<double>& rhs) const {
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] += load_[i];
  }

 private:
  std::vector<double> load_;
};

/// One global backward-Euler step of size dt from `from` (global field at t_old).
/// The coupling load is either recomputed from `local` at every Picard iterate, or, when
/// `frozen` is given, taken as that fixed vector (predictor).
template <int Dim>
FieldState<Dim> solve_global(const TwoLevelModel<Dim>& model, TwoLevelState<Dim>& s, const FieldState<Dim>& from,
                             double dt, const FieldState<Dim>& local, const std::vector<double>& local_old,
                             const std::vector<double>* frozen = nullptr, const std::vector<double>* guess = nullptr) {
  Stopwatch sw;
  const double t_old = from.time, t_new = from.time + dt;
  ThermalProblem<Dim> p;
  p.mesh = model.global_mesh;
  p.material = model.global_material;
  p.latent = false;
  p.bc = model.bc;
  p.top = TopFlux::convection;
  p.dirichlet_nodes = bottom_nodes(*p.mesh);
  p.dirichlet_values.assign(p.dirichlet_nodes.size(), model.bc.T_build_plate);
  if (model.global_source) p.source = model.global_source(t_old, t_new);
  const bool full = model.formulation == Formulation::full;
  if (full) {
    const Box<Dim> lb = s.local_box();
    p.source_scale = [lb](const Point<Dim>& x) { return lb.strictly_contains(x) ? 0.0 : 1.0; };
  }
  std::optional<OverlapLoad<Dim>> overlap;
  if (frozen) {
    p.extra_rhs = [frozen](const std::vector<double>&, std::vector<double>& rhs) {
      for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] += (*frozen)[i];
    };
  } else {
    const SourceTerm<Dim> ls = full && model.local_source ? model.local_source(t_old, t_new) : SourceTerm<Dim>{};
    if (full) overlap.emplace(model, s, local, local_old, dt, ls);
    p.extra_rhs = [&](const std::vector<double>& lag, std::vector<double>& rhs) {
      const auto tr = transmission_load(model, s, lag, local);
      for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] += tr[i];
      if (overlap) overlap->add(rhs);
    };
    p.extra_rhs_depends_on_lag = !model.global_material->conductivity_table.is_constant();
  }
  StepStats st;
  auto out = step_backward_euler(p, from, dt, model.solver, *s.global_solver, &st, guess);
  out.time = t_new;
  s.counters.assembly_seconds += st.assembly_seconds;
  s.counters.picard_iterations += st.picard_iterations;
  s.counters.global_solves += 1;
  s.counters.global_seconds += sw.seconds();
  return out;
}

/// Frozen coupling load for a predictor, evaluated once at the current global field and
/// the last converged local field. With PredictorLoad::coupled the full formulation also
/// freezes the overlap terms (local source over the step, no time-rate part).
template <int Dim>
std::vector<double> frozen_coupling_load(const TwoLevelModel<Dim>& model, const TwoLevelState<Dim>& s, double t_old,
                                         double t_new) {
  auto load = transmission_load(model, s, s.global.values, s.local);
  if (model.formulation == Formulation::full && model.coupling.predictor == PredictorLoad::coupled) {
    const SourceTerm<Dim> ls = model.local_source ? model.local_source(t_old, t_new) : SourceTerm<Dim>{};
    OverlapLoad<Dim> ov(model, s, s.local, s.local.values, t_new - t_old, ls);
    ov.add(load);
  }
  return load;
}

/// One local backward-Euler step of size dt from `from` with Dirichlet `trace` on γ_D.
template <int Dim>
FieldState<Dim> solve_local(const TwoLevelModel<Dim>& model, TwoLevelState<Dim>& s, const FieldState<Dim>& from,
                            double dt, const std::vector<double>& trace, const std::vector<double>* guess = nullptr) {
  if (trace.size() != s.gamma.trace_nodes.size())
    throw ValidationError("trace size does not match the number of interface nodes");
  Stopwatch sw;
  ThermalProblem<Dim> p;
  p.mesh = from.mesh;
  p.material = model.local_material;
  p.latent = true;
  p.bc = model.bc;
  p.top = TopFlux::convection_radiation;
  p.dirichlet_nodes = s.gamma.trace_nodes;
  p.dirichlet_values = trace;
  if (model.local_source) p.source = model.local_source(from.time, from.time + dt);
  StepStats st;
  auto out = step_backward_euler(p, from, dt, model.solver, *s.local_solver, &st, guess);
  out.time = from.time + dt;
  s.counters.assembly_seconds += st.assembly_seconds;
  s.counters.picard_iterations += st.picard_iterations;
  s.counters.local_solves += 1;
  s.counters.local_seconds += sw.seconds();
  return out;
}

/// Starting data for a coupled solve.
template <int Dim>
struct CouplingStart {
  FieldState<Dim> global_from;           // global field at the start of the global step
  double global_dt = 0.0;
  FieldState<Dim> local_from;            // local field at the start of the local step
  double local_dt = 0.0;
  std::vector<double> local_rate_origin; // local field the overlap time-rate is measured from
  std::vector<double> trace;             // warm-start trace
  FieldState<Dim> local_guess;           // local field used for the first coupling load
  const std::vector<double>* global_guess = nullptr;
};

/// Relaxed fixed-point iteration between the global and local problems. Each iteration:
/// global solve with the coupling load of the latest local field, trace sampling,
/// relaxation, local solve. The trace change is measured before relaxation.
template <int Dim>
void two_level_iterate(const TwoLevelModel<Dim>& model, TwoLevelState<Dim>& s, CouplingStart<Dim> start) {
  const auto& cs = model.coupling;
  std::vector<double> prev = std::move(start.trace);
  FieldState<Dim> local = std::move(start.local_guess);
  FieldState<Dim> global;
  std::vector<double> gguess;
  if (start.global_guess) gguess = *start.global_guess;
  s.change_history.clear();
  double change = 0.0;
  for (int it = 1;; ++it) {
    global = solve_global(model, s, start.global_from, start.global_dt, local, start.local_rate_origin, nullptr,
                          gguess.empty() ? nullptr : &gguess);
    const auto fresh = s.gamma.trace_of(global);
    double d = 0.0, n = 0.0;
    for (std::size_t k = 0; k < fresh.size(); ++k) {
      d += (fresh[k] - prev[k]) * (fresh[k] - prev[k]);
      n += fresh[k] * fresh[k];
    }
    change = std::sqrt(d) / std::max(std::sqrt(n), 1e-12);
    s.change_history.push_back(change);
    std::vector<double> trace(fresh.size());
    for (std::size_t k = 0; k < fresh.size(); ++k)
      trace[k] = cs.relaxation * fresh[k] + (1.0 - cs.relaxation) * prev[k];
    local = solve_local(model, s, start.local_from, start.local_dt, trace, &local.values);
    prev = std::move(trace);
    gguess = global.values;
    s.counters.coupling_iterations += 1;
    if (change < cs.tolerance) {
      s.last_iterations = it;
      break;
    }
    if (it >= cs.max_iterations) throw CouplingDivergence(it, change);
  }
  s.last_change = change;
  s.global = std::move(global);
  s.local = std::move(local);
  s.trace = std::move(prev);
}

/// One space-only two-level step of size dt: both problems advance by dt, warm-started
/// from the previous trace.
template <int Dim>
void two_level_step(const TwoLevelModel<Dim>& model, TwoLevelState<Dim>& s, double dt) {
  CouplingStart<Dim> st;
  st.global_from = s.global;
  st.global_dt = dt;
  st.local_from = s.local;
  st.local_dt = dt;
  st.local_rate_origin = s.local.values;
  st.trace = s.trace;
  st.local_guess = s.local;
  two_level_iterate(model, s, std::move(st));
}

struct ConsistencyReport {
  double local_overlap = 0.0;   // ‖T* − T⁻‖ on Ω₋
  double exterior = 0.0;        // ‖T* − T⁺‖ on Ω₊ \ Ω₋
  double global_overlap = 0.0;  // ‖T* − T⁺‖ on Ω₊ ∩ Ω₋
};

/// L2 norm of a P1 field restricted to the elements selected by `keep(e)`.
template <int Dim, class Keep>
double l2_norm_where(const Mesh<Dim>& mesh, const std::vector<double>& nodal, Keep&& keep) {
  double s = 0.0;
  constexpr double diag = 2.0 / ((Dim + 1) * (Dim + 2)), off = 1.0 / ((Dim + 1) * (Dim + 2));
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    const int ei = static_cast<int>(e);
    if (!keep(ei)) continue;
    const auto& el = mesh.element(ei);
    double q = 0.0;
    for (int a = 0; a <= Dim; ++a)
      for (int b = 0; b <= Dim; ++b) q += (a == b ? diag : off) * nodal[el[a]] * nodal[el[b]];
    s += mesh.volume(ei) * q;
  }
  return std::sqrt(std::max(s, 0.0));
}

/// Discrepancies between a reference field and the two-level pair. The global mesh is
/// split by element centroids.
template <int Dim>
ConsistencyReport consistency_diagnostic(const TwoLevelState<Dim>& s, const FieldState<Dim>& reference) {
  ConsistencyReport r;
  const auto& lm = *s.local.mesh;
  const auto& gm = *s.global.mesh;
  std::vector<double> dl(lm.num_nodes()), dg(gm.num_nodes());
  for (std::size_t i = 0; i < dl.size(); ++i)
    dl[i] = reference.evaluate(lm.node(static_cast<int>(i))) - s.local.values[i];
  for (std::size_t i = 0; i < dg.size(); ++i)
    dg[i] = reference.evaluate(gm.node(static_cast<int>(i))) - s.global.values[i];
  r.local_overlap = l2_norm(lm, std::span<const double>(dl));
  const Box<Dim> lb = s.local_box();
  r.exterior = l2_norm_where(gm, dg, [&](int e) { return !lb.strictly_contains(gm.centroid(e)); });
  r.global_overlap = l2_norm_where(gm, dg, [&](int e) { return lb.strictly_contains(gm.centroid(e)); });
  return r;
}

}  // namespace twolevel
