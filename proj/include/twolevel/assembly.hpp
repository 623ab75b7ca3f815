#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "twolevel/field.hpp"
#include "twolevel/materials.hpp"
#include "twolevel/sources.hpp"
#include "twolevel/sparse.hpp"
#include "twolevel/timing.hpp"

namespace twolevel {

enum class TopFlux { none, convection, convection_radiation };

/// Everything needed for one implicit step on one mesh.
template <int Dim>
struct ThermalProblem {
  std::shared_ptr<const Mesh<Dim>> mesh;
  std::shared_ptr<const MaterialModel> material;
  bool latent = false;
  ThermalBC bc;
  TopFlux top = TopFlux::convection;
  std::vector<int> dirichlet_nodes;
  std::vector<double> dirichlet_values;
  SourceTerm<Dim> source;
  std::function<double(const Point<Dim>&)> source_scale;  // optional pointwise factor on Q
  /// Optional extra load evaluated at the lagged temperature (coupling terms).
  std::function<void(const std::vector<double>& T_lag, std::vector<double>& rhs)> extra_rhs;
  bool extra_rhs_depends_on_lag = false;

  /// Coefficients independent of temperature: one Picard iteration is exact.
  bool is_linear() const {
    const auto& m = *material;
    const bool latent_active = latent && m.latent_heat > 0.0;
    const bool radiation = top == TopFlux::convection_radiation && bc.emissivity > 0.0;
    return m.conductivity_table.is_constant() && m.capacity_table.is_constant() && !latent_active && !radiation &&
           !extra_rhs_depends_on_lag;
  }
};

/// Nodes on the bottom face of a mesh.
template <int Dim>
std::vector<int> bottom_nodes(const Mesh<Dim>& mesh) {
  std::vector<char> on(mesh.num_nodes(), 0);
  for (const auto& f : mesh.boundary_facets())
    if (f.tag == BoundaryTag::bottom)
      for (int n : f.nodes) on[n] = 1;
  std::vector<int> out;
  for (std::size_t i = 0; i < on.size(); ++i)
    if (on[i]) out.push_back(static_cast<int>(i));
  return out;
}

/// Nodes on the whole boundary of a mesh.
template <int Dim>
std::vector<int> boundary_nodes(const Mesh<Dim>& mesh) {
  std::vector<char> on(mesh.num_nodes(), 0);
  for (const auto& f : mesh.boundary_facets())
    for (int n : f.nodes) on[n] = 1;
  std::vector<int> out;
  for (std::size_t i = 0; i < on.size(); ++i)
    if (on[i]) out.push_back(static_cast<int>(i));
  return out;
}

/// Load vector of the step's volumetric source.
template <int Dim>
std::vector<double> source_load(const ThermalProblem<Dim>& p, int order) {
  std::vector<double> rhs(p.mesh->num_nodes(), 0.0);
  if (p.source_scale)
    add_source_load(*p.mesh, p.source, order, p.source_scale, rhs);
  else
    add_source_load(*p.mesh, p.source, order, rhs);
  return rhs;
}

/// Backward-Euler system with coefficients frozen at T_lag:
///   (rho c / dt) M_L (T - T_old) + (rho chi / dt) M_L [f(T) - f(T_old)] + K(kappa) T + R T = F + R T_amb
/// with f(T) replaced by its tangent at T_lag, so a converged iterate satisfies the
/// chord form exactly. M_L is the lumped (vertex-quadrature) mass, kappa is taken at
/// the element mean of T_lag, R holds the lumped top-surface exchange coefficients.
/// Dirichlet data are recorded but not yet eliminated.
template <int Dim>
SparseSystem assemble_system(const ThermalProblem<Dim>& p, const std::vector<double>& T_old,
                             const std::vector<double>& T_lag, double dt, const std::vector<double>& load) {
  const Mesh<Dim>& mesh = *p.mesh;
  const MaterialModel& mat = *p.material;
  const std::size_t n = mesh.num_nodes();
  if (T_old.size() != n || T_lag.size() != n || load.size() != n)
    throw ValidationError("assembly: field sizes do not match the mesh");
  if (!(dt > 0.0)) throw ValidationError("time step must be positive");

  SparseSystem sys;
  sys.row_ptr = &mesh.row_ptr();
  sys.col_idx = &mesh.col_idx();
  sys.values.assign(mesh.col_idx().size(), 0.0);
  sys.rhs = load;
  sys.dirichlet_nodes = p.dirichlet_nodes;
  sys.dirichlet_values = p.dirichlet_values;

  constexpr int kv = Dim + 1;
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    const int ei = static_cast<int>(e);
    const auto& el = mesh.element(ei);
    double Tc = 0.0;
    for (int v : el) Tc += T_lag[v];
    const double k = conductivity(mat, Tc / kv) * mesh.volume(ei);
    const auto& g = mesh.gradients(ei);
    const auto pos = mesh.element_csr(ei);
    for (int a = 0; a < kv; ++a)
      for (int b = 0; b < kv; ++b) sys.values[pos[a * kv + b]] += k * dot(g[a], g[b]);
  }

  const auto& rp = mesh.row_ptr();
  const auto& ci = mesh.col_idx();
  auto diag = [&](std::size_t i) {
    return static_cast<int>(std::lower_bound(ci.begin() + rp[i], ci.begin() + rp[i + 1], static_cast<int>(i)) -
                            ci.begin());
  };
  const auto& lumped = mesh.lumped_volumes();
  const bool latent = p.latent && mat.latent_heat > 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double m = mat.density * heat_capacity(mat, T_lag[i]) * lumped[i] / dt;
    sys.values[diag(i)] += m;
    sys.rhs[i] += m * T_old[i];
    if (!latent) continue;
    // chi (f(T) - f(T_old)) linearized about T_lag
    const double L = mat.density * mat.latent_heat * lumped[i] / dt;
    const double d = phase_fraction_derivative(mat, T_lag[i]);
    sys.values[diag(i)] += L * d;
    sys.rhs[i] += L * (d * T_lag[i] - (phase_fraction(mat, T_lag[i]) - phase_fraction(mat, T_old[i])));
  }

  if (p.top != TopFlux::none) {
    for (const auto& f : mesh.boundary_facets()) {
      if (f.tag != BoundaryTag::top) continue;
      const double share = f.measure / Dim;
      for (int node : f.nodes) {
        double h = p.bc.h_conv;
        if (p.top == TopFlux::convection_radiation) h += radiation_coefficient(p.bc, T_lag[node]);
        sys.values[diag(node)] += share * h;
        sys.rhs[node] += share * h * p.bc.T_ambient;
      }
    }
  }

  if (p.extra_rhs) p.extra_rhs(T_lag, sys.rhs);
  return sys;
}

template <int Dim>
SparseSystem assemble_system(const ThermalProblem<Dim>& p, const std::vector<double>& T_old,
                             const std::vector<double>& T_lag, double dt, int source_order = 4) {
  return assemble_system(p, T_old, T_lag, dt, source_load(p, source_order));
}

struct StepStats {
  int picard_iterations = 0;
  std::vector<double> increments;
  int linear_iterations = 0;
  double assembly_seconds = 0.0;
};

inline double relative_change(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0, s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    s += a[i] * a[i];
  }
  return std::sqrt(d) / std::max(std::sqrt(s), 1e-12);
}

/// One implicit Euler step with Picard iteration on the temperature-dependent coefficients.
/// `guess` seeds the lagged field (defaults to the old state).
template <int Dim>
FieldState<Dim> step_backward_euler(const ThermalProblem<Dim>& p, const FieldState<Dim>& state, double dt,
                                    const SolverSettings& settings, LinearSolver& solver,
                                    StepStats* stats = nullptr, const std::vector<double>* guess = nullptr) {
  if (!(dt > 0.0)) throw ValidationError("time step must be positive");
  if (state.mesh.get() != p.mesh.get() && state.values.size() != p.mesh->num_nodes())
    throw ValidationError("state and problem live on different meshes");
  Stopwatch asw;
  const auto load = source_load(p, settings.source_quadrature);
  double assembly = asw.seconds();
  std::vector<double> lag = guess ? *guess : state.values;
  const bool linear = p.is_linear();
  StepStats local;
  double inc = 0.0, theta = 1.0;
  std::vector<double> r, r_prev;
  for (int it = 1;; ++it) {
    asw = Stopwatch();
    auto sys = assemble_system(p, state.values, lag, dt, load);
    apply_dirichlet(sys);
    assembly += asw.seconds();
    auto next = solver.solve(sys, settings, &lag);
    local.linear_iterations += solver.last().iterations;
    inc = relative_change(next, lag);
    local.increments.push_back(inc);
    local.picard_iterations = it;
    if (linear || inc < settings.picard_tolerance) {
      lag = std::move(next);
      break;
    }
    if (it >= settings.picard_max_iterations) throw PicardDivergence(it, inc);
    // Aitken relaxation of the Picard update
    r.resize(lag.size());
    for (std::size_t i = 0; i < lag.size(); ++i) r[i] = next[i] - lag[i];
    if (!r_prev.empty()) {
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < r.size(); ++i) {
        const double d = r[i] - r_prev[i];
        num += r_prev[i] * d;
        den += d * d;
      }
      if (den > 0.0) theta = std::clamp(-theta * num / den, 0.05, 1.5);
    }
    for (std::size_t i = 0; i < lag.size(); ++i) lag[i] += theta * r[i];
    std::swap(r, r_prev);
  }
  local.assembly_seconds = assembly;
  if (stats) *stats = std::move(local);
  return FieldState<Dim>(p.mesh, std::move(lag), state.time + dt);
}

/// Monolithic model of the whole part: one mesh, one material, bottom held at T_bp.
template <int Dim>
struct MonolithicModel {
  std::shared_ptr<const Mesh<Dim>> mesh;
  std::shared_ptr<const MaterialModel> material;
  ThermalBC bc;
  TopFlux top = TopFlux::convection_radiation;
  bool latent = true;
  std::function<SourceTerm<Dim>(double t_old, double t_new)> source;
  SolverSettings solver;
};

/// Uniform implicit time stepping of the monolithic model. `observer` sees the initial
/// field and every computed step.
template <int Dim>
FieldState<Dim> solve_monolithic(const MonolithicModel<Dim>& model, double t0, double dt, int steps,
                                 double T0, const std::function<void(const FieldState<Dim>&)>& observer = {}) {
  if (!(dt > 0.0)) throw ValidationError("time step must be positive");
  if (steps < 0) throw ValidationError("step count must be non-negative");
  ThermalProblem<Dim> p;
  p.mesh = model.mesh;
  p.material = model.material;
  p.latent = model.latent;
  p.bc = model.bc;
  p.top = model.top;
  p.dirichlet_nodes = bottom_nodes(*model.mesh);
  p.dirichlet_values.assign(p.dirichlet_nodes.size(), model.bc.T_build_plate);
  auto state = FieldState<Dim>::constant(model.mesh, T0, t0);
  if (observer) observer(state);
  LinearSolver solver;
  for (int k = 0; k < steps; ++k) {
    const double t_old = t0 + k * dt, t_new = t0 + (k + 1) * dt;
    p.source = model.source ? model.source(t_old, t_new) : SourceTerm<Dim>{};
    state = step_backward_euler(p, state, dt, model.solver, solver);
    state.time = t_new;
    if (observer) observer(state);
  }
  return state;
}

/// Trajectory-returning variant.
template <int Dim>
std::vector<FieldState<Dim>> solve_monolithic_trajectory(const MonolithicModel<Dim>& model, double t0, double dt,
                                                         int steps, double T0) {
  std::vector<FieldState<Dim>> out;
  solve_monolithic<Dim>(model, t0, dt, steps, T0, [&](const FieldState<Dim>& s) { out.push_back(s); });
  return out;
}

}  // namespace twolevel
