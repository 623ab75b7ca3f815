#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "twolevel/assembly.hpp"

namespace twolevel::testing {

/// Manufactured problem on the unit square with unit coefficients:
/// u = T0 + A sin(pi x) sin(pi y) g(t), Dirichlet data from u on the whole boundary.
struct ManufacturedSolution {
  double T0 = 300.0;
  double A = 100.0;
  std::function<double(double)> g, dg;

  double exact(const Point<2>& p, double t) const {
    return T0 + A * std::sin(std::numbers::pi * p[0]) * std::sin(std::numbers::pi * p[1]) * g(t);
  }
  double source(const Point<2>& p, double t) const {
    const double s = std::sin(std::numbers::pi * p[0]) * std::sin(std::numbers::pi * p[1]);
    return A * s * (dg(t) + 2.0 * std::numbers::pi * std::numbers::pi * g(t));
  }
};

/// L2 norm of (u_h - u) on the mesh by 16-point collapsed Gauss quadrature.
inline double l2_error(const FieldState<2>& f, const std::function<double(const Point<2>&)>& u) {
  const auto rule = quadrature::collapsed_gauss<2>(4);
  const auto& m = *f.mesh;
  double s = 0.0;
  for (std::size_t e = 0; e < m.num_elements(); ++e) {
    const auto& el = m.element(static_cast<int>(e));
    for (const auto& q : rule.nodes) {
      Point<2> x{};
      double uh = 0.0;
      for (int v = 0; v < 3; ++v) {
        x = x + q.bary[v] * m.node(el[v]);
        uh += q.bary[v] * f.values[el[v]];
      }
      const double d = uh - u(x);
      s += q.weight * m.volume(static_cast<int>(e)) * d * d;
    }
  }
  return std::sqrt(s);
}

/// Backward-Euler solve of the manufactured problem; returns the L2 error at t_end.
inline double solve_manufactured(const ManufacturedSolution& ms, double h, double dt, double t_end) {
  auto mesh = std::make_shared<const Mesh<2>>(build_structured_mesh<2>({{0, 0}, {1, 1}}, h));
  ThermalProblem<2> p;
  p.mesh = mesh;
  p.material = std::make_shared<const MaterialModel>(constant_material(1.0, 1.0, 1.0));
  p.latent = false;
  p.top = TopFlux::none;
  p.dirichlet_nodes = boundary_nodes(*mesh);
  SolverSettings settings;
  settings.source_quadrature = 4;
  LinearSolver solver;
  std::vector<double> v(mesh->num_nodes());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = ms.exact(mesh->node(static_cast<int>(i)), 0.0);
  FieldState<2> state(mesh, std::move(v), 0.0);
  const int steps = static_cast<int>(std::llround(t_end / dt));
  for (int k = 1; k <= steps; ++k) {
    const double t = k * dt;
    p.dirichlet_values.clear();
    for (int n : p.dirichlet_nodes) p.dirichlet_values.push_back(ms.exact(mesh->node(n), t));
    p.source.smooth = {{[&ms, t](const Point<2>& x) { return ms.source(x, t); }, mesh->box()}};
    state = step_backward_euler(p, state, dt, settings, solver);
    state.time = t;
  }
  return l2_error(state, [&](const Point<2>& x) { return ms.exact(x, t_end); });
}

/// Least-squares slope of log(err) against log(step).
inline double loglog_slope(const std::vector<double>& step, const std::vector<double>& err) {
  const std::size_t n = step.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::log(step[i]), y = std::log(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Spatial study: g linear in t, so backward Euler adds no time error to the smooth part.
inline std::pair<std::vector<double>, std::vector<double>> spatial_study(const std::vector<double>& hs) {
  ManufacturedSolution ms;
  ms.g = [](double t) { return 1.0 + t; };
  ms.dg = [](double) { return 1.0; };
  std::vector<double> err;
  for (double h : hs) err.push_back(solve_manufactured(ms, h, 0.01, 0.1));
  return {hs, err};
}

/// Temporal study on a fine mesh with an oscillating amplitude.
inline std::pair<std::vector<double>, std::vector<double>> temporal_study(const std::vector<double>& dts, double h) {
  ManufacturedSolution ms;
  ms.g = [](double t) { return 1.0 + std::sin(4.0 * t); };
  ms.dg = [](double t) { return 4.0 * std::cos(4.0 * t); };
  std::vector<double> err;
  for (double dt : dts) err.push_back(solve_manufactured(ms, h, dt, 1.0));
  return {dts, err};
}

}  // namespace twolevel::testing
