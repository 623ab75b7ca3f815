#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "twolevel/field.hpp"

namespace twolevel {

/// ∫ T(x, y) dx along the horizontal line at height y from x0 to x1 (2D), by the
/// composite trapezoid rule at spacing h/2 on the sampled field.
template <int Dim>
double line_integral(const std::function<double(const Point<Dim>&)>& T, const std::array<double, Dim - 1>& at,
                     double x0, double x1, double h);

inline double control_temperature(const std::function<double(const Point<2>&)>& T, double y, double x0, double x1,
                                  double h) {
  return line_integral<2>(T, {y}, x0, x1, h);
}

inline double control_temperature(const FieldState<2>& field, double y, double x0, double x1) {
  if (!field.mesh->box().contains(Point<2>{x0, y}, 1e-12) || !field.mesh->box().contains(Point<2>{x1, y}, 1e-12))
    throw PointOutsideMesh({x0, y});
  return control_temperature([&](const Point<2>& p) { return field.evaluate(p); }, y, x0, x1, field.mesh->h());
}

/// ∫ T dx along the x-line through the fixed transverse coordinates `at` (y, or y and z),
/// trapezoid rule at spacing h/2.
template <int Dim>
double line_integral(const std::function<double(const Point<Dim>&)>& T, const std::array<double, Dim - 1>& at,
                     double x0, double x1, double h) {
  if (!(x1 > x0) || !(h > 0.0)) throw ValidationError("control line needs x1 > x0 and h > 0");
  const int n = std::max(1, static_cast<int>(std::ceil((x1 - x0) / (0.5 * h) - 1e-9)));
  const double dx = (x1 - x0) / n;
  double s = 0.0;
  for (int k = 0; k <= n; ++k) {
    Point<Dim> p{};
    p[0] = x0 + k * dx;
    for (int a = 1; a < Dim; ++a) p[a] = at[a - 1];
    s += (k == 0 || k == n ? 0.5 : 1.0) * T(p);
  }
  return s * dx;
}

/// Samples the local field inside the local box and the global field elsewhere.
template <int Dim>
double composite_value(const FieldState<Dim>& local, const FieldState<Dim>& global, const Point<Dim>& p) {
  if (local.mesh->box().contains(p, 1e-12 * local.mesh->h())) return local.evaluate(p);
  return global.evaluate(p);
}

/// ‖T − T_ref‖ / ‖T_ref‖ in L2 over the mesh of `field`, with the reference interpolated
/// at its nodes.
template <int Dim>
double relative_l2(const FieldState<Dim>& field, const FieldState<Dim>& reference) {
  const auto& m = *field.mesh;
  std::vector<double> ref(m.num_nodes()), diff(m.num_nodes());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    ref[i] = reference.evaluate(m.node(static_cast<int>(i)));
    diff[i] = field.values[i] - ref[i];
  }
  const double rn = l2_norm(m, std::span<const double>(ref));
  return l2_norm(m, std::span<const double>(diff)) / std::max(rn, 1e-300);
}

struct ErrorReport {
  std::vector<double> time;
  std::vector<std::string> kind;
  std::vector<double> rel_l2;
  std::vector<double> T_star;

  void add(double t, std::string k, double e, double ts) {
    if (!time.empty() && !(t > time.back())) throw ValidationError("error report time stamps must increase");
    if (!(e >= 0.0)) throw ValidationError("errors must be non-negative");
    time.push_back(t);
    kind.push_back(std::move(k));
    rel_l2.push_back(e);
    T_star.push_back(ts);
  }

  double mean() const {
    if (rel_l2.empty()) return 0.0;
    return std::accumulate(rel_l2.begin(), rel_l2.end(), 0.0) / rel_l2.size();
  }
};

/// Uniform reference trajectory indexed by time.
template <int Dim>
struct ReferenceTrajectory {
  double t0 = 0.0;
  double dt = 0.0;
  std::vector<FieldState<Dim>> fields;

  const FieldState<Dim>& at(double t) const {
    const double r = (t - t0) / dt;
    const long k = std::lround(r);
    if (k < 0 || k >= static_cast<long>(fields.size()) || std::abs(r - k) > 1e-6)
      throw ValidationError("reference trajectory has no field at t = " + std::to_string(t));
    return fields[k];
  }
};

/// Stepwise relative L2 errors on the local domain against a reference trajectory.
/// `traj` lists (time, kind, local field) entries.
template <int Dim>
ErrorReport error_metrics(const std::vector<std::tuple<double, std::string, FieldState<Dim>>>& traj,
                          const ReferenceTrajectory<Dim>& ref) {
  ErrorReport r;
  for (const auto& [t, kind, field] : traj) r.add(t, kind, relative_l2(field, ref.at(t)), 0.0);
  return r;
}

}  // namespace twolevel
