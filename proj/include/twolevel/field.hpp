#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include "twolevel/mesh.hpp"

namespace twolevel {

/// Nodal temperature [K] bound to a mesh at a time instant [s].
template <int Dim>
struct FieldState {
  std::shared_ptr<const Mesh<Dim>> mesh;
  std::vector<double> values;
  double time = 0.0;

  FieldState() = default;
  FieldState(std::shared_ptr<const Mesh<Dim>> m, std::vector<double> v, double t)
      : mesh(std::move(m)), values(std::move(v)), time(t) {
    validate();
  }

  static FieldState constant(std::shared_ptr<const Mesh<Dim>> m, double value, double t) {
    std::vector<double> v(m->num_nodes(), value);
    return FieldState(std::move(m), std::move(v), t);
  }

  void validate() const {
    if (!mesh) throw ValidationError("field has no mesh");
    if (values.size() != mesh->num_nodes()) throw ValidationError("field size does not match the mesh node count");
    for (double v : values)
      if (!std::isfinite(v)) throw ValidationError("field contains non-finite values");
  }

  double evaluate(const PointLocation<Dim>& loc) const {
    const auto& el = mesh->element(loc.element);
    double s = 0.0;
    for (int v = 0; v <= Dim; ++v) s += loc.bary[v] * values[el[v]];
    return s;
  }

  double evaluate(const Point<Dim>& p) const { return evaluate(mesh->locate(p)); }

  /// Constant gradient of the P1 field on element e.
  Point<Dim> gradient(int e) const {
    const auto& g = mesh->gradients(e);
    const auto& el = mesh->element(e);
    Point<Dim> out{};
    for (int v = 0; v <= Dim; ++v) out = out + values[el[v]] * g[v];
    return out;
  }
};

/// Values of the linear finite-element interpolant of `field` at `points`.
template <int Dim>
std::vector<double> interpolate_field(const FieldState<Dim>& field, std::span<const Point<Dim>> points) {
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(field.evaluate(p));
  return out;
}

/// Pre-located sample points; avoids repeated point location for fixed point sets.
template <int Dim>
struct LocatedPoints {
  std::vector<PointLocation<Dim>> locations;

  static LocatedPoints locate(const Mesh<Dim>& mesh, std::span<const Point<Dim>> points) {
    LocatedPoints lp;
    lp.locations.reserve(points.size());
    for (const auto& p : points) lp.locations.push_back(mesh.locate(p));
    return lp;
  }

  std::vector<double> sample(const FieldState<Dim>& f) const {
    std::vector<double> out(locations.size());
    for (std::size_t i = 0; i < locations.size(); ++i) out[i] = f.evaluate(locations[i]);
    return out;
  }
};

/// L2(mesh) norm of a P1 field given by nodal values (exact for P1).
template <int Dim>
double l2_norm(const Mesh<Dim>& mesh, std::span<const double> nodal) {
  double s = 0.0;
  constexpr double diag = 2.0 / ((Dim + 1) * (Dim + 2)), off = 1.0 / ((Dim + 1) * (Dim + 2));
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.element(static_cast<int>(e));
    double q = 0.0;
    for (int a = 0; a <= Dim; ++a)
      for (int b = 0; b <= Dim; ++b) q += (a == b ? diag : off) * nodal[el[a]] * nodal[el[b]];
    s += mesh.volume(static_cast<int>(e)) * q;
  }
  return std::sqrt(std::max(s, 0.0));
}

}  // namespace twolevel
