#pragma once

#include <algorithm>
#include <vector>

#include "twolevel/field.hpp"
#include "twolevel/quadrature.hpp"

namespace twolevel {

template <int Dim>
struct InterfacePoint {
  Point<Dim> x{};
  double weight = 0.0;                 // physical quadrature weight
  std::array<double, Dim> facet_bary;  // w.r.t. the facet's local nodes
  PointLocation<Dim> global;           // containing global element
};

template <int Dim>
struct InterfaceFacet {
  BoundaryFacet<Dim> facet;  // facet of the local mesh
  Point<Dim> normal{};       // outward from the local domain
  std::vector<InterfacePoint<Dim>> points;
};

/// Quadrature realization of the immersed interface: lateral and bottom facets of the
/// local mesh, each point located in the global mesh. Also carries the local nodes on
/// which the global trace is imposed.
template <int Dim>
struct InterfaceGamma {
  std::vector<InterfaceFacet<Dim>> facets;
  std::vector<int> trace_nodes;
  LocatedPoints<Dim> trace_locations;

  double measure() const {
    double m = 0.0;
    for (const auto& f : facets)
      for (const auto& q : f.points) m += q.weight;
    return m;
  }

  /// Integral over gamma of f(point); f receives the quadrature point.
  template <class F>
  double integrate(F&& f) const {
    double s = 0.0;
    for (const auto& fc : facets)
      for (const auto& q : fc.points) s += q.weight * f(q);
    return s;
  }

  std::vector<double> trace_of(const FieldState<Dim>& global) const { return trace_locations.sample(global); }
};

template <int Dim>
InterfaceGamma<Dim> extract_interface(const Mesh<Dim>& local, const Mesh<Dim>& global) {
  if (!is_immersed(local.box(), global.box(), 1e-9 * std::min(local.h(), global.h())))
    throw LocalDomainEscapes("local domain must be strictly inside the global domain laterally and at the bottom, "
                             "with its top face on the global top face");
  InterfaceGamma<Dim> g;
  const auto rule = quadrature::degree2<Dim - 1>();
  std::vector<char> is_trace(local.num_nodes(), 0);
  for (const auto& f : local.boundary_facets()) {
    if (f.tag == BoundaryTag::top) continue;
    InterfaceFacet<Dim> fc;
    fc.facet = f;
    fc.normal = f.outward_normal();
    for (const auto& qn : rule.nodes) {
      InterfacePoint<Dim> q;
      for (int k = 0; k < Dim; ++k) {
        q.facet_bary[k] = qn.bary[k];
        q.x = q.x + qn.bary[k] * local.node(f.nodes[k]);
      }
      q.weight = qn.weight * f.measure;
      q.global = global.locate(q.x);
      fc.points.push_back(q);
    }
    for (int n : f.nodes) is_trace[n] = 1;
    g.facets.push_back(std::move(fc));
  }
  std::vector<Point<Dim>> pts;
  for (std::size_t n = 0; n < local.num_nodes(); ++n)
    if (is_trace[n]) {
      g.trace_nodes.push_back(static_cast<int>(n));
      pts.push_back(local.node(static_cast<int>(n)));
    }
  g.trace_locations = LocatedPoints<Dim>::locate(global, pts);
  return g;
}

}  // namespace twolevel
