#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "twolevel/field.hpp"
#include "twolevel/quadrature.hpp"

namespace twolevel {

struct LaserBeam {
  double power = 179.2;       // W
  double absorptivity = 0.38;
  double radius = 8.5e-5;     // m
  double depth = 5.0e-5;      // m
  double speed = 0.8;         // m/s

  void validate() const {
    if (!(power > 0.0) || !(radius > 0.0) || !(depth > 0.0))
      throw ValidationError("laser power, radius and depth must be positive");
    if (!(absorptivity > 0.0 && absorptivity <= 1.0)) throw ValidationError("absorptivity must lie in (0, 1]");
    if (!(speed >= 0.0)) throw ValidationError("scan speed must be non-negative");
  }
};

struct ThermalBC {
  double h_conv = 10.0;               // W/(m^2 K)
  double emissivity = 0.8;
  double sigma_sb = 5.670374419e-8;   // W/(m^2 K^4)
  double T_ambient = 298.15;          // K
  double T_build_plate = 298.15;      // K

  void validate() const {
    if (!(h_conv >= 0.0)) throw ValidationError("convection coefficient must be non-negative");
    if (!(emissivity >= 0.0 && emissivity <= 1.0)) throw ValidationError("emissivity must lie in [0, 1]");
    if (!(sigma_sb > 0.0)) throw ValidationError("Stefan-Boltzmann constant must be positive");
    if (!(T_ambient > 0.0) || !(T_build_plate > 0.0)) throw ValidationError("temperatures must be positive (K)");
  }
};

/// Q = P eta / (r d) exp(-(x-xc)^2/r^2 - (y-yc)^2/d^2)   [W/m^3]
inline double gaussian_source_2d(const LaserBeam& b, const Point<2>& c, const Point<2>& p) {
  const double dx = (p[0] - c[0]) / b.radius, dy = (p[1] - c[1]) / b.depth;
  return b.power * b.absorptivity / (b.radius * b.depth) * std::exp(-dx * dx - dy * dy);
}

/// Q = 6 sqrt(3) P eta / (2 pi r^2 d) exp(-3 dx^2/r^2 - 3 dy^2/r^2 - 3 dz^2/d^2)   [W/m^3]
inline double gaussian_source_3d(const LaserBeam& b, const Point<3>& c, const Point<3>& p) {
  const double dx = (p[0] - c[0]) / b.radius, dy = (p[1] - c[1]) / b.radius, dz = (p[2] - c[2]) / b.depth;
  const double peak = 6.0 * std::sqrt(3.0) * b.power * b.absorptivity / (2.0 * std::numbers::pi * b.radius * b.radius * b.depth);
  return peak * std::exp(-3.0 * (dx * dx + dy * dy + dz * dz));
}

template <int Dim>
double gaussian_source(const LaserBeam& b, const Point<Dim>& c, const Point<Dim>& p) {
  if constexpr (Dim == 2) return gaussian_source_2d(b, c, p);
  else return gaussian_source_3d(b, c, p);
}

/// Half-widths of the box outside which the Gaussian is below exp(-30) of its peak.
template <int Dim>
Point<Dim> gaussian_support(const LaserBeam& b) {
  Point<Dim> hw{};
  const double k = Dim == 2 ? std::sqrt(30.0) : std::sqrt(10.0);
  for (int a = 0; a < Dim - 1; ++a) hw[a] = k * b.radius;
  hw[Dim - 1] = k * b.depth;
  return hw;
}

/// The heated box of the distributed source: a horizontal segment on the top surface
/// swept during a step, extended by `width` across the scan line and `depth` downward.
struct HeatedBox {
  Point<3> start{};  // on the top surface
  Point<3> end{};
  double width = 0.0;
  double depth = 0.0;
  double density = 0.0;  // W/m^3

  double length() const { return norm(end - start); }
  double volume() const { return length() * width * depth; }

  bool contains(const Point<3>& p) const {
    const double L = length();
    if (L <= 0.0) return false;
    const Point<3> s = (1.0 / L) * (end - start);
    const Point<3> d = p - start;
    const double along = s[0] * d[0] + s[1] * d[1];
    const double across = -s[1] * d[0] + s[0] * d[1];
    const double below = start[2] - p[2];
    return along >= 0.0 && along <= L && std::abs(across) <= 0.5 * width && below >= 0.0 && below <= depth;
  }
};

/// Q+ = P eta / (r d v dt) inside the box swept from `start` to `end` during dt, 0 outside.
inline double distributed_source_3d(const LaserBeam& b, const Point<3>& start, const Point<3>& end, double dt,
                                    const Point<3>& p) {
  const double L = norm(end - start);
  if (std::abs(L - b.speed * dt) > 1e-9 * std::max(L, b.speed * dt))
    throw ValidationError("distributed source segment length must equal v * dt");
  HeatedBox box{start, end, b.radius, b.depth, 0.0};
  return box.contains(p) ? b.power * b.absorptivity / (b.radius * b.depth * b.speed * dt) : 0.0;
}

/// Outward heat flux through the local top surface: convection plus radiation.
inline double robin_flux_local(const ThermalBC& bc, double T) {
  const double T4 = T * T * T * T, Ta4 = std::pow(bc.T_ambient, 4);
  return bc.h_conv * (T - bc.T_ambient) + bc.sigma_sb * bc.emissivity * (T4 - Ta4);
}

/// Outward heat flux through the global top surface (convection only).
inline double conv_flux_global(const ThermalBC& bc, double T) { return bc.h_conv * (T - bc.T_ambient); }

/// Radiative exchange coefficient with q_rad = h_rad(T_lag) (T - T_amb), exact at T = T_lag.
inline double radiation_coefficient(const ThermalBC& bc, double T_lag) {
  const double Ta = bc.T_ambient;
  return bc.sigma_sb * bc.emissivity * (T_lag * T_lag + Ta * Ta) * (T_lag + Ta);
}

/// Volumetric heat source of one step.
template <int Dim>
struct SourceTerm {
  struct Smooth {
    std::function<double(const Point<Dim>&)> density;
    Box<Dim> support;
  };
  std::vector<Smooth> smooth;
  std::vector<HeatedBox> boxes;  // 3D only

  bool empty() const { return smooth.empty() && boxes.empty(); }
};

/// A quadrature point of a source integral: location, weight times density.
template <int Dim>
struct SourceSample {
  Point<Dim> x;
  double value;
};

/// Visits the quadrature samples of ∫ Q w over `mesh`: collapsed Gauss of order n on the
/// elements overlapping each smooth source's support; a tensor Gauss grid over heated
/// boxes (resolution tied to mesh spacing) so the deposited energy is exact. Samples
/// are reported with the containing element for basis evaluation.
template <int Dim, class F>
void for_each_source_sample(const Mesh<Dim>& mesh, const SourceTerm<Dim>& src, int order, F&& f) {
  if (!src.smooth.empty()) {
    const auto rule = quadrature::collapsed_gauss<Dim>(order);
    for (const auto& s : src.smooth) {
      mesh.for_each_element_in(s.support, [&](int e) {
        const auto& el = mesh.element(e);
        const double vol = mesh.volume(e);
        for (const auto& q : rule.nodes) {
          Point<Dim> x{};
          for (int v = 0; v <= Dim; ++v) x = x + q.bary[v] * mesh.node(el[v]);
          const double val = s.density(x);
          if (val == 0.0) continue;
          f(e, q.bary, SourceSample<Dim>{x, q.weight * vol * val});
        }
      });
    }
  }
  if constexpr (Dim == 3) {
    const auto g = quadrature::gauss_legendre_unit(2);
    for (const auto& b : src.boxes) {
      const double L = b.length();
      if (L <= 0.0 || b.density == 0.0) continue;
      const Point<3> s = (1.0 / L) * (b.end - b.start);
      const Point<3> c{-s[1], s[0], 0.0};
      const double hq = 0.5 * mesh.h();
      const int na = std::max(1, static_cast<int>(std::ceil(L / hq)));
      const int nc = std::max(1, static_cast<int>(std::ceil(b.width / hq)));
      const int nz = std::max(1, static_cast<int>(std::ceil(b.depth / hq)));
      const double da = L / na, dc = b.width / nc, dz = b.depth / nz;
      for (int i = 0; i < na; ++i)
        for (int j = 0; j < nc; ++j)
          for (int k = 0; k < nz; ++k)
            for (auto [u, wu] : g)
              for (auto [v, wv] : g)
                for (auto [w, ww] : g) {
                  const double a = (i + u) * da, cc = -0.5 * b.width + (j + v) * dc, z = (k + w) * dz;
                  Point<3> x = b.start + a * s + cc * c;
                  x[2] = b.start[2] - z;
                  if (!mesh.box().contains(x, 1e-12 * mesh.h())) continue;
                  const auto loc = mesh.locate(x);
                  f(loc.element, loc.bary, SourceSample<3>{x, wu * wv * ww * da * dc * dz * b.density});
                }
    }
  }
}

/// Adds ∫ Q w_i (times `scale(x)`) to rhs for every node i of `mesh`.
template <int Dim, class Scale>
void add_source_load(const Mesh<Dim>& mesh, const SourceTerm<Dim>& src, int order, Scale&& scale,
                     std::vector<double>& rhs) {
  for_each_source_sample(mesh, src, order, [&](int e, const auto& bary, const SourceSample<Dim>& s) {
    const double val = s.value * scale(s.x);
    if (val == 0.0) return;
    const auto& el = mesh.element(e);
    for (int v = 0; v <= Dim; ++v) rhs[el[v]] += val * bary[v];
  });
}

template <int Dim>
void add_source_load(const Mesh<Dim>& mesh, const SourceTerm<Dim>& src, int order, std::vector<double>& rhs) {
  add_source_load(mesh, src, order, [](const Point<Dim>&) { return 1.0; }, rhs);
}

}  // namespace twolevel
