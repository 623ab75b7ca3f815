#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "twolevel/two_level.hpp"

namespace twolevel {

template <int Dim>
struct ScanSegment {
  Point<Dim> start{};
  Point<Dim> end{};
  double speed = 0.0;    // m/s
  double t_start = 0.0;  // s

  double length() const { return norm(end - start); }
  double duration() const { return length() / speed; }
  double t_end() const { return t_start + duration(); }
  Point<Dim> direction() const {
    const double L = length();
    return L > 0.0 ? (1.0 / L) * (end - start) : Point<Dim>{};
  }
};

template <int Dim>
struct ScanPath {
  std::vector<ScanSegment<Dim>> segments;

  void validate() const {
    if (segments.empty()) throw ValidationError("scan path has no segments");
    for (std::size_t k = 0; k < segments.size(); ++k) {
      if (!(segments[k].speed > 0.0)) throw ValidationError("scan speeds must be positive");
      if (k > 0 && std::abs(segments[k].t_start - segments[k - 1].t_end()) >
                       1e-9 * std::max(1.0, std::abs(segments[k].t_start)))
        throw ValidationError("scan segment times must be contiguous");
    }
  }

  double t_start() const { return segments.front().t_start; }
  double t_end() const { return segments.back().t_end(); }

  /// Index of the segment active at t (the later one at a shared endpoint).
  std::size_t active(double t) const {
    const double tol = 1e-12 * std::max(1.0, std::abs(t_end()));
    if (t < t_start() - tol || t > t_end() + tol) throw TimeOutOfRange(t);
    std::size_t k = 0;
    while (k + 1 < segments.size() && segments[k + 1].t_start <= t) ++k;
    return k;
  }

  bool covers(double t) const {
    const double tol = 1e-12 * std::max(1.0, std::abs(t_end()));
    return t >= t_start() - tol && t <= t_end() + tol;
  }
};

/// Contiguous path through the given straight pieces, starting at t0.
template <int Dim>
ScanPath<Dim> make_path(const std::vector<std::pair<Point<Dim>, Point<Dim>>>& pieces, double speed, double t0 = 0.0) {
  ScanPath<Dim> p;
  double t = t0;
  for (const auto& [a, b] : pieces) {
    ScanSegment<Dim> s{a, b, speed, t};
    if (!(s.length() > 0.0)) throw ValidationError("scan segments must have positive length");
    p.segments.push_back(s);
    t = s.t_end();
  }
  p.validate();
  return p;
}

/// Laser position at time t, piecewise linear along the active segment.
template <int Dim>
Point<Dim> laser_position(const ScanPath<Dim>& path, double t) {
  const auto& s = path.segments[path.active(t)];
  const double frac = std::clamp((t - s.t_start) / s.duration(), 0.0, 1.0);
  if (frac == 1.0) return s.end;
  return s.start + frac * (s.end - s.start);
}

template <int Dim>
Point<Dim> scan_direction(const ScanPath<Dim>& path, double t) {
  return path.segments[path.active(std::clamp(t, path.t_start(), path.t_end()))].direction();
}

/// n_tracks straight tracks of the given length along x, alternating direction, each
/// shifted by `hatch` along y (3D only), with no dwell between tracks. Track k starts at
/// k * length / v after t0.
template <int Dim>
ScanPath<Dim> build_alternating_path(int n_tracks, double track_length, double hatch, double speed,
                                     const Point<Dim>& origin, double t0 = 0.0,
                                     const std::optional<Box<Dim>>& bounds = std::nullopt) {
  if (n_tracks < 1) throw ValidationError("track count must be at least 1");
  if (!(track_length > 0.0) || !(speed > 0.0)) throw ValidationError("track length and speed must be positive");
  if (!(hatch >= 0.0)) throw ValidationError("hatch spacing must be non-negative");
  if (Dim == 2 && hatch != 0.0) throw ValidationError("hatch spacing needs a 3D path");
  ScanPath<Dim> p;
  const double dur = track_length / speed;
  for (int k = 0; k < n_tracks; ++k) {
    Point<Dim> a = origin, b = origin;
    if constexpr (Dim == 3) {
      a[1] += k * hatch;
      b[1] += k * hatch;
    }
    if (k % 2 == 0) b[0] += track_length;
    else a[0] += track_length;
    if (bounds && (!bounds->contains(a, 1e-12) || !bounds->contains(b, 1e-12)))
      throw ValidationError("scan path leaves the bounding box");
    p.segments.push_back({a, b, speed, t0 + k * dur});
  }
  return p;
}

/// Source models attached to a scan path.
template <int Dim>
struct LaserSources {
  LaserBeam beam;
  ScanPath<Dim> path;

  /// Gaussian at the laser position at t_new; nothing when the laser is off.
  SourceTerm<Dim> gaussian(double, double t_new) const {
    SourceTerm<Dim> s;
    if (!path.covers(t_new)) return s;
    const Point<Dim> c = laser_position(path, t_new);
    const Point<Dim> hw = gaussian_support<Dim>(beam);
    s.smooth.push_back({[b = beam, c](const Point<Dim>& x) { return gaussian_source<Dim>(b, c, x); },
                        Box<Dim>(c - hw, c + hw)});
    return s;
  }

  /// Distributed box source over the track swept during [t_old, t_new], split at track
  /// turns; each piece carries P eta times its share of the step.
  SourceTerm<Dim> distributed(double t_old, double t_new) const {
    SourceTerm<Dim> s;
    if constexpr (Dim == 3) {
      const double dt = t_new - t_old;
      const double a = std::max(t_old, path.t_start()), b = std::min(t_new, path.t_end());
      if (!(b > a) || !(dt > 0.0)) return s;
      for (const auto& seg : path.segments) {
        const double lo = std::max(a, seg.t_start), hi = std::min(b, seg.t_end());
        if (!(hi > lo)) continue;
        auto at = [&](double t) { return seg.start + ((t - seg.t_start) / seg.duration()) * (seg.end - seg.start); };
        HeatedBox box{at(lo), at(hi), beam.radius, beam.depth,
                      beam.power * beam.absorptivity / (beam.radius * beam.depth * seg.speed * dt)};
        s.boxes.push_back(box);
      }
    } else {
      throw ValidationError("the distributed source is defined in 3D only");
    }
    return s;
  }
};

/// Placement rule of a moving local domain.
template <int Dim>
struct LocalDomainPolicy {
  Point<Dim> size{};               // box edge lengths
  double trailing_fraction = 2.0 / 3.0;  // share of the box length behind the laser
  Point<Dim> snap{};               // relocation lattice spacing per axis (0: local mesh spacing)

  void validate() const {
    for (int a = 0; a < Dim; ++a)
      if (!(size[a] > 0.0)) throw ValidationError("local domain dimensions must be positive");
    if (!(trailing_fraction > 0.0 && trailing_fraction < 1.0))
      throw ValidationError("laser offset must lie inside the local box");
  }
};

/// Box of the given policy around the laser: along each horizontal axis the scan
/// direction decides how much of the box trails the laser; the lower corner is snapped
/// to the lattice anchored at the global lower corner; the top face is flush with the
/// global top.
template <int Dim>
Box<Dim> target_local_box(const LocalDomainPolicy<Dim>& policy, const Point<Dim>& laser, const Point<Dim>& direction,
                          const Box<Dim>& global_box, const Point<Dim>& lattice) {
  Box<Dim> b;
  for (int a = 0; a < Dim - 1; ++a) {
    const double behind = direction[a] > 1e-12 ? policy.trailing_fraction
                        : direction[a] < -1e-12 ? 1.0 - policy.trailing_fraction
                                                : 0.5;
    double lo = laser[a] - behind * policy.size[a];
    if (lattice[a] > 0.0) lo = global_box.lo[a] + std::round((lo - global_box.lo[a]) / lattice[a]) * lattice[a];
    b.lo[a] = lo;
    b.hi[a] = lo + policy.size[a];
  }
  b.hi[Dim - 1] = global_box.hi[Dim - 1];
  b.lo[Dim - 1] = b.hi[Dim - 1] - policy.size[Dim - 1];
  return b;
}

/// Moves the local domain to the policy position around `laser`. Local nodes that stay
/// on the lattice keep their values; nodes entering the domain take the global field.
/// The global field is untouched. Returns true when the domain moved.
template <int Dim>
bool relocate_local(TwoLevelState<Dim>& s, const LocalDomainPolicy<Dim>& policy, const Point<Dim>& laser,
                    const Point<Dim>& direction) {
  const auto& lm = *s.local.mesh;
  const auto& gm = *s.global.mesh;
  Point<Dim> lattice = policy.snap;
  for (int a = 0; a < Dim; ++a)
    if (!(lattice[a] > 0.0)) lattice[a] = lm.spacing()[a];
  const Box<Dim> target = target_local_box<Dim>(policy, laser, direction, gm.box(), lattice);
  std::array<int, Dim> shift{};
  bool moved = false;
  for (int a = 0; a < Dim; ++a) {
    const double d = (target.lo[a] - lm.box().lo[a]) / lm.spacing()[a];
    shift[a] = static_cast<int>(std::llround(d));
    if (shift[a] != 0) moved = true;
  }
  if (!moved) return false;
  Point<Dim> translation = lm.translation();
  for (int a = 0; a < Dim; ++a)
    translation[a] = target.lo[a] - lm.construction_box().lo[a];
  auto next = std::make_shared<const Mesh<Dim>>(placed_mesh<Dim>(lm, translation));
  if (!is_immersed(next->box(), gm.box(), 1e-9 * lm.h()))
    throw LocalDomainEscapes("relocated local domain is no longer immersed in the global domain");
  std::vector<double> values(next->num_nodes());
  const auto& cells = lm.cells();
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto idx = next->node_index(static_cast<int>(i));
    bool inside = true;
    for (int a = 0; a < Dim; ++a) {
      idx[a] += shift[a];
      if (idx[a] < 0 || idx[a] > cells[a]) inside = false;
    }
    values[i] = inside ? s.local.values[lm.node_id(idx)] : s.global.evaluate(next->node(static_cast<int>(i)));
  }
  s.local = FieldState<Dim>(next, std::move(values), s.local.time);
  s.trace.clear();
  refresh_geometry(s);
  return true;
}

}  // namespace twolevel
