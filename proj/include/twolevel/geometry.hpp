#pragma once

#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "twolevel/errors.hpp"

namespace twolevel {

template <int Dim>
using Point = std::array<double, Dim>;

template <std::size_t Dim>
std::array<double, Dim> operator+(std::array<double, Dim> a, const std::array<double, Dim>& b) {
  for (std::size_t i = 0; i < Dim; ++i) a[i] += b[i];
  return a;
}

template <std::size_t Dim>
std::array<double, Dim> operator-(std::array<double, Dim> a, const std::array<double, Dim>& b) {
  for (std::size_t i = 0; i < Dim; ++i) a[i] -= b[i];
  return a;
}

template <std::size_t Dim>
std::array<double, Dim> operator*(double s, std::array<double, Dim> a) {
  for (auto& v : a) v *= s;
  return a;
}

template <std::size_t Dim>
double dot(const std::array<double, Dim>& a, const std::array<double, Dim>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < Dim; ++i) s += a[i] * b[i];
  return s;
}

template <std::size_t Dim>
double norm(const std::array<double, Dim>& a) {
  return std::sqrt(dot(a, a));
}

template <int Dim>
std::vector<double> to_vector(const Point<Dim>& p) {
  return {p.begin(), p.end()};
}

/// Axis-aligned box. The last axis is vertical: the build plate sits at lo.back(),
/// the powder-bed surface at hi.back().
template <int Dim>
struct Box {
  Point<Dim> lo{};
  Point<Dim> hi{};

  Box() = default;
  Box(Point<Dim> lo_, Point<Dim> hi_) : lo(lo_), hi(hi_) {}

  void validate() const {
    for (int i = 0; i < Dim; ++i)
      if (!(hi[i] > lo[i]) || !std::isfinite(lo[i]) || !std::isfinite(hi[i]))
        throw ValidationError("degenerate box: max corner must exceed min corner on every axis");
  }

  double extent(int axis) const { return hi[axis] - lo[axis]; }

  double volume() const {
    double v = 1.0;
    for (int i = 0; i < Dim; ++i) v *= extent(i);
    return v;
  }

  bool contains(const Point<Dim>& p, double tol = 0.0) const {
    for (int i = 0; i < Dim; ++i)
      if (p[i] < lo[i] - tol || p[i] > hi[i] + tol) return false;
    return true;
  }

  bool strictly_contains(const Point<Dim>& p) const {
    for (int i = 0; i < Dim; ++i)
      if (!(p[i] > lo[i] && p[i] < hi[i])) return false;
    return true;
  }

  bool intersects(const Box& other) const {
    for (int i = 0; i < Dim; ++i)
      if (other.hi[i] < lo[i] || other.lo[i] > hi[i]) return false;
    return true;
  }

  Box translated(const Point<Dim>& offset) const { return {lo + offset, hi + offset}; }
};

}  // namespace twolevel
