#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace twolevel::quadrature {

/// Quadrature on a K-simplex in barycentric form. Weights are fractions of the
/// simplex measure, so they sum to 1.
template <int K>
struct SimplexRule {
  struct Node {
    std::array<double, K + 1> bary;
    double weight;
  };
  std::vector<Node> nodes;
};

/// Gauss-Legendre nodes/weights on [0, 1].
inline std::vector<std::pair<double, double>> gauss_legendre_unit(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre_unit: n must be positive");
  std::vector<std::pair<double, double>> out(n);
  for (int i = 0; i < n; ++i) {
    // Newton on P_n starting from the Chebyshev guess.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    out[n - 1 - i] = {0.5 * (x + 1.0), 0.5 * w};
  }
  return out;
}

/// Degree-2 exact rule (3 points on triangles, 4 on tetrahedra, 2 Gauss points on edges).
template <int K>
SimplexRule<K> degree2() {
  SimplexRule<K> r;
  if constexpr (K == 1) {
    const double a = 0.5 - 0.5 / std::sqrt(3.0);
    r.nodes = {{{1.0 - a, a}, 0.5}, {{a, 1.0 - a}, 0.5}};
  } else if constexpr (K == 2) {
    const double a = 1.0 / 6.0, b = 2.0 / 3.0;
    r.nodes = {{{b, a, a}, 1.0 / 3.0}, {{a, b, a}, 1.0 / 3.0}, {{a, a, b}, 1.0 / 3.0}};
  } else {
    static_assert(K == 3);
    const double a = 0.5854101966249685, b = 0.1381966011250105;
    r.nodes = {{{a, b, b, b}, 0.25}, {{b, a, b, b}, 0.25}, {{b, b, a, b}, 0.25}, {{b, b, b, a}, 0.25}};
  }
  return r;
}

/// Vertex (trapezoidal) rule; realizes mass lumping.
template <int K>
SimplexRule<K> vertex() {
  SimplexRule<K> r;
  for (int v = 0; v <= K; ++v) {
    typename SimplexRule<K>::Node n{};
    n.bary.fill(0.0);
    n.bary[v] = 1.0;
    n.weight = 1.0 / (K + 1);
    r.nodes.push_back(n);
  }
  return r;
}

/// Collapsed (Duffy) Gauss-Legendre product rule with n points per direction,
/// exact for polynomials of degree 2n - 1 - K.
template <int K>
SimplexRule<K> collapsed_gauss(int n) {
  const auto g = gauss_legendre_unit(n);
  SimplexRule<K> r;
  if constexpr (K == 1) {
    for (auto [u, wu] : g) r.nodes.push_back({{1.0 - u, u}, wu});
  } else if constexpr (K == 2) {
    for (auto [u, wu] : g)
      for (auto [v, wv] : g) {
        const double l1 = u, l2 = (1.0 - u) * v;
        r.nodes.push_back({{1.0 - l1 - l2, l1, l2}, 2.0 * wu * wv * (1.0 - u)});
      }
  } else {
    static_assert(K == 3);
    for (auto [u, wu] : g)
      for (auto [v, wv] : g)
        for (auto [w, ww] : g) {
          const double l1 = u, l2 = (1.0 - u) * v, l3 = (1.0 - u) * (1.0 - v) * w;
          r.nodes.push_back({{1.0 - l1 - l2 - l3, l1, l2, l3},
                             6.0 * wu * wv * ww * (1.0 - u) * (1.0 - u) * (1.0 - v)});
        }
  }
  return r;
}

}  // namespace twolevel::quadrature
