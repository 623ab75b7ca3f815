#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <vector>

#include "twolevel/errors.hpp"
#include "twolevel/geometry.hpp"

namespace twolevel {

enum class BoundaryTag { bottom, top, lateral };

template <int Dim>
struct BoundaryFacet {
  std::array<int, Dim> nodes{};
  int element = -1;
  BoundaryTag tag = BoundaryTag::lateral;
  int axis = 0;  // the facet lies on the plane x[axis] = box.lo/hi
  int side = 0;  // 0: lo face, 1: hi face
  double measure = 0.0;

  Point<Dim> outward_normal() const {
    Point<Dim> n{};
    n[axis] = side == 0 ? -1.0 : 1.0;
    return n;
  }
};

/// Element hit by a point query, with barycentric coordinates of the point.
template <int Dim>
struct PointLocation {
  int element = -1;
  std::array<double, Dim + 1> bary{};
};

template <int Dim>
class Mesh;

template <int Dim>
Mesh<Dim> build_structured_mesh(const Box<Dim>& box, double h);

/// Conforming simplicial mesh of a box, obtained by splitting every cell of a
/// uniform grid into 2 triangles (2D) or 6 Kuhn tetrahedra (3D). Immutable once
/// built; translations produce a new mesh that shares the topology.
template <int Dim>
class Mesh {
 public:
  static constexpr int kVertices = Dim + 1;
  static constexpr int kSimplicesPerCell = Dim == 2 ? 2 : 6;
  using Element = std::array<int, kVertices>;
  using Gradients = std::array<Point<Dim>, kVertices>;

  const Box<Dim>& box() const { return box_; }
  double h() const { return topo_->h; }
  const std::array<int, Dim>& cells() const { return topo_->cells; }
  const Point<Dim>& spacing() const { return topo_->spacing; }
  const Point<Dim>& translation() const { return translation_; }
  const Box<Dim>& construction_box() const { return topo_->base_box; }

  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_elements() const { return topo_->elements.size(); }
  const std::vector<Point<Dim>>& nodes() const { return nodes_; }
  const Point<Dim>& node(int i) const { return nodes_[i]; }
  const Element& element(int e) const { return topo_->elements[e]; }
  const std::vector<Element>& elements() const { return topo_->elements; }

  double volume(int e) const { return topo_->shape_volume[e % kSimplicesPerCell]; }
  /// Gradients of the barycentric (hat) functions of element e; constant per element.
  const Gradients& gradients(int e) const { return topo_->shape_gradients[e % kSimplicesPerCell]; }

  const std::vector<BoundaryFacet<Dim>>& boundary_facets() const { return topo_->facets; }
  /// Integral of each hat function over the mesh (lumped mass row sums).
  const std::vector<double>& lumped_volumes() const { return topo_->lumped; }

  std::array<int, Dim> node_index(int n) const {
    std::array<int, Dim> idx{};
    for (int a = 0; a < Dim; ++a) {
      idx[a] = n % (topo_->cells[a] + 1);
      n /= topo_->cells[a] + 1;
    }
    return idx;
  }

  int node_id(const std::array<int, Dim>& idx) const {
    int id = 0;
    for (int a = Dim - 1; a >= 0; --a) id = id * (topo_->cells[a] + 1) + idx[a];
    return id;
  }

  // Compressed-row sparsity of the P1 operator and, for each element, the
  // positions of its (kVertices x kVertices) local entries in that pattern.
  const std::vector<int>& row_ptr() const { return topo_->row_ptr; }
  const std::vector<int>& col_idx() const { return topo_->col_idx; }
  std::span<const int> element_csr(int e) const {
    return {topo_->element_csr.data() + static_cast<std::size_t>(e) * kVertices * kVertices,
            static_cast<std::size_t>(kVertices * kVertices)};
  }

  /// Barycentric coordinates of p with respect to element e (may be negative outside).
  std::array<double, kVertices> barycentric(int e, const Point<Dim>& p) const {
    const auto& g = gradients(e);
    const Point<Dim> d = p - node(element(e)[0]);
    std::array<double, kVertices> lam{};
    double rest = 1.0;
    for (int v = 1; v < kVertices; ++v) {
      lam[v] = dot(g[v], d);
      rest -= lam[v];
    }
    lam[0] = rest;
    return lam;
  }

  Point<Dim> centroid(int e) const {
    Point<Dim> c{};
    for (int v : element(e)) c = c + node(v);
    return (1.0 / kVertices) * c;
  }

  /// Locates p via the structured-grid lookup; throws PointOutsideMesh.
  PointLocation<Dim> locate(const Point<Dim>& p) const {
    const double tol = 1e-12 * topo_->h;
    if (!box_.contains(p, tol)) throw PointOutsideMesh(to_vector<Dim>(p));
    std::array<int, Dim> cell{};
    for (int a = 0; a < Dim; ++a) {
      const int c = static_cast<int>(std::floor((p[a] - box_.lo[a]) / topo_->spacing[a]));
      cell[a] = std::clamp(c, 0, topo_->cells[a] - 1);
    }
    const int base = cell_id(cell) * kSimplicesPerCell;
    PointLocation<Dim> best;
    double best_min = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < kSimplicesPerCell; ++j) {
      const auto lam = barycentric(base + j, p);
      const double m = *std::min_element(lam.begin(), lam.end());
      if (m > best_min) {
        best_min = m;
        best = {base + j, lam};
      }
      if (m >= 0.0) break;
    }
    return best;
  }

  /// Elements of all cells touching the box b (used to restrict compactly supported sources).
  template <class F>
  void for_each_element_in(const Box<Dim>& b, F&& f) const {
    std::array<int, Dim> lo{}, hi{};
    for (int a = 0; a < Dim; ++a) {
      lo[a] = std::clamp(static_cast<int>(std::floor((b.lo[a] - box_.lo[a]) / topo_->spacing[a])), 0,
                         topo_->cells[a] - 1);
      hi[a] = std::clamp(static_cast<int>(std::floor((b.hi[a] - box_.lo[a]) / topo_->spacing[a])), 0,
                         topo_->cells[a] - 1);
      if (b.hi[a] < box_.lo[a] || b.lo[a] > box_.hi[a]) return;
    }
    std::array<int, Dim> c = lo;
    while (true) {
      const int base = cell_id(c) * kSimplicesPerCell;
      for (int j = 0; j < kSimplicesPerCell; ++j) f(base + j);
      int a = 0;
      while (a < Dim && ++c[a] > hi[a]) {
        c[a] = lo[a];
        ++a;
      }
      if (a == Dim) break;
    }
  }

  /// Identifier of the construction lattice; meshes sharing it are translates of each other.
  const void* topology_id() const { return topo_.get(); }

 private:
  struct Topology {
    double h = 0.0;
    std::array<int, Dim> cells{};
    Point<Dim> spacing{};
    Box<Dim> base_box;
    std::vector<Point<Dim>> base_nodes;
    std::vector<Element> elements;
    std::array<double, kSimplicesPerCell> shape_volume{};
    std::array<Gradients, kSimplicesPerCell> shape_gradients{};
    std::vector<BoundaryFacet<Dim>> facets;
    std::vector<double> lumped;
    std::vector<int> row_ptr, col_idx, element_csr;
  };

  int cell_id(const std::array<int, Dim>& c) const {
    int id = 0;
    for (int a = Dim - 1; a >= 0; --a) id = id * topo_->cells[a] + c[a];
    return id;
  }

  void place(const Point<Dim>& translation) {
    translation_ = translation;
    box_ = topo_->base_box.translated(translation);
    nodes_.resize(topo_->base_nodes.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) nodes_[i] = topo_->base_nodes[i] + translation;
  }

  std::shared_ptr<const Topology> topo_;
  Box<Dim> box_;
  Point<Dim> translation_{};
  std::vector<Point<Dim>> nodes_;

  friend Mesh build_structured_mesh<Dim>(const Box<Dim>&, double);
  template <int D>
  friend Mesh<D> translate_mesh(const Mesh<D>&, const Point<D>&);
  template <int D>
  friend Mesh<D> placed_mesh(const Mesh<D>&, const Point<D>&);
};

namespace detail {

// Local vertex offsets (corner bits) of the simplices of one grid cell.
inline std::vector<std::array<int, 3>> cell_simplices_2d() {
  // corners: bit0 -> +x, bit1 -> +y
  return {{0, 1, 3}, {0, 3, 2}};
}

inline std::vector<std::array<int, 4>> cell_simplices_3d() {
  std::vector<std::array<int, 4>> out;
  std::array<int, 3> perm{0, 1, 2};
  do {
    int c = 0;
    std::array<int, 4> tet{0, 0, 0, 0};
    for (int k = 0; k < 3; ++k) {
      c |= 1 << perm[k];
      tet[k + 1] = c;
    }
    out.push_back(tet);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

template <int Dim>
double signed_volume(const std::array<Point<Dim>, Dim + 1>& x) {
  if constexpr (Dim == 2) {
    return 0.5 * ((x[1][0] - x[0][0]) * (x[2][1] - x[0][1]) - (x[2][0] - x[0][0]) * (x[1][1] - x[0][1]));
  } else {
    const Point<3> a = x[1] - x[0], b = x[2] - x[0], c = x[3] - x[0];
    return (a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) +
            a[2] * (b[0] * c[1] - b[1] * c[0])) /
           6.0;
  }
}

/// Gradients of the barycentric functions of a simplex with vertices x.
template <int Dim>
std::array<Point<Dim>, Dim + 1> barycentric_gradients(const std::array<Point<Dim>, Dim + 1>& x) {
  // Rows of the inverse of the edge matrix J = [x1-x0, ..., xd-x0].
  std::array<std::array<double, Dim>, Dim> J{};
  for (int c = 0; c < Dim; ++c)
    for (int r = 0; r < Dim; ++r) J[r][c] = x[c + 1][r] - x[0][r];
  std::array<std::array<double, Dim>, Dim> inv{};
  if constexpr (Dim == 2) {
    const double det = J[0][0] * J[1][1] - J[0][1] * J[1][0];
    inv = {{{J[1][1] / det, -J[0][1] / det}, {-J[1][0] / det, J[0][0] / det}}};
  } else {
    const double det = J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
                       J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
                       J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
    inv[0][0] = (J[1][1] * J[2][2] - J[1][2] * J[2][1]) / det;
    inv[0][1] = (J[0][2] * J[2][1] - J[0][1] * J[2][2]) / det;
    inv[0][2] = (J[0][1] * J[1][2] - J[0][2] * J[1][1]) / det;
    inv[1][0] = (J[1][2] * J[2][0] - J[1][0] * J[2][2]) / det;
    inv[1][1] = (J[0][0] * J[2][2] - J[0][2] * J[2][0]) / det;
    inv[1][2] = (J[0][2] * J[1][0] - J[0][0] * J[1][2]) / det;
    inv[2][0] = (J[1][0] * J[2][1] - J[1][1] * J[2][0]) / det;
    inv[2][1] = (J[0][1] * J[2][0] - J[0][0] * J[2][1]) / det;
    inv[2][2] = (J[0][0] * J[1][1] - J[0][1] * J[1][0]) / det;
  }
  std::array<Point<Dim>, Dim + 1> g{};
  for (int v = 1; v <= Dim; ++v)
    for (int r = 0; r < Dim; ++r) g[v][r] = inv[v - 1][r];
  for (int r = 0; r < Dim; ++r) {
    g[0][r] = 0.0;
    for (int v = 1; v <= Dim; ++v) g[0][r] -= g[v][r];
  }
  return g;
}

}  // namespace detail

/// Builds the structured simplicial mesh of `box` with target spacing h. Per axis the
/// spacing is shrunk to the nearest exact divisor of the edge length when h does not
/// divide it (relative tolerance 1e-9).
template <int Dim>
Mesh<Dim> build_structured_mesh(const Box<Dim>& box, double h) {
  static_assert(Dim == 2 || Dim == 3, "only 2D and 3D meshes are supported");
  if (!(h > 0.0) || !std::isfinite(h)) throw ValidationError("mesh spacing h must be positive");
  box.validate();

  using M = Mesh<Dim>;
  auto topo = std::make_shared<typename M::Topology>();
  topo->h = h;
  topo->base_box = box;
  for (int a = 0; a < Dim; ++a) {
    const double ratio = box.extent(a) / h;
    int n = static_cast<int>(std::llround(ratio));
    if (std::abs(ratio - n) > 1e-9 * std::max(1.0, ratio)) n = static_cast<int>(std::ceil(ratio));
    topo->cells[a] = std::max(n, 1);
    topo->spacing[a] = box.extent(a) / topo->cells[a];
  }

  std::array<int, Dim> npa{};
  std::size_t num_nodes = 1, num_cells = 1;
  for (int a = 0; a < Dim; ++a) {
    npa[a] = topo->cells[a] + 1;
    num_nodes *= npa[a];
    num_cells *= topo->cells[a];
  }

  topo->base_nodes.resize(num_nodes);
  for (std::size_t n = 0; n < num_nodes; ++n) {
    std::size_t r = n;
    for (int a = 0; a < Dim; ++a) {
      const int i = static_cast<int>(r % npa[a]);
      r /= npa[a];
      // the last node lands exactly on the max corner
      topo->base_nodes[n][a] = i == topo->cells[a] ? box.hi[a] : box.lo[a] + i * topo->spacing[a];
    }
  }

  auto node_of = [&](const std::array<int, Dim>& idx) {
    int id = 0;
    for (int a = Dim - 1; a >= 0; --a) id = id * npa[a] + idx[a];
    return id;
  };

  std::vector<std::array<int, Dim + 1>> shapes;
  if constexpr (Dim == 2) {
    for (auto s : detail::cell_simplices_2d()) shapes.push_back(s);
  } else {
    for (auto s : detail::cell_simplices_3d()) shapes.push_back(s);
  }

  // Reference geometry of each simplex type, oriented to positive volume.
  for (std::size_t j = 0; j < shapes.size(); ++j) {
    auto corner = [&](int bits) {
      Point<Dim> p{};
      for (int a = 0; a < Dim; ++a) p[a] = (bits >> a & 1) ? topo->spacing[a] : 0.0;
      return p;
    };
    std::array<Point<Dim>, Dim + 1> x{};
    for (int v = 0; v <= Dim; ++v) x[v] = corner(shapes[j][v]);
    if (detail::signed_volume<Dim>(x) < 0.0) {
      std::swap(shapes[j][Dim - 1], shapes[j][Dim]);
      std::swap(x[Dim - 1], x[Dim]);
    }
    topo->shape_volume[j] = detail::signed_volume<Dim>(x);
    topo->shape_gradients[j] = detail::barycentric_gradients<Dim>(x);
  }

  topo->elements.reserve(num_cells * shapes.size());
  std::array<int, Dim> c{};
  for (std::size_t cid = 0; cid < num_cells; ++cid) {
    std::size_t r = cid;
    for (int a = 0; a < Dim; ++a) {
      c[a] = static_cast<int>(r % topo->cells[a]);
      r /= topo->cells[a];
    }
    for (const auto& s : shapes) {
      typename M::Element el{};
      for (int v = 0; v <= Dim; ++v) {
        std::array<int, Dim> idx = c;
        for (int a = 0; a < Dim; ++a) idx[a] += (s[v] >> a) & 1;
        el[v] = node_of(idx);
      }
      topo->elements.push_back(el);
    }
  }

  // Lumped volumes and boundary facets.
  topo->lumped.assign(num_nodes, 0.0);
  auto idx_of = [&](int n) {
    std::array<int, Dim> idx{};
    for (int a = 0; a < Dim; ++a) {
      idx[a] = n % npa[a];
      n /= npa[a];
    }
    return idx;
  };
  for (std::size_t e = 0; e < topo->elements.size(); ++e) {
    const auto& el = topo->elements[e];
    const double share = topo->shape_volume[e % shapes.size()] / (Dim + 1);
    for (int v : el) topo->lumped[v] += share;
    for (int skip = 0; skip <= Dim; ++skip) {
      std::array<int, Dim> face{};
      for (int v = 0, k = 0; v <= Dim; ++v)
        if (v != skip) face[k++] = el[v];
      for (int a = 0; a < Dim; ++a)
        for (int side = 0; side < 2; ++side) {
          const int target = side == 0 ? 0 : topo->cells[a];
          const bool on = std::all_of(face.begin(), face.end(), [&](int n) { return idx_of(n)[a] == target; });
          if (!on) continue;
          BoundaryFacet<Dim> f;
          f.nodes = face;
          f.element = static_cast<int>(e);
          f.axis = a;
          f.side = side;
          f.tag = a == Dim - 1 ? (side == 0 ? BoundaryTag::bottom : BoundaryTag::top) : BoundaryTag::lateral;
          if constexpr (Dim == 2) {
            f.measure = norm(topo->base_nodes[face[1]] - topo->base_nodes[face[0]]);
          } else {
            const Point<3> u = topo->base_nodes[face[1]] - topo->base_nodes[face[0]];
            const Point<3> w = topo->base_nodes[face[2]] - topo->base_nodes[face[0]];
            const Point<3> cr{u[1] * w[2] - u[2] * w[1], u[2] * w[0] - u[0] * w[2], u[0] * w[1] - u[1] * w[0]};
            f.measure = 0.5 * norm(cr);
          }
          topo->facets.push_back(f);
        }
    }
  }

  // CSR pattern from node adjacency.
  std::vector<std::vector<int>> adj(num_nodes);
  for (const auto& el : topo->elements)
    for (int a : el)
      for (int b : el) adj[a].push_back(b);
  topo->row_ptr.assign(num_nodes + 1, 0);
  for (std::size_t i = 0; i < num_nodes; ++i) {
    auto& row = adj[i];
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    topo->row_ptr[i + 1] = topo->row_ptr[i] + static_cast<int>(row.size());
  }
  topo->col_idx.reserve(topo->row_ptr.back());
  for (const auto& row : adj) topo->col_idx.insert(topo->col_idx.end(), row.begin(), row.end());
  constexpr int kv = Dim + 1;
  topo->element_csr.resize(topo->elements.size() * kv * kv);
  for (std::size_t e = 0; e < topo->elements.size(); ++e) {
    const auto& el = topo->elements[e];
    for (int a = 0; a < kv; ++a) {
      const auto first = topo->col_idx.begin() + topo->row_ptr[el[a]];
      const auto last = topo->col_idx.begin() + topo->row_ptr[el[a] + 1];
      for (int b = 0; b < kv; ++b)
        topo->element_csr[e * kv * kv + a * kv + b] =
            static_cast<int>(std::lower_bound(first, last, el[b]) - topo->col_idx.begin());
    }
  }

  M mesh;
  mesh.topo_ = std::move(topo);
  mesh.place(Point<Dim>{});
  return mesh;
}

/// Rigid translation. Coordinates are recomputed from the construction lattice plus the
/// accumulated offset, so translating a freshly built mesh by v and then by -v restores
/// it bitwise.
template <int Dim>
Mesh<Dim> translate_mesh(const Mesh<Dim>& mesh, const Point<Dim>& offset) {
  Mesh<Dim> out = mesh;
  out.place(mesh.translation() + offset);
  return out;
}

/// Copy of `mesh` placed at an absolute translation from its construction box.
template <int Dim>
Mesh<Dim> placed_mesh(const Mesh<Dim>& mesh, const Point<Dim>& translation) {
  Mesh<Dim> out = mesh;
  out.place(translation);
  return out;
}

/// True when `inner` is immersed in `outer`: strictly inside on the lateral and bottom
/// sides and sharing the top face.
template <int Dim>
bool is_immersed(const Box<Dim>& inner, const Box<Dim>& outer, double tol) {
  for (int a = 0; a < Dim - 1; ++a)
    if (!(inner.lo[a] > outer.lo[a] + tol && inner.hi[a] < outer.hi[a] - tol)) return false;
  if (!(inner.lo[Dim - 1] > outer.lo[Dim - 1] + tol)) return false;
  return std::abs(inner.hi[Dim - 1] - outer.hi[Dim - 1]) <= tol;
}

/// Translation of a local mesh that must remain immersed in `global_box`.
template <int Dim>
Mesh<Dim> translate_mesh(const Mesh<Dim>& mesh, const Point<Dim>& offset, const Box<Dim>& global_box) {
  Mesh<Dim> out = translate_mesh<Dim>(mesh, offset);
  if (!is_immersed(out.box(), global_box, 1e-9 * mesh.h()))
    throw LocalDomainEscapes("translated local domain is no longer immersed in the global domain");
  return out;
}

}  // namespace twolevel
