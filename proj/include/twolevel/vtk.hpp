#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <string>
#include <vector>

#include "twolevel/mesh.hpp"

namespace twolevel {

/// Legacy ASCII VTK unstructured grid with nodal scalar arrays.
template <int Dim>
void write_vtk(const std::filesystem::path& file, const Mesh<Dim>& mesh,
               const std::map<std::string, const std::vector<double>*>& point_data, const std::string& title = "twolevel") {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  out << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.num_nodes() << " double\n" << std::setprecision(12);
  for (const auto& p : mesh.nodes()) {
    out << p[0] << ' ' << p[1] << ' ' << (Dim == 3 ? p[Dim - 1] : 0.0) << '\n';
  }
  const std::size_t ne = mesh.num_elements();
  out << "CELLS " << ne << ' ' << ne * (Dim + 2) << '\n';
  for (const auto& el : mesh.elements()) {
    out << Dim + 1;
    for (int v : el) out << ' ' << v;
    out << '\n';
  }
  out << "CELL_TYPES " << ne << '\n';
  const int type = Dim == 2 ? 5 : 10;  // VTK_TRIANGLE, VTK_TETRA
  for (std::size_t e = 0; e < ne; ++e) out << type << '\n';
  if (point_data.empty()) return;
  out << "POINT_DATA " << mesh.num_nodes() << '\n';
  for (const auto& [name, values] : point_data) {
    if (values->size() != mesh.num_nodes()) throw ValidationError("VTK point data size mismatch for " + name);
    out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    for (double v : *values) out << v << '\n';
  }
}

}  // namespace twolevel
