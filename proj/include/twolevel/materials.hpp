#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "twolevel/errors.hpp"

namespace twolevel {

inline constexpr double kCelsiusOffset = 273.15;

/// Piecewise-linear table with constant extrapolation beyond both ends.
class PiecewiseLinear {
 public:
  PiecewiseLinear() = default;
  explicit PiecewiseLinear(std::vector<std::pair<double, double>> rows) : rows_(std::move(rows)) {
    if (rows_.size() < 2) throw ValidationError("material table needs at least 2 entries");
    for (std::size_t i = 1; i < rows_.size(); ++i)
      if (!(rows_[i].first > rows_[i - 1].first))
        throw ValidationError("material table temperatures must be strictly increasing");
    for (const auto& [t, v] : rows_)
      if (!(v > 0.0) || !std::isfinite(t)) throw ValidationError("material table values must be positive");
  }

  double operator()(double T) const {
    if (T <= rows_.front().first) return rows_.front().second;
    if (T >= rows_.back().first) return rows_.back().second;
    const auto it = std::upper_bound(rows_.begin(), rows_.end(), T,
                                     [](double t, const auto& row) { return t < row.first; });
    const auto& [t1, v1] = *it;
    const auto& [t0, v0] = *(it - 1);
    return v0 + (v1 - v0) * (T - t0) / (t1 - t0);
  }

  /// Slope of the active segment (0 outside the table).
  double derivative(double T) const {
    if (T < rows_.front().first || T >= rows_.back().first) return 0.0;
    const auto it = std::upper_bound(rows_.begin(), rows_.end(), T,
                                     [](double t, const auto& row) { return t < row.first; });
    return (it->second - (it - 1)->second) / (it->first - (it - 1)->first);
  }

  bool is_constant() const {
    return std::all_of(rows_.begin(), rows_.end(), [&](const auto& r) { return r.second == rows_.front().second; });
  }

  const std::vector<std::pair<double, double>>& rows() const { return rows_; }

 private:
  std::vector<std::pair<double, double>> rows_;
};

/// Temperature-dependent alloy model with a smoothed solid-liquid transition.
/// All temperatures in Kelvin.
struct MaterialModel {
  PiecewiseLinear conductivity_table;  // W/(m K)
  PiecewiseLinear capacity_table;      // J/(kg K)
  double density = 8440.0;             // kg/m^3
  double latent_heat = 2.1e5;          // J/kg
  double solidus = 1563.15;
  double liquidus = 1653.15;
  double sharpness = 0.05;  // 1/K

  void validate() const {
    if (conductivity_table.rows().size() < 2 || capacity_table.rows().size() < 2)
      throw ValidationError("material tables are missing");
    if (!(density > 0.0)) throw ValidationError("density must be positive");
    if (!(latent_heat >= 0.0)) throw ValidationError("latent heat must be non-negative");
    if (!(solidus < liquidus)) throw ValidationError("solidus temperature must be below liquidus temperature");
    if (!(sharpness > 0.0)) throw ValidationError("sigmoid sharpness must be positive");
  }

  double melting_point() const { return 0.5 * (solidus + liquidus); }

  /// Linear with constant coefficients: no temperature dependence and no latent heat.
  bool is_linear() const {
    return conductivity_table.is_constant() && capacity_table.is_constant() && latent_heat == 0.0;
  }
};

inline MaterialModel constant_material(double conductivity, double capacity, double density,
                                       double latent_heat = 0.0) {
  MaterialModel m;
  m.conductivity_table = PiecewiseLinear({{0.0, conductivity}, {1.0e4, conductivity}});
  m.capacity_table = PiecewiseLinear({{0.0, capacity}, {1.0e4, capacity}});
  m.density = density;
  m.latent_heat = latent_heat;
  return m;
}

inline double conductivity(const MaterialModel& m, double T) { return m.conductivity_table(T); }
inline double conductivity_derivative(const MaterialModel& m, double T) { return m.conductivity_table.derivative(T); }
inline double heat_capacity(const MaterialModel& m, double T) { return m.capacity_table(T); }

/// Smoothed Heaviside 1/2 [1 + tanh(S (T - Tm))], Tm the solidus-liquidus midpoint.
inline double phase_fraction(const MaterialModel& m, double T) {
  return 0.5 * (1.0 + std::tanh(m.sharpness * (T - m.melting_point())));
}

inline double phase_fraction_derivative(const MaterialModel& m, double T) {
  const double c = std::cosh(m.sharpness * (T - m.melting_point()));
  if (!std::isfinite(c)) return 0.0;
  return 0.5 * m.sharpness / (c * c);
}

/// Apparent heat capacity c(T) + chi f'(T).
inline double effective_capacity(const MaterialModel& m, double T) {
  return heat_capacity(m, T) + m.latent_heat * phase_fraction_derivative(m, T);
}

/// Capacity used by the implicit step from T_old to T: sensible part at T, latent part
/// as the chord chi (f(T) - f(T_old)) / (T - T_old), which releases exactly chi times the
/// phase-fraction change once the nonlinear iteration has converged.
inline double step_capacity(const MaterialModel& m, double T_old, double T, bool latent) {
  double c = heat_capacity(m, T);
  if (!latent || m.latent_heat == 0.0) return c;
  const double dT = T - T_old;
  if (std::abs(dT) * m.sharpness < 1e-6) return c + m.latent_heat * phase_fraction_derivative(m, 0.5 * (T + T_old));
  return c + m.latent_heat * (phase_fraction(m, T) - phase_fraction(m, T_old)) / dT;
}

/// Reads the plain-text material format:
///
///   units C            # or K; first non-comment line
///   rho = 8440
///   chi = 2.1e5
///   T_solidus = 1290
///   T_liquidus = 1380
///   S = 0.05
///   [conductivity]
///   21 9.8
///   ...
///   [heat_capacity]
///   21 410
inline MaterialModel load_material(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), 0, "", "cannot open material file");
  const std::string file = path.string();
  std::string line, section;
  int lineno = 0;
  bool celsius = false, have_units = false;
  std::map<std::string, double> scalars;
  std::vector<std::pair<double, double>> cond, cap;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    if (!have_units) {
      std::string u;
      if (first != "units" || !(ls >> u) || (u != "K" && u != "C"))
        throw ConfigError(file, lineno, "units", "first line must declare 'units K' or 'units C'");
      celsius = u == "C";
      have_units = true;
      continue;
    }
    if (first.front() == '[') {
      section = first;
      if (section != "[conductivity]" && section != "[heat_capacity]")
        throw ConfigError(file, lineno, section, "unknown section");
      continue;
    }
    if (section.empty()) {
      std::string eq;
      double v = 0.0;
      if (!(ls >> eq >> v) || eq != "=") throw ConfigError(file, lineno, first, "expected 'key = value'");
      static const std::vector<std::string> keys{"rho", "chi", "T_solidus", "T_liquidus", "S"};
      if (std::find(keys.begin(), keys.end(), first) == keys.end())
        throw ConfigError(file, lineno, first, "unknown key");
      scalars[first] = v;
    } else {
      double T = 0.0, v = 0.0;
      std::istringstream rs(line);
      if (!(rs >> T >> v)) throw ConfigError(file, lineno, section, "expected 'T value' row");
      if (celsius) T += kCelsiusOffset;
      (section == "[conductivity]" ? cond : cap).emplace_back(T, v);
    }
  }
  for (const char* k : {"rho", "chi", "T_solidus", "T_liquidus", "S"})
    if (!scalars.count(k)) throw ConfigError(file, lineno, k, "missing key");
  MaterialModel m;
  try {
    m.conductivity_table = PiecewiseLinear(cond);
    m.capacity_table = PiecewiseLinear(cap);
  } catch (const ValidationError& e) {
    throw ConfigError(file, lineno, "", e.what());
  }
  m.density = scalars["rho"];
  m.latent_heat = scalars["chi"];
  m.solidus = scalars["T_solidus"] + (celsius ? kCelsiusOffset : 0.0);
  m.liquidus = scalars["T_liquidus"] + (celsius ? kCelsiusOffset : 0.0);
  m.sharpness = scalars["S"];
  m.validate();
  return m;
}

}  // namespace twolevel
