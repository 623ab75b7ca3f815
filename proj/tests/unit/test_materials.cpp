#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "twolevel/materials.hpp"

using namespace twolevel;

namespace {

MaterialModel in625_like() {
  MaterialModel m = constant_material(20.0, 500.0, 8440.0, 2.1e5);
  m.solidus = 1563.15;
  m.liquidus = 1653.15;
  m.sharpness = 0.05;
  return m;
}

std::filesystem::path write_temp(const std::string& name, const std::string& body) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream(p) << body;
  return p;
}

}  // namespace

TEST(Table, ConductivityMidpointAndClamping) {
  const PiecewiseLinear k({{300, 10}, {1300, 25}});
  EXPECT_DOUBLE_EQ(k(800), 17.5);
  EXPECT_DOUBLE_EQ(k(5000), 25.0);
  EXPECT_DOUBLE_EQ(k(100), 10.0);
}

TEST(Table, CapacityExamples) {
  const PiecewiseLinear c({{300, 400}, {1300, 700}});
  EXPECT_DOUBLE_EQ(c(300), 400.0);
  EXPECT_DOUBLE_EQ(c(800), 550.0);
  EXPECT_DOUBLE_EQ(c(2000), 700.0);
}

TEST(Table, DerivativeMatchesFiniteDifference) {
  const PiecewiseLinear k({{300, 10}, {700, 14}, {1300, 25}});
  for (double T : {350.0, 650.0, 900.0, 1250.0}) {
    const double fd = (k(T + 1e-3) - k(T - 1e-3)) / 2e-3;
    EXPECT_NEAR(k.derivative(T), fd, 1e-6);
  }
  EXPECT_EQ(k.derivative(200), 0.0);
  EXPECT_EQ(k.derivative(1400), 0.0);
}

TEST(Table, RejectsBadRows) {
  EXPECT_THROW(PiecewiseLinear({{300, 10}}), ValidationError);
  EXPECT_THROW(PiecewiseLinear({{300, 10}, {300, 12}}), ValidationError);
  EXPECT_THROW(PiecewiseLinear({{300, 10}, {400, -1}}), ValidationError);
}

TEST(Phase, MidpointAndLimits) {
  const auto m = in625_like();
  EXPECT_DOUBLE_EQ(phase_fraction(m, m.melting_point()), 0.5);
  EXPECT_NEAR(phase_fraction(m, 1e5), 1.0, 1e-15);
  EXPECT_NEAR(phase_fraction(m, -1e5), 0.0, 1e-15);
  EXPECT_NEAR(phase_fraction(m, m.melting_point() + 20.0), 0.5 * (1.0 + std::tanh(1.0)), 1e-12);
  EXPECT_NEAR(phase_fraction(m, m.melting_point() + 20.0), 0.8808, 5e-5);
}

TEST(Phase, DerivativePeakAndDecay) {
  const auto m = in625_like();
  EXPECT_DOUBLE_EQ(phase_fraction_derivative(m, m.melting_point()), m.sharpness / 2);
  EXPECT_NEAR(phase_fraction_derivative(m, m.melting_point() + 1e4), 0.0, 1e-300);
  EXPECT_EQ(phase_fraction_derivative(m, -1e6), 0.0);
}

TEST(Phase, DerivativeFiniteDifference) {
  const auto m = in625_like();
  for (double T = 1400.0; T < 1800.0; T += 17.0) {
    const double e = 1e-3;
    const double fd = (phase_fraction(m, T + e) - phase_fraction(m, T - e)) / (2 * e);
    EXPECT_NEAR(phase_fraction_derivative(m, T), fd, 1e-6);
  }
}

TEST(Phase, LatentIntegralEqualsChi) {
  const auto m = in625_like();
  // ∫ χ f'(T) dT over a wide window by composite Simpson
  const double a = m.melting_point() - 600.0, b = m.melting_point() + 600.0;
  const int n = 20000;
  const double h = (b - a) / n;
  double s = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double w = k == 0 || k == n ? 1.0 : (k % 2 ? 4.0 : 2.0);
    s += w * m.latent_heat * phase_fraction_derivative(m, a + k * h);
  }
  s *= h / 3.0;
  EXPECT_NEAR(s / m.latent_heat, 1.0, 1e-6);
}

TEST(Capacity, Effective) {
  auto m = in625_like();
  EXPECT_DOUBLE_EQ(effective_capacity(m, m.melting_point()), 500.0 + m.latent_heat * m.sharpness / 2);
  m.latent_heat = 0.0;
  for (double T : {300.0, 1600.0, 3000.0}) EXPECT_DOUBLE_EQ(effective_capacity(m, T), heat_capacity(m, T));
}

TEST(Capacity, ChordReleasesExactLatent) {
  const auto m = in625_like();
  const double T0 = 1500.0, T1 = 1700.0;
  const double c = step_capacity(m, T0, T1, true);
  EXPECT_NEAR((c - 500.0) * (T1 - T0), m.latent_heat * (phase_fraction(m, T1) - phase_fraction(m, T0)), 1e-6);
  EXPECT_DOUBLE_EQ(step_capacity(m, T0, T1, false), 500.0);
}

TEST(Material, Validation) {
  auto m = in625_like();
  EXPECT_NO_THROW(m.validate());
  m.liquidus = m.solidus - 1.0;
  EXPECT_THROW(m.validate(), ValidationError);
}

TEST(Material, LoadsCelsiusFile) {
  const auto m = load_material(std::filesystem::path(TWOLEVEL_SOURCE_DIR) / "configs/materials/in625.mat");
  EXPECT_DOUBLE_EQ(m.solidus, 1290 + 273.15);
  EXPECT_DOUBLE_EQ(m.liquidus, 1380 + 273.15);
  EXPECT_DOUBLE_EQ(m.conductivity_table.rows().front().first, 21 + 273.15);
  EXPECT_DOUBLE_EQ(conductivity(m, 21 + 273.15), 9.8);
  EXPECT_DOUBLE_EQ(m.density, 8440.0);
}

TEST(Material, RejectsInvertedMeltRange) {
  const auto p = write_temp("twolevel_bad.mat",
                            "units K\nrho = 8000\nchi = 2e5\nT_solidus = 1700\nT_liquidus = 1600\nS = 0.05\n"
                            "[conductivity]\n300 10\n1300 25\n[heat_capacity]\n300 400\n1300 700\n");
  EXPECT_THROW(load_material(p), ValidationError);
  std::filesystem::remove(p);
}

TEST(Material, RejectsUnknownKey) {
  const auto p = write_temp("twolevel_key.mat", "units K\nrho = 8000\nfoo = 1\n");
  EXPECT_THROW(load_material(p), ConfigError);
  std::filesystem::remove(p);
}
