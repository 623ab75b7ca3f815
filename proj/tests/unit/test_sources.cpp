#include <gtest/gtest.h>

#include "twolevel/scanpath.hpp"

using namespace twolevel;

TEST(Gaussian2D, PeakAndOneRadius) {
  LaserBeam b{1.8, 1.0, 1e-4, 1.25e-5, 1e-5};
  const Point<2> c{2e-3, 1e-3};
  EXPECT_NEAR(gaussian_source_2d(b, c, c), 1.44e9, 1e-6 * 1.44e9);
  EXPECT_NEAR(gaussian_source_2d(b, c, {c[0] + b.radius, c[1]}), 1.44e9 * std::exp(-1.0), 1e-6 * 1.44e9);
}

TEST(Gaussian3D, PeakAndDecay) {
  const LaserBeam b{179.2, 0.38, 8.5e-5, 5e-5, 0.8};
  const Point<3> c{1e-3, 1e-3, 0.5e-3};
  const double peak = 6.0 * std::sqrt(3.0) * b.power * b.absorptivity / (2.0 * std::numbers::pi * b.radius * b.radius * b.depth);
  EXPECT_DOUBLE_EQ(gaussian_source_3d(b, c, c), peak);
  EXPECT_NEAR(peak, 3.12e14, 0.01e14);
  EXPECT_NEAR(gaussian_source_3d(b, c, {c[0] + b.radius / std::sqrt(3.0), c[1], c[2]}), peak * std::exp(-1.0), 1e-9 * peak);
}

TEST(Gaussian, TranslationEquivariant) {
  const LaserBeam b{179.2, 0.38, 8.5e-5, 5e-5, 0.8};
  const Point<3> c{1e-3, 1e-3, 0.5e-3}, p{1.05e-3, 0.97e-3, 0.48e-3}, v{3e-4, -1e-4, 0.0};
  EXPECT_NEAR(gaussian_source<3>(b, c + v, p + v), gaussian_source<3>(b, c, p), 1e-12 * gaussian_source<3>(b, c, c));
}

TEST(Gaussian, HalfSpaceIntegral) {
  // with the 2 pi normalization the half space below the surface receives sqrt(pi)/2 P eta
  LaserBeam b{179.2, 0.38, 8.5e-5, 5e-5, 0.8};
  const Box<3> box{{0, 0, 0}, {1e-3, 1e-3, 0.5e-3}};
  const auto mesh = build_structured_mesh<3>(box, 2.5e-5);
  SourceTerm<3> s;
  const Point<3> c{0.5e-3, 0.5e-3, 0.5e-3};
  s.smooth.push_back({[&](const Point<3>& x) { return gaussian_source<3>(b, c, x); },
                      Box<3>(c - gaussian_support<3>(b), c + gaussian_support<3>(b))});
  double total = 0.0;
  for_each_source_sample(mesh, s, 4, [&](int, const auto&, const SourceSample<3>& q) { total += q.value; });
  EXPECT_NEAR(total, 0.5 * std::sqrt(std::numbers::pi) * b.power * b.absorptivity, 2e-3 * b.power * b.absorptivity);
}

TEST(Distributed, InsideOutside) {
  const LaserBeam b{179.2, 0.38, 8.5e-5, 5e-5, 0.8};
  const double dt = 4e-4;
  const Point<3> a{1e-3, 1e-3, 0.6e-3}, e{1e-3 + b.speed * dt, 1e-3, 0.6e-3};
  const double q = b.power * b.absorptivity / (b.radius * b.depth * b.speed * dt);
  EXPECT_DOUBLE_EQ(distributed_source_3d(b, a, e, dt, {1.1e-3, 1e-3, 0.58e-3}), q);
  EXPECT_EQ(distributed_source_3d(b, a, e, dt, {1.1e-3, 1.2e-3, 0.58e-3}), 0.0);
  EXPECT_EQ(distributed_source_3d(b, a, e, dt, {1.1e-3, 1e-3, 0.5e-3}), 0.0);
  EXPECT_THROW(distributed_source_3d(b, a, e, 2 * dt, a), ValidationError);
}

TEST(Distributed, DepositsAbsorbedPower) {
  LaserSources<3> ls;
  ls.beam = {179.2, 0.38, 8.5e-5, 5e-5, 0.8};
  ls.path = build_alternating_path<3>(2, 0.4e-3, 0.1e-3, ls.beam.speed, {0.8e-3, 0.8e-3, 1e-3});
  const Box<3> box{{0, 0, 0}, {2e-3, 2e-3, 1e-3}};
  const auto mesh = build_structured_mesh<3>(box, 1e-4);
  // a step straddling the turn between the two tracks
  const double t0 = 0.3e-3, t1 = 0.7e-3;
  const auto src = ls.distributed(t0, t1);
  EXPECT_EQ(src.boxes.size(), 2u);
  double total = 0.0;
  for_each_source_sample(mesh, src, 2, [&](int, const auto&, const SourceSample<3>& q) { total += q.value; });
  EXPECT_NEAR(total, 68.096, 1e-9 * 68.096);
}

TEST(Flux, Robin) {
  ThermalBC bc;
  bc.h_conv = 10.0;
  bc.emissivity = 0.8;
  bc.sigma_sb = 5.670374419e-8;
  bc.T_ambient = 298.15;
  EXPECT_NEAR(robin_flux_local(bc, bc.T_ambient), 0.0, 1e-9);
  const double T = 1298.15;
  const double expected = 10.0 * 1000.0 + 0.8 * 5.670374419e-8 * (std::pow(T, 4) - std::pow(298.15, 4));
  EXPECT_NEAR(robin_flux_local(bc, T), expected, 1e-9 * expected);
  EXPECT_NEAR(robin_flux_local(bc, T), 1.385e5, 0.001e5);
  bc.emissivity = 0.0;
  EXPECT_DOUBLE_EQ(robin_flux_local(bc, T), 1e4);
}

TEST(Flux, RadiationCoefficientExactAtLag) {
  ThermalBC bc;
  for (double T : {400.0, 1000.0, 2500.0})
    EXPECT_NEAR(radiation_coefficient(bc, T) * (T - bc.T_ambient) + bc.h_conv * (T - bc.T_ambient),
                robin_flux_local(bc, T), 1e-9 * robin_flux_local(bc, T));
}

TEST(Flux, Convective) {
  ThermalBC bc;
  bc.h_conv = 10.0;
  EXPECT_EQ(conv_flux_global(bc, bc.T_ambient), 0.0);
  EXPECT_DOUBLE_EQ(conv_flux_global(bc, bc.T_ambient + 100.0), 1000.0);
}

TEST(Beam, Validation) {
  LaserBeam b;
  EXPECT_NO_THROW(b.validate());
  b.absorptivity = 1.5;
  EXPECT_THROW(b.validate(), ValidationError);
  ThermalBC bc;
  bc.emissivity = -0.1;
  EXPECT_THROW(bc.validate(), ValidationError);
}
