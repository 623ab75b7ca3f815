#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "support/setup.hpp"

using namespace twolevel;
using namespace twolevel::testing;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const fs::path& p) {
  const auto s = slurp(p);
  return static_cast<int>(std::count(s.begin(), s.end(), '\n'));
}

/// Copy of the toy config in a scratch dir, with `edit` applied to its text.
fs::path toy_config(const std::string& name, const std::function<void(std::string&)>& edit = {}) {
  const auto dir = scratch(name);
  fs::create_directories(dir / "materials");
  fs::copy_file(source_dir() / "configs/materials/in625.mat", dir / "materials/in625.mat");
  std::string text = slurp(source_dir() / "configs/toy_reference.cfg");
  if (edit) edit(text);
  std::ofstream(dir / "toy.cfg") << text;
  return dir / "toy.cfg";
}

void replace(std::string& s, const std::string& from, const std::string& to) {
  const auto pos = s.find(from);
  ASSERT_NE(pos, std::string::npos) << from;
  s.replace(pos, from.size(), to);
}

}  // namespace

TEST(Config, ShippedStudyLoads) {
  const auto c = load_config(source_dir() / "configs/study_2d.cfg");
  EXPECT_EQ(c.mode, RunMode::convergence_study);
  EXPECT_EQ(c.dim, 2);
  ASSERT_EQ(c.dt_global_list.size(), 4u);
  const std::vector<double> G{0.2, 0.1, 0.05, 0.02};
  for (std::size_t k = 0; k < G.size(); ++k) EXPECT_NEAR(c.dt_global_list[k], G[k], 1e-15);
  ASSERT_EQ(c.dt_local_list.size(), 1u);
  EXPECT_NEAR(c.dt_local_list[0], 0.01, 1e-15);
  EXPECT_NEAR(c.dt_reference, 0.01, 1e-15);
  EXPECT_NEAR(c.h_local, 0.0625 * mm, 1e-18);
}

TEST(Config, AllShippedConfigsLoad) {
  for (const char* f : {"study_2d.cfg", "study_matrix_2d.cfg", "study_2d_strict.cfg", "toy_reference.cfg",
                        "single_track_3d.cfg", "multi_track_3d.cfg"})
    EXPECT_NO_THROW(load_config(source_dir() / "configs" / f)) << f;
}

TEST(Config, CelsiusShifted) {
  const auto c = load_config(toy_config("celsius"));
  EXPECT_DOUBLE_EQ(c.bc.T_ambient, 298.15);
  EXPECT_DOUBLE_EQ(c.T_initial, 298.15);
  EXPECT_DOUBLE_EQ(c.local_material.solidus, 1290 + 273.15);
}

TEST(Config, UnitsConverted) {
  const auto c = load_config(toy_config("units", [](std::string& t) {
    replace(t, "radius = 0.1 mm", "radius = 100 um");
    replace(t, "T_ambient = 25 C", "T_ambient = 300 K");
    replace(t, "t_end = 0.02 s", "t_end = 20 ms");
  }));
  EXPECT_NEAR(c.beam.radius, 1e-4, 1e-18);
  EXPECT_DOUBLE_EQ(c.bc.T_ambient, 300.0);
  EXPECT_NEAR(c.t_end, 0.02, 1e-15);
  EXPECT_NEAR(c.beam.speed, 4e-3, 1e-18);
}

TEST(Config, UnknownKeyRejected) {
  EXPECT_THROW(load_config(toy_config("unknown", [](std::string& t) { t += "\n[output]\nbogus = 1\n"; })), ConfigError);
  EXPECT_THROW(load_config(toy_config("unknown2", [](std::string& t) { replace(t, "[laser]", "[laser]\nwaist = 3 mm"); })),
               ConfigError);
}

TEST(Config, WrongUnitRejected) {
  EXPECT_THROW(load_config(toy_config("unit", [](std::string& t) { replace(t, "h_global = 0.25 mm", "h_global = 0.25 K"); })),
               ConfigError);
}

TEST(Config, DuplicateKeyRejected) {
  EXPECT_THROW(
      load_config(toy_config("dup", [](std::string& t) { replace(t, "h_global = 0.25 mm", "h_global = 0.25 mm\nh_global = 0.5 mm"); })),
      ConfigError);
}

TEST(Config, InvertedMeltRangeRejected) {
  const auto cfg = toy_config("melt");
  std::string mat = slurp(cfg.parent_path() / "materials/in625.mat");
  replace(mat, "T_liquidus = 1380", "T_liquidus = 1200");
  std::ofstream(cfg.parent_path() / "materials/in625.mat") << mat;
  EXPECT_THROW(load_config(cfg), Error);
}

TEST(Config, MissingMaterialRejected) {
  EXPECT_THROW(load_config(toy_config("nomat", [](std::string& t) { replace(t, "global = materials/in625.mat", "global = none.mat"); })),
               ConfigError);
}

TEST(Config, StrictConstants) {
  auto c = load_config(source_dir() / "configs/study_2d.cfg");
  c.apply_strict_paper();
  EXPECT_DOUBLE_EQ(c.bc.sigma_sb, 5.87e-8);
  EXPECT_DOUBLE_EQ(c.beam.speed, 1e-5);
  EXPECT_NEAR(c.effective_track_length(), 1e-5, 1e-18);
}

TEST(ControlTemperature, ConstantAndLinear) {
  EXPECT_NEAR(control_temperature([](const Point<2>&) { return 7.0; }, 0.99, 0.0, 5.0, 0.0625), 35.0, 1e-12);
  EXPECT_NEAR(control_temperature([](const Point<2>& p) { return p[0]; }, 0.3, 0.0, 1.0, 0.1), 0.5, 1e-14);
  auto mesh = std::make_shared<const Mesh<2>>(build_structured_mesh<2>({{0, 0}, {5 * mm, 1 * mm}}, 0.25 * mm));
  const auto f = FieldState<2>::constant(mesh, 400.0, 0.0);
  EXPECT_NEAR(control_temperature(f, 0.99 * mm, 0.0, 5 * mm), 400.0 * 5 * mm, 1e-12);
  EXPECT_THROW(control_temperature(f, 1.2 * mm, 0.0, 5 * mm), PointOutsideMesh);
}

TEST(ErrorMetrics, IdenticalAndScaled) {
  auto mesh = std::make_shared<const Mesh<2>>(build_structured_mesh<2>({{0, 0}, {1, 1}}, 0.125));
  ReferenceTrajectory<2> ref{0.0, 0.1, {}};
  std::vector<std::tuple<double, std::string, FieldState<2>>> same, scaled;
  const double e = 0.03;
  for (int k = 0; k < 4; ++k) {
    std::vector<double> v(mesh->num_nodes());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 300.0 + 50.0 * k * mesh->node(static_cast<int>(i))[0];
    ref.fields.emplace_back(mesh, v, 0.1 * k);
    same.emplace_back(0.1 * k, "macro", FieldState<2>(mesh, v, 0.1 * k));
    for (auto& x : v) x *= 1.0 + e;
    scaled.emplace_back(0.1 * k, "macro", FieldState<2>(mesh, v, 0.1 * k));
  }
  const auto r0 = error_metrics<2>(same, ref);
  for (double x : r0.rel_l2) EXPECT_EQ(x, 0.0);
  const auto r1 = error_metrics<2>(scaled, ref);
  for (double x : r1.rel_l2) EXPECT_NEAR(x, e, 1e-12);
  EXPECT_NEAR(r1.mean(), e, 1e-12);
  std::vector<std::tuple<double, std::string, FieldState<2>>> off{{0.05, "micro", ref.fields[0]}};
  EXPECT_THROW(error_metrics<2>(off, ref), ValidationError);
}

TEST(ErrorMetrics, ReferenceOnFinerMesh) {
  auto coarse = std::make_shared<const Mesh<2>>(build_structured_mesh<2>({{0.25, 0.5}, {0.75, 1}}, 0.125));
  auto fine = std::make_shared<const Mesh<2>>(build_structured_mesh<2>({{0, 0}, {1, 1}}, 0.0625));
  auto lin = [](const Point<2>& p) { return 1.0 + p[0] + 2.0 * p[1]; };
  std::vector<double> a(coarse->num_nodes()), b(fine->num_nodes());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = lin(coarse->node(static_cast<int>(i)));
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = lin(fine->node(static_cast<int>(i)));
  EXPECT_NEAR(relative_l2(FieldState<2>(coarse, a, 0), FieldState<2>(fine, b, 0)), 0.0, 1e-14);
}

TEST(Vtk, LegacyLayout) {
  const auto dir = scratch("vtk");
  const auto mesh = build_structured_mesh<3>({{0, 0, 0}, {1, 1, 1}}, 0.5);
  std::vector<double> T(mesh.num_nodes(), 1.5);
  write_vtk<3>(dir / "a.vtk", mesh, {{"temperature", &T}});
  const auto s = slurp(dir / "a.vtk");
  EXPECT_EQ(s.rfind("# vtk DataFile Version 3.0\n", 0), 0u);
  EXPECT_NE(s.find("POINTS 27 double"), std::string::npos);
  EXPECT_NE(s.find("CELLS 48 240"), std::string::npos);
  EXPECT_NE(s.find("POINT_DATA 27\nSCALARS temperature double 1"), std::string::npos);
  std::vector<double> bad(3);
  EXPECT_THROW(write_vtk<3>(dir / "b.vtk", mesh, {{"temperature", &bad}}), ValidationError);
}

TEST(Run, ToyReferenceOutputs) {
  auto c = load_config(source_dir() / "configs/toy_reference.cfg");
  const auto dir = scratch("toy");
  const auto x = make_experiment<2>(c);
  const auto r = run_reference(x, dir);
  EXPECT_EQ(r.macro_steps, 2);
  int vtk = 0;
  for (const auto& e : fs::directory_iterator(dir / "vtk")) vtk += e.path().extension() == ".vtk";
  EXPECT_EQ(vtk, 2);
  EXPECT_EQ(count_lines(dir / "errors.csv"), 1 + 2);
  EXPECT_EQ(slurp(dir / "errors.csv").rfind("t,step_kind,rel_l2_local,T_star\n", 0), 0u);
  EXPECT_EQ(slurp(dir / "timing.csv").rfind("phase,seconds,count\n", 0), 0u);
  EXPECT_TRUE(fs::exists(dir / "summary.json"));
}

TEST(Run, SpacetimeSummaryAndDeterminism) {
  auto c = study_config(0.2);
  c.dt_global = 0.1;
  c.dt_local = 0.05;
  c.dt_reference = 0.05;
  const auto x = make_experiment<2>(c);
  ReferenceTrajectory<2> ref;
  run_reference(x, scratch("ref"), &ref);
  const auto d1 = scratch("det1"), d2 = scratch("det2");
  const auto r1 = run_two_level(x, 0.1, 0.05, false, d1, &ref);
  const auto r2 = run_two_level(x, 0.1, 0.05, false, d2, &ref);
  EXPECT_EQ(slurp(d1 / "errors.csv"), slurp(d2 / "errors.csv"));
  // initial state excluded: micro at 0.05, 0.15 and macro at 0.1, 0.2
  EXPECT_EQ(count_lines(d1 / "errors.csv"), 1 + 4);
  EXPECT_EQ(r1.errors.rel_l2, r2.errors.rel_l2);
  const auto j = json::parse(slurp(d1 / "summary.json"));
  EXPECT_TRUE(j.at("local_solve_accounting_ok").get<bool>());
  EXPECT_EQ(j.at("micro_steps_per_macro").get<int>(), 2);
  EXPECT_EQ(j.at("macro_steps").get<long>(), 2);
}

TEST(Run, StudyWritesMatrix) {
  auto c = study_config(0.2);
  c.dt_reference = 0.05;
  c.dt_global_list = {0.2, 0.1};
  c.dt_local_list = {0.1, 0.05};
  const auto x = make_experiment<2>(c);
  const auto dir = scratch("study");
  const auto r = run_study(x, dir, 2);
  EXPECT_EQ(r.members.size(), 4u);
  EXPECT_EQ(slurp(dir / "study_matrix.csv").rfind("dt_global,dt_local,mean_rel_l2\n", 0), 0u);
  EXPECT_EQ(count_lines(dir / "study_matrix.csv"), 1 + static_cast<int>(r.members.size()));
}

TEST(Run, FailureCarriesProvenance) {
  auto c = study_config(0.2);
  c.coupling.max_iterations = 1;
  c.coupling.tolerance = 1e-12;
  const auto x = make_experiment<2>(c);
  const auto dir = scratch("fail");
  try {
    run_two_level(x, 0.1, 0.05, false, dir);
    FAIL() << "expected a coupling failure";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("t = "), std::string::npos);
  }
  EXPECT_TRUE(fs::exists(dir / "steps.csv"));
}
