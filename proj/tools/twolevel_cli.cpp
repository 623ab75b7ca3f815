#include <iostream>

#include "CLI11.hpp"
#include "twolevel/experiment.hpp"

using namespace twolevel;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string snapshots;
  int threads = 1;
  bool strict = false;
};

ExperimentConfig prepare(const Options& o, std::initializer_list<RunMode> allowed, const char* command) {
  auto c = load_config(o.config);
  if (std::find(allowed.begin(), allowed.end(), c.mode) == allowed.end())
    throw ValidationError(std::string("'") + command + "' cannot run a config in mode " + to_string(c.mode));
  if (!o.out.empty()) c.out_dir = o.out;
  if (!o.snapshots.empty()) c.snapshots = parse_snapshots(o.snapshots);
  if (o.strict) c.apply_strict_paper();
  c.validate();
  return c;
}

template <int Dim>
int run(const std::string& command, const ExperimentConfig& c, int threads) {
  const auto x = make_experiment<Dim>(c);
  if (command == "run") {
    const auto r = run_single(x, c.out_dir);
    std::cout << r.variant << ": " << r.wall_seconds << " s";
    if (!r.errors.rel_l2.empty() && r.variant != "reference") std::cout << ", mean rel L2 " << r.errors.mean();
    std::cout << '\n';
  } else if (command == "study") {
    const auto r = run_study(x, c.out_dir, threads);
    for (const auto& m : r.members)
      std::cout << "dt_global " << m.dt_global << "  dt_local " << m.dt_local << "  mean rel L2 " << m.errors.mean()
                << '\n';
  } else {
    const auto r = run_compare(x, c.out_dir);
    std::cout << "spacetime " << r.spacetime.wall_seconds << " s, space " << r.space.wall_seconds << " s, ratio "
              << r.wall_ratio() << ", global solves " << r.spacetime.counters.global_solves << " vs "
              << r.space.counters.global_solves << '\n';
  }
  std::cout << "outputs in " << c.out_dir.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-level multirate thermal simulator"};
  app.require_subcommand(1);
  Options o;
  auto add = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("config", o.config, "experiment config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory (overrides the config)");
    sub->add_option("--snapshots", o.snapshots, "VTK snapshots")->check(CLI::IsMember({"all", "macro", "none"}));
    sub->add_option("--threads", o.threads, "concurrent study members")->check(CLI::PositiveNumber);
    sub->add_flag("--strict-paper", o.strict, "sigma_SB = 5.87e-8 and 2D scan speed 0.01 mm/s");
    return sub;
  };
  auto* run_cmd = add("run", "single run in the config's mode");
  auto* study_cmd = add("study", "convergence study against a monolithic reference");
  add("compare", "spacetime against space-only two-level stepping");
  CLI11_PARSE(app, argc, argv);

  const std::string command = app.got_subcommand(run_cmd) ? "run" : app.got_subcommand(study_cmd) ? "study" : "compare";
  try {
    ExperimentConfig c;
    if (command == "run")
      c = prepare(o, {RunMode::reference, RunMode::two_level_space, RunMode::two_level_spacetime}, "run");
    else if (command == "study")
      c = prepare(o, {RunMode::convergence_study}, "study");
    else
      c = prepare(o, {RunMode::compare}, "compare");
    return c.dim == 2 ? run<2>(command, c, o.threads) : run<3>(command, c, o.threads);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
