// pfsim: command-line driver for the solid-fluid scenes.
#include <cstdio>
#include <iostream>
#include <string>

#include <Eigen/Core>

#include "CLI11.hpp"
#include "pfsim/error.hpp"
#include "pfsim/scene.hpp"
#include "pfsim/sim.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Penetration-free solid-fluid simulator (2D)"};
  app.require_subcommand(1);

  std::string scene_arg, out_dir, scheme;
  int frames = -1;
  double cfl = 0.0;
  bool no_line_search = false, no_ccd = false, no_volume = false, verbose = false;
  unsigned long long seed = 0;
  int threads = 1;

  CLI::App* run_cmd = app.add_subcommand("run", "Simulate a scene");
  run_cmd->add_option("--scene", scene_arg, "Builtin scene name or JSON file")->required();
  run_cmd->add_option("--out", out_dir, "Output directory")->required();
  run_cmd->add_option("--frames", frames, "Number of frames (overrides the end time)")
      ->check(CLI::NonNegativeNumber);
  run_cmd->add_option("--cfl", cfl, "CFL number")->check(CLI::PositiveNumber);
  run_cmd->add_option("--scheme", scheme, "Distance interpolation")
      ->check(CLI::IsMember({"linear", "quadratic"}));
  run_cmd->add_flag("--no-line-search", no_line_search, "Disable backtracking line search");
  run_cmd->add_flag("--no-ccd", no_ccd, "Disable the CCD step filter");
  run_cmd->add_flag("--no-volume-constraint", no_volume, "Disable the volume constraint");
  auto* seed_opt = run_cmd->add_option("--seed", seed, "Random seed recorded with the run");
  run_cmd->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  run_cmd->add_flag("-v,--verbose", verbose, "Print one line per frame");

  CLI::App* list_cmd = app.add_subcommand("list", "List builtin scenes");
  std::string show_name;
  CLI::App* show_cmd = app.add_subcommand("show", "Print the JSON of a builtin scene");
  show_cmd->add_option("name", show_name, "Scene name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (list_cmd->parsed()) {
    for (const auto& n : pfsim::builtin_scene_names()) std::cout << n << '\n';
    return 0;
  }
  if (show_cmd->parsed()) {
    try {
      std::cout << pfsim::builtin_scene_text(show_name) << '\n';
    } catch (const pfsim::Error& e) {
      std::cerr << "pfsim: " << e.what() << '\n';
      return kExitConfig;
    }
    return 0;
  }

  pfsim::SceneConfig cfg;
  try {
    cfg = pfsim::load_scene(scene_arg);
    if (cfl > 0.0) cfg.cfl = cfl;
    if (scheme == "linear") cfg.scheme = pfsim::InterpScheme::Linear;
    if (scheme == "quadratic") cfg.scheme = pfsim::InterpScheme::Quadratic;
    if (no_line_search) cfg.line_search = false;
    if (no_ccd) cfg.ccd = false;
    if (no_volume) cfg.volume_constraint = false;
    if (seed_opt->count() > 0) cfg.seed = seed;
    cfg.validate();
  } catch (const pfsim::Error& e) {
    std::cerr << "pfsim: " << e.what() << '\n';
    return kExitConfig;
  }
  Eigen::setNbThreads(threads);

  pfsim::RunOptions opts;
  opts.out_dir = out_dir;
  opts.frames = frames;
  pfsim::RunSummary sum;
  try {
    sum = pfsim::run(cfg, opts);
  } catch (const pfsim::Error& e) {
    std::cerr << "pfsim: " << e.what() << '\n';
    return e.code() == pfsim::ErrorCode::ConfigError ? kExitConfig : kExitSolver;
  }
  if (verbose) {
    for (const auto& r : sum.reports) {
      std::printf("step %d t=%.5f dt=%.3e newton=%d min_d=%.3e vol_err=%.2e\n", r.step, r.time, r.dt,
                  r.newton.iterations, r.min_distance, r.max_rel_volume_error);
    }
  }
  std::printf("%s: %d steps, %d frames%s\n", cfg.name.c_str(), sum.steps, sum.frames_written,
              sum.failed ? " (failed)" : "");
  if (sum.failed) {
    std::cerr << "pfsim: " << sum.error << '\n';
    return kExitSolver;
  }
  return 0;
}
