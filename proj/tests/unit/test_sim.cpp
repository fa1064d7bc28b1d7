#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "pfsim/error.hpp"
#include "pfsim/scene.hpp"
#include "pfsim/sim.hpp"

using namespace pfsim;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("pfsim_unit_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

SceneConfig small_scene(const std::string& fluid, const std::string& solid = "{}") {
  return parse_scene(R"({"name": "t", "grid": {"nx": 32, "ny": 32, "size": 1.0},
    "fluid": )" + fluid + R"(, "solid": )" + solid + R"(,
    "time": {"cfl": 0.7, "end_time": 0.1, "frame_rate": 30}})");
}

}  // namespace

TEST_SUITE("sim") {

TEST_CASE("builtin scenes") {
  const auto names = builtin_scene_names();
  for (const char* n : {"particle_collision", "splash_volume", "porous_wall", "convergence_study",
                        "droplet_band_2d", "interp_compare"}) {
    CHECK(std::find(names.begin(), names.end(), n) != names.end());
    CHECK_NOTHROW(load_scene(n).validate());
  }
  try {
    builtin_scene_text("no_such_scene");
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
  }
}

TEST_CASE("unknown and invalid keys are rejected") {
  auto j = nlohmann::json::parse(builtin_scene_text("particle_collision"));
  auto expect_config_error = [](const nlohmann::json& doc) {
    try {
      parse_scene(doc.dump());
      FAIL("expected ConfigError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ConfigError);
    }
  };
  auto top = j;
  top["colour"] = "blue";
  expect_config_error(top);
  auto nested = j;
  nested["time"]["cfll"] = 0.5;
  expect_config_error(nested);
  auto bad = j;
  bad["time"]["cfl"] = -1.0;
  expect_config_error(bad);
  auto scheme = j;
  scheme["contact"]["scheme"] = "cubic";
  expect_config_error(scheme);
  CHECK_THROWS_AS(parse_scene("{ not json"), Error);
}

TEST_CASE("porous wall spacing sets the vertex count") {
  const SceneConfig s = load_scene("porous_wall");
  CHECK(s.solid.vertex_count() == 65);  // wall length 1 / dx 1/64, plus one
  auto j = nlohmann::json::parse(builtin_scene_text("porous_wall"));
  j["solid"]["rows"][0]["spacing_dx"] = 5.0;
  CHECK(parse_scene(j.dump()).solid.vertex_count() == 13);  // floor(64 / 5) + 1
  SolidState row;
  add_particle_row(row, Vec2(0.0, 0.4), Vec2(1.0, 0.4), 1.2 / 64, 1.0, true);
  CHECK(row.vertex_count() == 54);
  CHECK(row.x.back().x() < 1.0);
}

TEST_CASE("empty scene is unchanged by a step") {
  const SceneConfig cfg = small_scene(R"({"gravity": [0, -9.8]})");
  Simulator sim(cfg);
  const SimState before = sim.state();
  const StepReport r = sim.step(0.01);
  CHECK(sim.state().time == doctest::Approx(0.01));
  CHECK(sim.state().ls.phi.data() == before.ls.phi.data());
  CHECK(sim.state().u.max_abs() == 0.0);
  CHECK(r.pairs == 0);
  CHECK(r.components == 0);
}

TEST_CASE("free-falling vertex follows the symplectic Euler recursion") {
  const SceneConfig cfg = small_scene(R"({"gravity": [0, -10]})",
                                      R"({"particles": [{"position": [0.5, 0.8], "mass": 1.0}]})");
  Simulator sim(cfg);
  double sum_dt = 0.0;
  for (double dt : {0.01, 0.02, 0.005, 0.013}) {
    sim.step(dt);
    sum_dt += dt;
    CHECK(std::abs(sim.state().solid.v[0].y() + 10.0 * sum_dt) < 1e-10);
    CHECK(sim.state().solid.v[0].x() == 0.0);
  }
}

TEST_CASE("static droplet is a fixed point") {
  const SceneConfig cfg = small_scene(
      R"({"gravity": [0, 0], "gamma": 0.0,
          "shapes": [{"type": "circle", "center": [0.5, 0.5], "radius": 0.2}]})");
  Simulator sim(cfg);
  const double dx = cfg.grid.dx;
  for (int k = 0; k < 4; ++k) {
    const CellField before = sim.state().ls.phi;
    const StepReport r = sim.step(0.01);
    double drift = 0.0;
    for (int c = 0; c < before.size(); ++c) drift = std::max(drift, std::abs(sim.state().ls.phi[c] - before[c]));
    CHECK(drift < 1e-3 * dx);
    CHECK(r.max_rel_volume_error <= 1e-6);
  }
}

TEST_CASE("stage order") {
  const SceneConfig cfg = small_scene(
      R"({"gravity": [0, -9.8], "shapes": [{"type": "circle", "center": [0.5, 0.5], "radius": 0.15}]})",
      R"({"particles": [{"position": [0.5, 0.68], "mass": 1.0}]})");
  Simulator sim(cfg);
  std::vector<Stage> seen;
  sim.set_stage_hook([&](Stage s) { seen.push_back(s); });
  sim.step(0.005);
  const std::vector<Stage> expected = {Stage::SolidPredict, Stage::ApplyForces, Stage::Project,
                                       Stage::Advect,       Stage::CollectPairs, Stage::Optimize,
                                       Stage::Redistance,   Stage::SolidVelocity, Stage::FluidVelocity,
                                       Stage::Extrapolate};
  REQUIRE(seen.size() == expected.size());
  for (size_t k = 0; k < seen.size(); ++k) CHECK(std::string(to_string(seen[k])) == to_string(expected[k]));
}

TEST_CASE("end time zero writes frame zero only") {
  SceneConfig cfg = small_scene(R"({"shapes": [{"type": "circle", "center": [0.5, 0.5], "radius": 0.2}]})");
  cfg.end_time = 0.0;
  const fs::path dir = fresh_dir("t0");
  RunOptions opts;
  opts.out_dir = dir.string();
  const RunSummary s = run(cfg, opts);
  CHECK_FALSE(s.failed);
  CHECK(s.steps == 0);
  CHECK(s.frames_written == 1);
  CHECK(fs::exists(dir / "frames" / "phi_00000.txt"));
  CHECK_FALSE(fs::exists(dir / "frames" / "phi_00001.txt"));
  fs::remove_all(dir);
}

TEST_CASE("identical runs give byte-identical diagnostics") {
  SceneConfig cfg = small_scene(
      R"({"gravity": [0, -9.8], "shapes": [{"type": "circle", "center": [0.5, 0.6], "radius": 0.12, "velocity": [0, -1]}]})",
      R"({"particles": [{"position": [0.5, 0.4], "mass": 1e6, "fixed": true}]})");
  cfg.end_time = 2.0 / 30.0;
  cfg.write_fields = false;
  std::string out[2];
  for (int k = 0; k < 2; ++k) {
    const fs::path dir = fresh_dir("det" + std::to_string(k));
    RunOptions opts;
    opts.out_dir = dir.string();
    const RunSummary s = run(cfg, opts);
    CHECK_FALSE(s.failed);
    CHECK(s.steps > 0);
    out[k] = slurp(dir / "diagnostics.csv");
    fs::remove_all(dir);
  }
  CHECK_FALSE(out[0].empty());
  CHECK(out[0] == out[1]);
}

}  // TEST_SUITE
