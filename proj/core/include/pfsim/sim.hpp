#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "pfsim/coupled_opt.hpp"
#include "pfsim/fluid.hpp"
#include "pfsim/levelset.hpp"
#include "pfsim/scene.hpp"
#include "pfsim/solid.hpp"

namespace pfsim {

enum class Stage {
  SolidPredict,
  ApplyForces,
  Project,
  Advect,
  CollectPairs,
  Optimize,
  Redistance,
  SolidVelocity,
  FluidVelocity,
  Extrapolate,
};

const char* to_string(Stage s);

struct SimState {
  double time = 0.0;
  int step = 0;
  LevelSet ls;
  FaceField u;
  SolidState solid;
  double initial_volume = 0.0;  // smoothed measure at t = 0
};

struct StepReport {
  int step = 0;
  double time = 0.0;  // at the end of the step
  double dt = 0.0;
  int halvings = 0;
  NewtonStats newton;
  int components = 0;
  int unknowns = 0;
  int pairs = 0;
  double max_rel_volume_error = 0.0;  // per component, after the optimizer
  double volume = 0.0;                // smoothed total after redistancing
  double sharp_volume = 0.0;
  double min_distance = 0.0;  // live interpolated phi over solid vertices; +inf if none
  double max_div = 0.0;       // max |div u| over fluid cells, 1/s
  int bc_faces = 0;
  int guard_restores = 0;
  int projection_iterations = 0;
  double wall_seconds = 0.0;
};

/// Header and row of diagnostics.csv (wall time is excluded so that output
/// is reproducible).
std::string diagnostics_header();
std::string diagnostics_row(const StepReport& r);

class Simulator {
 public:
  explicit Simulator(SceneConfig cfg);

  const SceneConfig& config() const { return cfg_; }
  const SimState& state() const { return state_; }

  /// Records the stage sequence of every attempted step.
  void set_stage_hook(std::function<void(Stage)> hook) { hook_ = std::move(hook); }

  /// CFL step from the current fluid and solid speeds, capped by max_dt.
  double cfl_step() const;

  /// Advances by dt; on failure retries once with dt / 2 and otherwise throws
  /// StepFailed with the state left unchanged.
  StepReport step(double dt);

 private:
  StepReport attempt(double dt, SimState& next) const;
  void mark(Stage s) const {
    if (hook_) hook_(s);
  }

  SceneConfig cfg_;
  SimState state_;
  std::function<void(Stage)> hook_;
};

/// Initial state of a scene: signed distance of the shape union, shape
/// velocities on the faces inside each shape, and volume targets.
SimState initial_state(const SceneConfig& cfg);

/// Minimum live interpolated phi over solid vertices (+inf without vertices).
double min_solid_distance(const CellField& phi, const SolidState& s, InterpScheme scheme);

struct RunOptions {
  std::string out_dir;
  int frames = -1;  // overrides end_time when >= 0
  bool quiet = true;
  /// Called after every accepted step.
  std::function<void(const SimState&, const StepReport&)> on_step;
};

struct RunSummary {
  int steps = 0;
  int frames_written = 0;
  bool failed = false;
  std::string error;
  std::vector<StepReport> reports;
};

/// Advances the scene to its end time, writing frames and diagnostics when
/// out_dir is set. Solver failures are reported in the summary, not thrown.
RunSummary run(const SceneConfig& cfg, const RunOptions& opts);

}  // namespace pfsim
