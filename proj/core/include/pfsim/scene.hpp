#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pfsim/contact.hpp"
#include "pfsim/fluid.hpp"
#include "pfsim/grid.hpp"
#include "pfsim/solid.hpp"

namespace pfsim {

enum class ContactMode { Barrier, NeumannOnly };

struct FluidShape {
  enum class Kind { Circle, Box };
  Kind kind = Kind::Circle;
  Vec2 center = Vec2::Zero();  // circle
  double radius = 0.0;
  Vec2 lo = Vec2::Zero();  // box
  Vec2 hi = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();

  double sdf(const Vec2& p) const;
};

struct SceneConfig {
  std::string name = "scene";
  GridDesc grid;
  FluidParams fluid;
  SolverTols tols;
  std::vector<FluidShape> shapes;

  SolidState solid;
  ElasticParams elastic;

  ContactMode contact_mode = ContactMode::Barrier;
  InterpScheme scheme = InterpScheme::Quadratic;
  double dhat = 0.0;   // 0: 0.5 dx
  double kappa = 0.0;  // 0: 1e3 rho_l dx^4

  double cfl = 0.7;
  double end_time = 1.0;
  double frame_rate = 30.0;
  double max_dt = 0.0;  // 0: no cap beyond CFL and frame boundaries

  bool line_search = true;
  bool ccd = true;
  bool volume_constraint = true;
  double tol_v = 1e-3;
  int max_newton_iters = 30;

  bool write_fields = true;
  std::uint64_t seed = 0;

  void validate() const;
  ContactParams contact() const;
  /// Heaviside sharpness L / (3 dx), L the longer domain edge.
  double sharpness() const;
};

/// Parses a JSON scene. Unknown keys and invalid values raise ConfigError.
SceneConfig parse_scene(const std::string& json_text);
/// Loads a builtin scene by name or a JSON file by path.
SceneConfig load_scene(const std::string& name_or_path);

std::vector<std::string> builtin_scene_names();
/// JSON text of a builtin scene; throws ConfigError for unknown names.
std::string builtin_scene_text(const std::string& name);

/// Evenly spaced particles from a to b: floor(|b - a| / spacing) + 1 vertices.
void add_particle_row(SolidState& s, const Vec2& a, const Vec2& b, double spacing, double mass,
                      bool fixed);

}  // namespace pfsim
