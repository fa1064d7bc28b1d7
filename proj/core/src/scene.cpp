#include "pfsim/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "pfsim/error.hpp"

namespace pfsim {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); }

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) config_error(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) config_error("unknown key '" + key + "' in " + where);
  }
}

Vec2 read_vec2(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    config_error(where + " must be a 2-element number array");
  }
  return Vec2(j[0].get<double>(), j[1].get<double>());
}

template <typename T>
T read(const json& obj, const std::string& key, const T& fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    config_error(where + "." + key + " has the wrong type");
  }
}

Vec2 read_vec2_or(const json& obj, const std::string& key, const Vec2& fallback,
                  const std::string& where) {
  return obj.contains(key) ? read_vec2(obj.at(key), where + "." + key) : fallback;
}

void parse_grid(const json& j, SceneConfig& s) {
  check_keys(j, {"nx", "ny", "dx", "origin", "size"}, "grid");
  s.grid.nx = read<int>(j, "nx", 64, "grid");
  s.grid.ny = read<int>(j, "ny", s.grid.nx, "grid");
  if (j.contains("dx") && j.contains("size")) config_error("grid: give either dx or size");
  if (j.contains("size")) {
    s.grid.dx = read<double>(j, "size", 1.0, "grid") / std::max(s.grid.nx, s.grid.ny);
  } else {
    s.grid.dx = read<double>(j, "dx", 1.0 / std::max(s.grid.nx, 1), "grid");
  }
  s.grid.origin = read_vec2_or(j, "origin", Vec2::Zero(), "grid");
}

void parse_fluid(const json& j, SceneConfig& s) {
  check_keys(j, {"rho_l", "rho_a", "gamma", "gravity", "st_band", "shapes"}, "fluid");
  s.fluid.rho_l = read<double>(j, "rho_l", s.fluid.rho_l, "fluid");
  s.fluid.rho_a = read<double>(j, "rho_a", s.fluid.rho_a, "fluid");
  s.fluid.gamma = read<double>(j, "gamma", s.fluid.gamma, "fluid");
  s.fluid.g = read_vec2_or(j, "gravity", s.fluid.g, "fluid");
  s.fluid.st_band = read<double>(j, "st_band", 0.0, "fluid");
  if (!j.contains("shapes")) return;
  if (!j["shapes"].is_array()) config_error("fluid.shapes must be an array");
  for (const json& sj : j["shapes"]) {
    const std::string type = read<std::string>(sj, "type", "", "fluid.shapes[]");
    FluidShape sh;
    if (type == "circle") {
      check_keys(sj, {"type", "center", "radius", "velocity"}, "fluid.shapes[circle]");
      sh.kind = FluidShape::Kind::Circle;
      sh.center = read_vec2_or(sj, "center", Vec2::Zero(), "circle");
      sh.radius = read<double>(sj, "radius", 0.0, "circle");
      if (!(sh.radius > 0.0)) config_error("circle radius must be positive");
    } else if (type == "box") {
      check_keys(sj, {"type", "min", "max", "velocity"}, "fluid.shapes[box]");
      sh.kind = FluidShape::Kind::Box;
      sh.lo = read_vec2_or(sj, "min", Vec2::Zero(), "box");
      sh.hi = read_vec2_or(sj, "max", Vec2::Zero(), "box");
      if (!(sh.hi.x() > sh.lo.x() && sh.hi.y() > sh.lo.y())) config_error("box max must exceed min");
    } else {
      config_error("unknown fluid shape type '" + type + "'");
    }
    sh.velocity = read_vec2_or(sj, "velocity", Vec2::Zero(), "shape");
    s.shapes.push_back(sh);
  }
}

void parse_solid(const json& j, SceneConfig& s) {
  check_keys(j, {"particles", "rows", "polylines", "k_stretch", "k_bend", "damping"}, "solid");
  s.elastic.k_stretch = read<double>(j, "k_stretch", 0.0, "solid");
  s.elastic.k_bend = read<double>(j, "k_bend", 0.0, "solid");
  s.solid.damping = read<double>(j, "damping", 0.0, "solid");
  SolidState& st = s.solid;
  auto push_vertex = [&](const Vec2& x, const Vec2& v, double m, bool fixed) {
    st.x.push_back(x);
    st.v.push_back(fixed ? Vec2::Zero() : v);
    st.mass.push_back(m);
    st.fixed.push_back(fixed ? 1 : 0);
  };
  if (j.contains("particles")) {
    for (const json& pj : j["particles"]) {
      check_keys(pj, {"position", "velocity", "mass", "fixed"}, "solid.particles[]");
      push_vertex(read_vec2_or(pj, "position", Vec2::Zero(), "particle"),
                  read_vec2_or(pj, "velocity", Vec2::Zero(), "particle"),
                  read<double>(pj, "mass", 1.0, "particle"), read<bool>(pj, "fixed", false, "particle"));
    }
  }
  if (j.contains("rows")) {
    for (const json& rj : j["rows"]) {
      check_keys(rj, {"start", "end", "spacing", "spacing_dx", "mass", "fixed"}, "solid.rows[]");
      double spacing = 0.0;
      if (rj.contains("spacing_dx")) {
        spacing = read<double>(rj, "spacing_dx", 0.0, "row") * s.grid.dx;
      } else {
        spacing = read<double>(rj, "spacing", 0.0, "row");
      }
      if (!(spacing > 0.0)) config_error("row spacing must be positive");
      add_particle_row(st, read_vec2_or(rj, "start", Vec2::Zero(), "row"),
                       read_vec2_or(rj, "end", Vec2::Zero(), "row"), spacing,
                       read<double>(rj, "mass", 1.0, "row"), read<bool>(rj, "fixed", true, "row"));
    }
  }
  if (j.contains("polylines")) {
    for (const json& lj : j["polylines"]) {
      check_keys(lj, {"points", "velocity", "linear_density", "pinned"}, "solid.polylines[]");
      if (!lj.contains("points") || !lj["points"].is_array() || lj["points"].size() < 2) {
        config_error("polyline needs at least two points");
      }
      const int base = st.vertex_count();
      const Vec2 v = read_vec2_or(lj, "velocity", Vec2::Zero(), "polyline");
      const double rho = read<double>(lj, "linear_density", 1.0, "polyline");
      const int n = static_cast<int>(lj["points"].size());
      for (int k = 0; k < n; ++k) push_vertex(read_vec2(lj["points"][k], "polyline point"), v, 0.0, false);
      std::vector<std::array<int, 2>> local_edges;
      std::vector<double> local_len;
      for (int k = 0; k + 1 < n; ++k) {
        st.edges.push_back({base + k, base + k + 1});
        local_edges.push_back({k, k + 1});
        local_len.push_back((st.x[base + k + 1] - st.x[base + k]).norm());
      }
      for (int k = 0; k + 2 < n; ++k) st.bend_triples.push_back({base + k, base + k + 1, base + k + 2});
      const auto m = polyline_masses(n, local_edges, local_len, rho);
      for (int k = 0; k < n; ++k) st.mass[base + k] = m[k];
      if (lj.contains("pinned")) {
        for (const json& pk : lj["pinned"]) {
          const int k = pk.get<int>();
          if (k < 0 || k >= n) config_error("polyline pinned index out of range");
          st.fixed[base + k] = 1;
          st.v[base + k] = Vec2::Zero();
        }
      }
    }
  }
  st.set_rest_state_from_current();
}

void parse_contact(const json& j, SceneConfig& s) {
  check_keys(j, {"mode", "scheme", "dhat", "kappa"}, "contact");
  const std::string mode = read<std::string>(j, "mode", "barrier", "contact");
  if (mode == "barrier") {
    s.contact_mode = ContactMode::Barrier;
  } else if (mode == "neumann_only") {
    s.contact_mode = ContactMode::NeumannOnly;
  } else {
    config_error("contact.mode must be barrier or neumann_only");
  }
  const std::string scheme = read<std::string>(j, "scheme", "quadratic", "contact");
  if (scheme == "quadratic") {
    s.scheme = InterpScheme::Quadratic;
  } else if (scheme == "linear") {
    s.scheme = InterpScheme::Linear;
  } else {
    config_error("contact.scheme must be linear or quadratic");
  }
  s.dhat = read<double>(j, "dhat", 0.0, "contact");
  s.kappa = read<double>(j, "kappa", 0.0, "contact");
}

void parse_solver(const json& j, SceneConfig& s) {
  check_keys(j, {"line_search", "ccd", "volume_constraint", "tol_v", "max_newton_iters",
                 "poisson_rel_tol", "poisson_max_iters"},
             "solver");
  s.line_search = read<bool>(j, "line_search", s.line_search, "solver");
  s.ccd = read<bool>(j, "ccd", s.ccd, "solver");
  s.volume_constraint = read<bool>(j, "volume_constraint", s.volume_constraint, "solver");
  s.tol_v = read<double>(j, "tol_v", s.tol_v, "solver");
  s.max_newton_iters = read<int>(j, "max_newton_iters", s.max_newton_iters, "solver");
  s.tols.poisson_rel_tol = read<double>(j, "poisson_rel_tol", s.tols.poisson_rel_tol, "solver");
  s.tols.poisson_max_iters = read<int>(j, "poisson_max_iters", s.tols.poisson_max_iters, "solver");
}

void parse_time(const json& j, SceneConfig& s) {
  check_keys(j, {"cfl", "end_time", "frame_rate", "max_dt"}, "time");
  s.cfl = read<double>(j, "cfl", s.cfl, "time");
  s.end_time = read<double>(j, "end_time", s.end_time, "time");
  s.frame_rate = read<double>(j, "frame_rate", s.frame_rate, "time");
  s.max_dt = read<double>(j, "max_dt", s.max_dt, "time");
}

const std::map<std::string, const char*>& builtins() {
  static const std::map<std::string, const char*> table = {
      {"particle_collision", R"({
  "name": "particle_collision",
  "grid": {"nx": 128, "ny": 128, "size": 1.0},
  "fluid": {"gravity": [0, -9.8],
            "shapes": [{"type": "circle", "center": [0.5, 0.72], "radius": 0.1, "velocity": [0, -1]}]},
  "solid": {"particles": [{"position": [0.5, 0.5], "mass": 1e6, "fixed": true}]},
  "contact": {"mode": "barrier", "scheme": "quadratic"},
  "time": {"cfl": 0.7, "end_time": 1.0, "frame_rate": 30}
})"},
      {"splash_volume", R"({
  "name": "splash_volume",
  "grid": {"nx": 128, "ny": 128, "size": 1.0},
  "fluid": {"gravity": [0, -9.8],
            "shapes": [{"type": "circle", "center": [0.5, 0.55], "radius": 0.15, "velocity": [0, -5]}]},
  "solver": {"volume_constraint": true},
  "time": {"cfl": 0.7, "end_time": 2.0, "frame_rate": 30}
})"},
      {"porous_wall", R"({
  "name": "porous_wall",
  "grid": {"nx": 64, "ny": 64, "size": 1.0},
  "fluid": {"gravity": [0, -9.8],
            "shapes": [{"type": "circle", "center": [0.5, 0.65], "radius": 0.12, "velocity": [0, -1]}]},
  "solid": {"rows": [{"start": [0.0, 0.4], "end": [1.0, 0.4], "spacing_dx": 1.0, "mass": 1e6, "fixed": true}]},
  "contact": {"mode": "barrier", "scheme": "quadratic"},
  "time": {"cfl": 0.7, "end_time": 1.0, "frame_rate": 30}
})"},
      {"convergence_study", R"({
  "name": "convergence_study",
  "grid": {"nx": 64, "ny": 64, "size": 1.0},
  "fluid": {"gravity": [0, -9.8],
            "shapes": [{"type": "circle", "center": [0.5, 0.65], "radius": 0.12, "velocity": [0, -1]}]},
  "solid": {"rows": [{"start": [0.0, 0.4], "end": [1.0, 0.4], "spacing_dx": 1.0, "mass": 1e6, "fixed": true}]},
  "contact": {"mode": "barrier", "scheme": "quadratic"},
  "solver": {"line_search": true, "ccd": true, "max_newton_iters": 30},
  "time": {"cfl": 0.7, "end_time": 0.6, "frame_rate": 30}
})"},
      {"droplet_band_2d", R"({
  "name": "droplet_band_2d",
  "grid": {"nx": 64, "ny": 64, "size": 1.0},
  "fluid": {"gravity": [0, -9.8],
            "shapes": [{"type": "circle", "center": [0.5, 0.7], "radius": 0.1, "velocity": [0, -1]}]},
  "solid": {"polylines": [{"points": [[0.2, 0.4], [0.2125, 0.4], [0.225, 0.4], [0.2375, 0.4], [0.25, 0.4],
                                      [0.2625, 0.4], [0.275, 0.4], [0.2875, 0.4], [0.3, 0.4], [0.3125, 0.4],
                                      [0.325, 0.4], [0.3375, 0.4], [0.35, 0.4], [0.3625, 0.4], [0.375, 0.4],
                                      [0.3875, 0.4], [0.4, 0.4], [0.4125, 0.4], [0.425, 0.4], [0.4375, 0.4],
                                      [0.45, 0.4], [0.4625, 0.4], [0.475, 0.4], [0.4875, 0.4], [0.5, 0.4],
                                      [0.5125, 0.4], [0.525, 0.4], [0.5375, 0.4], [0.55, 0.4], [0.5625, 0.4],
                                      [0.575, 0.4], [0.5875, 0.4], [0.6, 0.4], [0.6125, 0.4], [0.625, 0.4],
                                      [0.6375, 0.4], [0.65, 0.4], [0.6625, 0.4], [0.675, 0.4], [0.6875, 0.4],
                                      [0.7, 0.4], [0.7125, 0.4], [0.725, 0.4], [0.7375, 0.4], [0.75, 0.4],
                                      [0.7625, 0.4], [0.775, 0.4], [0.7875, 0.4], [0.8, 0.4]],
                           "linear_density": 50.0, "pinned": [0, 48]}],
            "k_stretch": 2000.0, "k_bend": 0.05},
  "contact": {"mode": "barrier", "scheme": "quadratic"},
  "time": {"cfl": 0.7, "end_time": 1.0, "frame_rate": 30}
})"},
      {"interp_compare", R"({
  "name": "interp_compare",
  "grid": {"nx": 64, "ny": 64, "size": 1.0},
  "fluid": {"gravity": [0, 0],
            "shapes": [{"type": "circle", "center": [0.5, 0.5], "radius": 0.15, "velocity": [0, 0]}]},
  "solid": {"particles": [{"position": [0.5, 0.95], "velocity": [0, -1.0], "mass": 100.0, "fixed": false}]},
  "contact": {"mode": "barrier", "scheme": "quadratic"},
  "time": {"cfl": 1.0, "end_time": 0.9, "frame_rate": 30}
})"},
  };
  return table;
}

}  // namespace

double FluidShape::sdf(const Vec2& p) const {
  if (kind == Kind::Circle) return (p - center).norm() - radius;
  const Vec2 c = 0.5 * (lo + hi);
  const Vec2 h = 0.5 * (hi - lo);
  const Vec2 q = (p - c).cwiseAbs() - h;
  const Vec2 qpos = q.cwiseMax(0.0);
  return qpos.norm() + std::min(std::max(q.x(), q.y()), 0.0);
}

void SceneConfig::validate() const {
  try {
    grid.validate();
    fluid.validate();
    solid.validate();
    contact().validate();
  } catch (const Error& e) {
    config_error(e.what());
  }
  if (!(cfl > 0.0)) config_error("cfl must be positive");
  if (!(end_time >= 0.0)) config_error("end_time must be nonnegative");
  if (!(frame_rate > 0.0)) config_error("frame_rate must be positive");
  if (!(max_dt >= 0.0)) config_error("max_dt must be nonnegative");
  if (!(tol_v > 0.0)) config_error("tol_v must be positive");
  if (max_newton_iters < 1) config_error("max_newton_iters must be at least 1");
  if (!(tols.poisson_rel_tol > 0.0) || tols.poisson_max_iters < 1) {
    config_error("invalid Poisson solver tolerances");
  }
  if (elastic.k_stretch < 0.0 || elastic.k_bend < 0.0) config_error("negative elastic stiffness");
}

ContactParams SceneConfig::contact() const {
  ContactParams p = ContactParams::defaults(grid.dx, fluid.rho_l, scheme);
  if (dhat > 0.0) p.dhat = dhat;
  if (kappa > 0.0) p.kappa = kappa;
  return p;
}

double SceneConfig::sharpness() const {
  const Vec2 ext = grid.extent();
  return std::max(ext.x(), ext.y()) / (3.0 * grid.dx);
}

SceneConfig parse_scene(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    config_error(std::string("scene JSON parse error: ") + e.what());
  }
  check_keys(j, {"name", "grid", "fluid", "solid", "contact", "solver", "time", "output", "seed"},
             "scene");
  SceneConfig s;
  s.name = read<std::string>(j, "name", s.name, "scene");
  if (!j.contains("grid")) config_error("scene needs a grid");
  parse_grid(j["grid"], s);
  if (j.contains("fluid")) parse_fluid(j["fluid"], s);
  if (j.contains("solid")) parse_solid(j["solid"], s);
  if (j.contains("contact")) parse_contact(j["contact"], s);
  if (j.contains("solver")) parse_solver(j["solver"], s);
  if (j.contains("time")) parse_time(j["time"], s);
  if (j.contains("output")) {
    check_keys(j["output"], {"fields"}, "output");
    s.write_fields = read<bool>(j["output"], "fields", true, "output");
  }
  s.seed = read<std::uint64_t>(j, "seed", 0, "scene");
  s.validate();
  return s;
}

SceneConfig load_scene(const std::string& name_or_path) {
  if (builtins().count(name_or_path)) return parse_scene(builtins().at(name_or_path));
  std::ifstream in(name_or_path);
  if (!in) config_error("no builtin scene or readable file named '" + name_or_path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scene(ss.str());
}

std::vector<std::string> builtin_scene_names() {
  std::vector<std::string> names;
  for (const auto& [k, _] : builtins()) names.push_back(k);
  return names;
}

std::string builtin_scene_text(const std::string& name) {
  const auto it = builtins().find(name);
  if (it == builtins().end()) config_error("unknown builtin scene '" + name + "'");
  return it->second;
}

void add_particle_row(SolidState& s, const Vec2& a, const Vec2& b, double spacing, double mass,
                      bool fixed) {
  const double len = (b - a).norm();
  const int count = static_cast<int>(std::floor(len / spacing + 1e-9)) + 1;
  const Vec2 dir = len > 0.0 ? Vec2((b - a) / len) : Vec2(1.0, 0.0);
  for (int k = 0; k < count; ++k) {
    s.x.push_back(a + k * spacing * dir);
    s.v.push_back(Vec2::Zero());
    s.mass.push_back(mass);
    s.fixed.push_back(fixed ? 1 : 0);
  }
}

}  // namespace pfsim
