#include "pfsim/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "pfsim/contact.hpp"
#include "pfsim/error.hpp"
#include "pfsim/velocity_correction.hpp"

namespace pfsim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void sorted_union(std::vector<int>& cells) {
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
}

/// Narrowband cells plus every cell a pair stencil can touch while the
/// vertex moves from its start position to the predicted one.
std::vector<int> optimization_unknowns(const NarrowbandSet& nb, const std::vector<PrimitivePair>& pairs,
                                       const std::vector<Vec2>& x0, const std::vector<Vec2>& x1,
                                       const GridDesc& g) {
  std::vector<int> cells = nb.cells;
  for (const PrimitivePair& p : pairs) {
    if (p.scheme == InterpScheme::Linear) {
      cells.push_back(g.cell_index(p.base_i, p.base_j));
      cells.push_back(g.cell_index(p.base_i + 1, p.base_j));
      cells.push_back(g.cell_index(p.base_i, p.base_j + 1));
      cells.push_back(g.cell_index(p.base_i + 1, p.base_j + 1));
      continue;
    }
    const Vec2 a = x0[p.vertex], b = x1[p.vertex];
    const int samples = 1 + static_cast<int>(std::ceil((b - a).norm() / (0.5 * g.dx)));
    for (int s = 0; s <= samples; ++s) {
      const InterpStencil st = quadratic_stencil(g, a + (b - a) * (double(s) / samples));
      for (int k = 0; k < st.count; ++k) cells.push_back(st.cells[k]);
    }
  }
  sorted_union(cells);
  return cells;
}

InterpStencil live_stencil(const GridDesc& g, const Vec2& x, InterpScheme scheme) {
  return scheme == InterpScheme::Quadratic ? quadratic_stencil(g, x) : bilinear_stencil(g, x);
}

/// Faces of the primal cell holding each vertex, prescribed to v.n.
FaceConstraints neumann_vertex_faces(const SolidState& s, const std::vector<Vec2>& x,
                                     const std::vector<Vec2>& v, const GridDesc& g) {
  FaceConstraints out;
  for (int k = 0; k < static_cast<int>(x.size()); ++k) {
    const Vec2 r = (x[k] - g.origin) / g.dx;
    const int i = std::clamp(static_cast<int>(std::floor(r.x())), 0, g.nx - 1);
    const int j = std::clamp(static_cast<int>(std::floor(r.y())), 0, g.ny - 1);
    for (int f = i; f <= i + 1; ++f) {
      if (f > 0 && f < g.nx) out.push_back({Axis::X, f, j, v[k].x()});
    }
    for (int f = j; f <= j + 1; ++f) {
      if (f > 0 && f < g.ny) out.push_back({Axis::Y, i, f, v[k].y()});
    }
  }
  (void)s;
  return out;
}

double max_fluid_divergence(const FaceField& u, const CellField& phi) {
  const CellField div = divergence(u);
  double m = 0.0;
  for (int c = 0; c < phi.size(); ++c) {
    if (phi[c] < 0.0) m = std::max(m, std::abs(div[c]));
  }
  return m;
}

double max_solid_speed(const SolidState& s) {
  double m = 0.0;
  for (int k = 0; k < s.vertex_count(); ++k) {
    if (!s.fixed[k]) m = std::max(m, s.v[k].norm());
  }
  return m;
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

}  // namespace

const char* to_string(Stage s) {
  switch (s) {
    case Stage::SolidPredict: return "solid_predict";
    case Stage::ApplyForces: return "apply_forces";
    case Stage::Project: return "project";
    case Stage::Advect: return "advect";
    case Stage::CollectPairs: return "collect_pairs";
    case Stage::Optimize: return "optimize";
    case Stage::Redistance: return "redistance";
    case Stage::SolidVelocity: return "solid_velocity";
    case Stage::FluidVelocity: return "fluid_velocity";
    case Stage::Extrapolate: return "extrapolate";
  }
  return "unknown";
}

double min_solid_distance(const CellField& phi, const SolidState& s, InterpScheme scheme) {
  double m = kInf;
  for (const Vec2& x : s.x) m = std::min(m, live_distance(phi, x, scheme));
  return m;
}

SimState initial_state(const SceneConfig& cfg) {
  cfg.validate();
  const GridDesc& g = cfg.grid;
  SimState st;
  const Vec2 ext = g.extent();
  const double far = 2.0 * std::max(ext.x(), ext.y());
  auto nearest = [&](const Vec2& p) -> std::pair<double, const FluidShape*> {
    double best = far;
    const FluidShape* shape = nullptr;
    for (const FluidShape& s : cfg.shapes) {
      const double d = s.sdf(p);
      if (d < best) {
        best = d;
        shape = &s;
      }
    }
    return {best, shape};
  };
  st.ls.phi = CellField(g, far);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) st.ls.phi(i, j) = nearest(g.cell_center(i, j)).first;
  }
  // Start on the redistanced manifold so a resting state is a fixed point.
  if (st.ls.phi.min() < 0.0 && st.ls.phi.max() > 0.0) {
    for (int pass = 0; pass < 8; ++pass) {
      CellField next = redistance(st.ls.phi);
      double change = 0.0;
      for (int c = 0; c < g.cell_count(); ++c) change = std::max(change, std::abs(next[c] - st.ls.phi[c]));
      st.ls.phi = std::move(next);
      if (change < 1e-6 * g.dx) break;
    }
  }
  st.ls.sharpness = cfg.sharpness();
  st.ls.band_width = 3.0 * g.dx;
  st.ls.components = connected_components(st.ls.phi);
  st.ls.targets = discrete_volume(st.ls.phi, st.ls.sharpness, st.ls.components);

  FaceField u(g);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 1; i < g.nx; ++i) {
      const auto [d, s] = nearest(g.xface_center(i, j));
      if (s != nullptr && d < 0.0) u.u(i, j) = s->velocity.x();
    }
  }
  for (int j = 1; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const auto [d, s] = nearest(g.yface_center(i, j));
      if (s != nullptr && d < 0.0) u.v(i, j) = s->velocity.y();
    }
  }
  st.u = extrapolate_velocity(u, st.ls.phi);
  st.solid = cfg.solid;
  st.initial_volume = total_volume(st.ls.phi, st.ls.sharpness);
  return st;
}

Simulator::Simulator(SceneConfig cfg) : cfg_(std::move(cfg)), state_(initial_state(cfg_)) {}

double Simulator::cfl_step() const {
  const double speed = std::max(state_.u.max_abs(), max_solid_speed(state_.solid));
  double dt = cfl_dt(speed, cfg_.cfl, cfg_.grid.dx, cfg_.fluid);
  if (cfg_.max_dt > 0.0) dt = std::min(dt, cfg_.max_dt);
  return dt;
}

StepReport Simulator::step(double dt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "step needs dt > 0");
  SimState next;
  StepReport rep;
  try {
    rep = attempt(dt, next);
  } catch (const Error& first) {
    try {
      rep = attempt(0.5 * dt, next);
      rep.halvings = 1;
    } catch (const Error& second) {
      throw Error(ErrorCode::StepFailed, std::string("step failed at t = ") +
                                             fmt(state_.time) + ": " + first.what() +
                                             "; retry with dt/2: " + second.what());
    }
  }
  state_ = std::move(next);
  return rep;
}

StepReport Simulator::attempt(double dt, SimState& next) const {
  const auto t0 = std::chrono::steady_clock::now();
  const SimState& s = state_;
  const GridDesc& g = cfg_.grid;
  const ContactParams cp = cfg_.contact();
  const double k = s.ls.sharpness;
  const double rho = cfg_.fluid.rho_l;
  const bool has_solid = !s.solid.empty();
  const bool barrier_mode = cfg_.contact_mode == ContactMode::Barrier;
  StepReport rep;
  rep.dt = dt;

  mark(Stage::SolidPredict);
  const std::vector<Vec2> x_star =
      has_solid ? predict_positions(s.solid, cfg_.fluid.g, dt) : std::vector<Vec2>{};
  FaceConstraints baseline_bc;
  if (!barrier_mode && has_solid) baseline_bc = neumann_vertex_faces(s.solid, s.solid.x, s.solid.v, g);

  mark(Stage::ApplyForces);
  const FaceField u_forced = apply_forces(s.u, s.ls.phi, cfg_.fluid, dt, cfg_.tols);

  mark(Stage::Project);
  const ProjectResult pr = project(u_forced, s.ls.phi, baseline_bc, dt, rho, cfg_.tols);

  mark(Stage::Advect);
  const FaceField u_dd = extrapolate_velocity(pr.u, s.ls.phi);
  const CellField phi_star = advect_semilagrangian(u_dd, s.ls.phi, dt);
  const FaceField u_star = advect_semilagrangian(u_dd, u_dd, dt);

  mark(Stage::CollectPairs);
  const ComponentLabels labels_star = connected_components(phi_star);
  const std::vector<double> vol_star = discrete_volume(phi_star, k, labels_star);
  const std::vector<int> attribution = attribute_cells(phi_star, labels_star);
  const std::vector<int> attribution_prev = attribute_cells(s.ls.phi, s.ls.components);
  const std::vector<double> targets = pool_touching_targets(
      update_component_targets(s.ls.components, s.ls.targets, labels_star, vol_star, &attribution_prev,
                               &attribution),
      vol_star, phi_star, attribution, k);
  const bool has_fluid = labels_star.count > 0;
  NarrowbandSet nb;
  if (has_fluid) nb = select_narrowband(phi_star, narrowband_width(u_dd.max_abs(), dt, g.dx));
  std::vector<PrimitivePair> pairs;
  if (barrier_mode && has_solid) {
    pairs = collect_pairs(phi_star, x_star, cp);
    rebase_at_start(pairs, s.ls.phi, s.solid.x);
  }
  rep.pairs = static_cast<int>(pairs.size());

  mark(Stage::Optimize);
  OptProblem prob;
  prob.phi_star = phi_star;
  prob.unknowns = optimization_unknowns(nb, pairs, s.solid.x, x_star, g);
  if (cfg_.volume_constraint && has_fluid) prob.attribution = attribution;
  prob.targets = targets;
  if (has_solid) prob.solid = &s.solid;
  prob.dofs = make_dof_map(s.solid);
  prob.x_star = x_star;
  prob.pairs = pairs;
  rep.unknowns = prob.phi_count();

  OptParams op;
  op.dt = dt;
  op.rho_l = cfg_.fluid.rho_l;
  op.rho_a = cfg_.fluid.rho_a;
  op.sharpness = k;
  op.elastic = cfg_.elastic;
  op.contact = cp;
  op.volume_constraint = cfg_.volume_constraint;
  op.line_search = cfg_.line_search;
  op.ccd = cfg_.ccd;
  op.tol_v = cfg_.tol_v;
  op.max_iters = cfg_.max_newton_iters;

  OptIterate start;
  start.phi = phi_star;
  for (int c : prob.unknowns) start.phi[c] = s.ls.phi[c];
  start.x = s.solid.x;
  NewtonResult res = newton_solve(prob, start, op);
  rep.newton = res.stats;
  if (cfg_.line_search && !res.stats.converged && !(res.stats.min_pair_distance > 0.0)) {
    throw Error(ErrorCode::StepFailed, "Newton did not converge and a pair distance is non-positive");
  }
  const CellField& phi_opt = res.iterate.phi;
  if (has_fluid) {
    const auto h = volume_residuals(phi_opt, attribution, targets, k);
    for (size_t c = 0; c < h.size(); ++c) {
      if (targets[c] > 0.0) {
        rep.max_rel_volume_error = std::max(rep.max_rel_volume_error, std::abs(h[c]) / targets[c]);
      }
    }
  }

  mark(Stage::Redistance);
  CellField phi_new = phi_opt;
  if (phi_opt.min() < 0.0 && phi_opt.max() > 0.0) phi_new = redistance(phi_opt);
  if (barrier_mode && has_solid) {
    const std::vector<Vec2>& xs = res.iterate.x;
    for (int pass = 0; pass < 16; ++pass) {
      bool changed = false;
      for (const Vec2& xv : xs) {
        if (!(live_distance(phi_opt, xv, cfg_.scheme) > 0.0)) continue;
        if (live_distance(phi_new, xv, cfg_.scheme) > 0.0) continue;
        const InterpStencil st = live_stencil(g, xv, cfg_.scheme);
        for (int q = 0; q < st.count; ++q) {
          const int c = st.cells[q];
          if (phi_new[c] != phi_opt[c]) {
            phi_new[c] = phi_opt[c];
            changed = true;
          }
        }
        ++rep.guard_restores;
      }
      if (!changed) break;
    }
  }

  // Redistancing moves the smoothed volume; pull it back onto the targets
  // without touching cells that carry a solid vertex.
  if (cfg_.volume_constraint && has_fluid && phi_new.min() < 0.0) {
    auto h_re = volume_residuals(phi_new, attribution, targets, k);
    // Sub-cell droplets can be wiped out entirely; keep them as optimized.
    std::vector<char> wiped(h_re.size(), 0);
    for (size_t c = 0; c < h_re.size(); ++c) {
      if (targets[c] > 0.0 && std::abs(h_re[c]) > 0.1 * targets[c]) wiped[c] = 1;
    }
    if (std::find(wiped.begin(), wiped.end(), 1) != wiped.end()) {
      for (int c = 0; c < g.cell_count(); ++c) {
        if (attribution[c] >= 0 && wiped[attribution[c]]) phi_new[c] = phi_opt[c];
      }
      h_re = volume_residuals(phi_new, attribution, targets, k);
    }
    bool off = false;
    for (size_t c = 0; c < h_re.size(); ++c) {
      if (targets[c] > 0.0 && std::abs(h_re[c]) > op.volume_tol * targets[c]) off = true;
    }
    if (off) {
      std::vector<char> locked(static_cast<size_t>(g.cell_count()), 0);
      if (has_solid) {
        for (const Vec2& xv : res.iterate.x) {
          if (!(live_distance(phi_new, xv, cfg_.scheme) < 2.0 * cp.dhat)) continue;
          const InterpStencil st = live_stencil(g, xv, cfg_.scheme);
          for (int q = 0; q < st.count; ++q) locked[st.cells[q]] = 1;
        }
      }
      const NarrowbandSet nb_new = select_narrowband(phi_new, 3.0 * g.dx);
      std::vector<int> free_cells;
      for (int c : nb_new.cells) {
        if (!locked[c] && attribution[c] >= 0) free_cells.push_back(c);
      }
      if (!free_cells.empty()) {
        OptParams vp = op;
        vp.contact = cp;
        phi_new = volume_only_solve(phi_new, phi_new, free_cells, attribution, targets, vp);
      }
    }
  }

  mark(Stage::SolidVelocity);
  SolidState solid_new = s.solid;
  if (has_solid) {
    solid_new.v = correct_velocities(res.iterate.x, s.solid.x, dt, s.solid.damping);
    solid_new.x = res.iterate.x;
  }

  mark(Stage::FluidVelocity);
  FaceConstraints bc;
  if (has_solid) {
    if (barrier_mode) {
      const auto faces = detect_bc_faces(pairs, phi_new, solid_new.x, cp.dhat);
      bc = bc_constraints(build_weights(faces, solid_new, solid_new.x, g, cp.dhat), solid_new.v);
    } else {
      bc = neumann_vertex_faces(solid_new, solid_new.x, solid_new.v, g);
    }
  }
  rep.bc_faces = static_cast<int>(bc.size());
  const ProjectResult pr2 = project(u_star, phi_new, bc, dt, rho, cfg_.tols);
  rep.projection_iterations = pr.iterations + pr2.iterations;

  mark(Stage::Extrapolate);
  FaceField u_new = extrapolate_velocity(pr2.u, phi_new);
  if (!(phi_new.min() < 0.0)) u_new = FaceField(g);  // no liquid left to carry a velocity
  if (!u_new.all_finite() || !phi_new.all_finite()) {
    throw Error(ErrorCode::SolverDiverged, "non-finite state after step");
  }

  next = s;
  next.time = s.time + dt;
  next.step = s.step + 1;
  next.ls.phi = std::move(phi_new);
  next.ls.components = connected_components(next.ls.phi);
  const std::vector<int> attribution_new = attribute_cells(next.ls.phi, next.ls.components);
  next.ls.targets = update_component_targets(
      labels_star, targets, next.ls.components,
      discrete_volume(next.ls.phi, k, next.ls.components), &attribution, &attribution_new);
  next.u = std::move(u_new);
  next.solid = std::move(solid_new);

  rep.step = next.step;
  rep.time = next.time;
  rep.components = next.ls.components.count;
  rep.volume = total_volume(next.ls.phi, k);
  rep.sharp_volume = sharp_volume(next.ls.phi);
  rep.min_distance = has_solid ? min_solid_distance(next.ls.phi, next.solid, cfg_.scheme) : kInf;
  rep.max_div = max_fluid_divergence(next.u, next.ls.phi);
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

std::string diagnostics_header() {
  return "step,time,dt,halvings,newton_iterations,newton_converged,final_step_size,"
         "final_residual,line_search,ccd,accepted_steps,excluded_pairs,dropped_pairs,components,"
         "unknowns,pairs,max_rel_volume_error,volume,sharp_volume,min_distance,max_div,bc_faces,"
         "guard_restores,projection_iterations";
}

std::string diagnostics_row(const StepReport& r) {
  std::ostringstream os;
  os << r.step << ',' << fmt(r.time) << ',' << fmt(r.dt) << ',' << r.halvings << ','
     << r.newton.iterations << ',' << (r.newton.converged ? 1 : 0) << ','
     << fmt(r.newton.final_step_size) << ',' << fmt(r.newton.final_residual) << ','
     << (r.newton.used_line_search ? 1 : 0) << ',' << (r.newton.used_ccd ? 1 : 0) << ','
     << r.newton.alphas.size() << ',' << r.newton.excluded_pairs << ',' << r.newton.dropped_pairs
     << ',' << r.components << ',' << r.unknowns << ',' << r.pairs << ','
     << fmt(r.max_rel_volume_error) << ',' << fmt(r.volume) << ',' << fmt(r.sharp_volume) << ','
     << fmt(r.min_distance) << ',' << fmt(r.max_div) << ',' << r.bc_faces << ','
     << r.guard_restores << ',' << r.projection_iterations;
  return os.str();
}

namespace {

void write_frame(const std::filesystem::path& dir, int frame, const SimState& st, bool fields) {
  char tag[16];
  std::snprintf(tag, sizeof tag, "%05d", frame);
  const std::filesystem::path fdir = dir / "frames";
  if (fields) {
    std::ofstream phi(fdir / ("phi_" + std::string(tag) + ".txt"));
    write_cell_field(phi, st.ls.phi);
    std::ofstream ux(fdir / ("ux_" + std::string(tag) + ".txt"));
    std::ofstream uy(fdir / ("uy_" + std::string(tag) + ".txt"));
    write_face_fields(ux, uy, st.u);
  }
  std::ofstream sol(fdir / ("solid_" + std::string(tag) + ".txt"));
  sol << std::setprecision(std::numeric_limits<double>::max_digits10);
  sol << st.solid.vertex_count() << ' ' << st.solid.edges.size() << ' ' << fmt(st.time) << '\n';
  for (int k = 0; k < st.solid.vertex_count(); ++k) {
    sol << st.solid.x[k].x() << ' ' << st.solid.x[k].y() << ' ' << int(st.solid.fixed[k]) << '\n';
  }
  for (const auto& e : st.solid.edges) sol << e[0] << ' ' << e[1] << '\n';
}

}  // namespace

RunSummary run(const SceneConfig& cfg, const RunOptions& opts) {
  RunSummary sum;
  Simulator sim(cfg);
  const double frame_dt = 1.0 / cfg.frame_rate;
  const double end_time = opts.frames >= 0 ? opts.frames * frame_dt : cfg.end_time;
  const bool output = !opts.out_dir.empty();
  const std::filesystem::path dir(opts.out_dir);
  std::ofstream diag, timing, per_frame;
  if (output) {
    std::filesystem::create_directories(dir / "frames");
    diag.open(dir / "diagnostics.csv");
    timing.open(dir / "timing.csv");
    per_frame.open(dir / "newton_per_frame.csv");
    if (!diag || !timing || !per_frame) {
      throw Error(ErrorCode::IoError, "cannot write to output directory " + opts.out_dir);
    }
    diag << diagnostics_header() << '\n';
    timing << "step,wall_seconds\n";
    per_frame << "frame,steps,avg_newton_iterations,max_newton_iterations,capped_steps\n";
    write_frame(dir, 0, sim.state(), cfg.write_fields);
  }
  sum.frames_written = 1;

  int frame = 1;
  int frame_steps = 0, frame_iters = 0, frame_max = 0, frame_capped = 0;
  const double eps_t = 1e-9 * frame_dt;
  while (sim.state().time < end_time - eps_t) {
    const double t_frame = std::min(frame * frame_dt, end_time);
    double dt = sim.cfl_step();
    const double remaining = t_frame - sim.state().time;
    if (dt >= remaining - eps_t) {
      dt = remaining;
    } else if (dt > 0.5 * remaining) {
      dt = 0.5 * remaining;  // avoid a sliver step before the frame boundary
    }
    StepReport rep;
    try {
      rep = sim.step(dt);
    } catch (const Error& e) {
      sum.failed = true;
      sum.error = e.what();
      break;
    }
    ++sum.steps;
    ++frame_steps;
    frame_iters += rep.newton.iterations;
    frame_max = std::max(frame_max, rep.newton.iterations);
    if (!rep.newton.converged) ++frame_capped;
    if (output) {
      diag << diagnostics_row(rep) << '\n';
      diag.flush();
      timing << rep.step << ',' << fmt(rep.wall_seconds) << '\n';
    }
    if (opts.on_step) opts.on_step(sim.state(), rep);
    sum.reports.push_back(std::move(rep));
    if (sim.state().time >= t_frame - eps_t) {
      if (output) {
        write_frame(dir, frame, sim.state(), cfg.write_fields);
        per_frame << frame << ',' << frame_steps << ','
                  << fmt(frame_steps > 0 ? double(frame_iters) / frame_steps : 0.0) << ','
                  << frame_max << ',' << frame_capped << '\n';
      }
      ++sum.frames_written;
      ++frame;
      frame_steps = frame_iters = frame_max = frame_capped = 0;
    }
  }
  return sum;
}

}  // namespace pfsim
