#pragma once

#include <vector>

#include "pfsim/grid.hpp"

namespace pfsim {

struct FluidParams {
  double rho_l = 1000.0;  // kg/m^2
  double rho_a = 1.0;     // kg/m^2
  double gamma = 0.0;     // N/m
  Vec2 g = Vec2(0.0, -9.8);
  double st_band = 0.0;  // eps for the surface-tension band; 0 means 3 dx

  void validate() const;
  double band(double dx) const { return st_band > 0.0 ? st_band : 3.0 * dx; }
};

struct SolverTols {
  double poisson_rel_tol = 1e-6;
  int poisson_max_iters = 2000;
};

/// A face whose normal velocity is prescribed during projection.
struct FaceConstraint {
  Axis axis = Axis::X;
  int i = 0;
  int j = 0;
  double value = 0.0;
};
using FaceConstraints = std::vector<FaceConstraint>;

/// delta(phi) = (1 + cos(pi phi / eps)) / (2 eps) for |phi| < eps, else 0.
double smoothed_delta(double phi, double eps);

/// Gravity plus semi-implicit surface tension on faces whose sampled |phi| < eps.
/// Throws SolverDiverged if the Helmholtz solve does not converge.
FaceField apply_forces(const FaceField& u, const CellField& phi, const FluidParams& p, double dt,
                       const SolverTols& tols = {});

struct ProjectResult {
  FaceField u;
  int iterations = 0;
  bool no_fluid = false;
};

/// Pressure projection on phi < 0 cells: p = 0 in air cells, domain walls have
/// zero normal velocity, and constrained faces carry their prescribed value.
/// Throws SolverDiverged if CG fails.
ProjectResult project(const FaceField& u, const CellField& phi, const FaceConstraints& bc,
                      double dt, double rho, const SolverTols& tols = {});

/// Semi-Lagrangian transport with a midpoint (RK2) backtrace clamped to the domain.
CellField advect_semilagrangian(const FaceField& carrier, const CellField& field, double dt);
FaceField advect_semilagrangian(const FaceField& carrier, const FaceField& field, double dt);

/// Faces with at least one adjacent phi < 0 cell.
struct FaceMask {
  std::vector<char> u;
  std::vector<char> v;
};
FaceMask fluid_face_mask(const CellField& phi);

/// Breadth-first layered extrapolation from valid faces. Faces that stay
/// unreached after `layers` layers are zeroed, as are domain-wall faces.
FaceField extrapolate_velocity(const FaceField& u, const FaceMask& valid, int layers = 5);
FaceField extrapolate_velocity(const FaceField& u, const CellField& phi, int layers = 5);

/// dt = cfl dx / max(max_speed, 1e-6), capped by sqrt(rho_l dx^3 / (2 pi gamma)) when gamma > 0.
double cfl_dt(double max_speed, double cfl, double dx, const FluidParams& p);
double cfl_dt(const FaceField& u, double cfl, const FluidParams& p);

}  // namespace pfsim
