#pragma once

#include <vector>

#include "pfsim/contact.hpp"
#include "pfsim/grid.hpp"
#include "pfsim/solid.hpp"
#include "pfsim/sparse.hpp"

namespace pfsim {

struct OptParams {
  double dt = 0.0;
  double rho_l = 1000.0;
  double rho_a = 1.0;
  double sharpness = 0.0;  // Heaviside k
  ElasticParams elastic;
  ContactParams contact;
  bool volume_constraint = true;
  bool line_search = true;
  bool ccd = true;
  double tol_v = 1e-3;       // m/s
  double volume_tol = 1e-6;  // |h_c| / V0_c
  int max_iters = 30;
};

/// Fixed data of one constrained solve. Unknown layout is
/// [phi at `unknowns` | free solid dofs in SolidDofMap order].
struct OptProblem {
  CellField phi_star;
  std::vector<int> unknowns;     // cell indices of the level-set unknowns
  std::vector<int> attribution;  // cell -> component, or -1; empty disables constraints
  std::vector<double> targets;   // V0 per component
  const SolidState* solid = nullptr;
  SolidDofMap dofs;
  std::vector<Vec2> x_star;
  std::vector<PrimitivePair> pairs;

  int phi_count() const { return static_cast<int>(unknowns.size()); }
  int dof_count() const { return phi_count() + dofs.dof_count(); }
};

struct OptIterate {
  CellField phi;
  std::vector<Vec2> x;
};

struct Assembly {
  double objective = 0.0;
  VecX gradient;
  SpMat H;
  SpMat J;
  VecX h;                        // one entry per constraint row
  std::vector<int> row_component;  // component of each constraint row
  VecX fluid_mass;               // lagged rho(phi) V_c per phi unknown
};

/// Per-component constraint residuals h_c = sum H(phi) V_c - V0_c.
std::vector<double> volume_residuals(const CellField& phi, const std::vector<int>& attribution,
                                     const std::vector<double>& targets, double k);

/// Objective with a given lagged fluid mass. +inf when any listed pair has d <= 0.
double objective_value(const OptProblem& prob, const OptIterate& it, const VecX& fluid_mass,
                       const std::vector<PrimitivePair>& pairs, const OptParams& p);

/// Objective, gradient, Hessian and constraint system at the iterate. `pairs`
/// are the barrier pairs in play (all with d > 0 at the iterate).
Assembly assemble(const OptProblem& prob, const OptIterate& it,
                  const std::vector<PrimitivePair>& pairs, const OptParams& p);

struct KktStep {
  VecX delta;
  VecX lambda;
  double mu = 0.0;  // regularizer that was added (0 if none)
  int retries = 0;
};

/// Solves [H J^T; J 0][d; l] = [-g; -h], adding mu I to H when H is not
/// positive definite (mu from 1e-8 trace/n, x10 per retry, at most 5 retries).
KktStep solve_kkt(const SpMat& H, const SpMat& J, const VecX& g, const VecX& h);

struct NewtonStats {
  int iterations = 0;
  double final_step_size = 0.0;
  double final_residual = 0.0;  // ||delta||_inf / dt at the last solve
  bool used_line_search = false;
  bool used_ccd = false;
  bool converged = false;
  int excluded_pairs = 0;
  int dropped_pairs = 0;  // pairs that went non-positive without line search
  std::vector<double> alphas;
  std::vector<double> merits;
  double max_rel_volume_error = 0.0;
  double min_pair_distance = 0.0;  // over pairs not excluded at the start; +inf when none
  bool line_search_stalled = false;
};

struct NewtonResult {
  OptIterate iterate;
  VecX lambda;
  NewtonStats stats;
};

/// Newton iterations from `start`. Throws StepFailed when the CCD floor binds
/// three times in a row and SingularSystem when the KKT solve fails. A solve
/// that hits the iteration cap returns with stats.converged = false.
NewtonResult newton_solve(const OptProblem& prob, const OptIterate& start, const OptParams& p);

/// Volume correction only: no solid unknowns, no pairs. `phi_start` gives the
/// initial values of the unknown cells.
CellField volume_only_solve(const CellField& phi_star, const CellField& phi_start,
                            const std::vector<int>& unknowns, const std::vector<int>& attribution,
                            const std::vector<double>& targets, const OptParams& p,
                            NewtonStats* stats = nullptr);

}  // namespace pfsim
