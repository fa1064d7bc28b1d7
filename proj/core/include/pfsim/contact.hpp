#pragma once

#include <vector>

#include <Eigen/Core>

#include "pfsim/grid.hpp"

namespace pfsim {

enum class InterpScheme { Linear, Quadratic };

struct ContactParams {
  double dhat = 0.0;   // distance threshold (m)
  double kappa = 0.0;  // barrier stiffness
  InterpScheme scheme = InterpScheme::Quadratic;

  void validate() const;
  /// dhat = 0.5 dx, kappa = 1e3 (rho_l dx^2) dx^2.
  static ContactParams defaults(double dx, double rho_l, InterpScheme scheme);
};

/// A solid vertex paired with a dual cell of the level-set grid.
struct PrimitivePair {
  int vertex = -1;
  InterpScheme scheme = InterpScheme::Quadratic;
  int base_i = 0;  // lower-left primal cell of the frozen dual cell (linear only)
  int base_j = 0;
  double d = 0.0;  // distance at the last evaluation
};

/// Interpolated signed distance with its derivatives. stencil.weights holds
/// d d / d phi for each stencil cell.
struct DistanceEval {
  double d = 0.0;
  InterpStencil stencil;
  Vec2 grad_x = Vec2::Zero();
};

/// Lower-left cell of the dual cell containing x (clamped to the grid).
std::array<int, 2> dual_cell_of(const GridDesc& g, const Vec2& x);

/// Linear: bilinear form over the frozen dual cell, extrapolating when x has
/// left it. Quadratic: B-spline over the live 3x3 patch around x.
DistanceEval evaluate_distance(const CellField& phi, const Vec2& x, const PrimitivePair& pair);
double signed_distance(const CellField& phi, const Vec2& x, const PrimitivePair& pair);

/// Distance under the scheme's live stencil (no freezing); used for reporting.
double live_distance(const CellField& phi, const Vec2& x, InterpScheme scheme);

/// b(d) = -(d/dhat - 1)^2 ln(d/dhat) on (0, dhat), 0 beyond.
/// Throws NonPositiveDistance for d <= 0.
double barrier(double d, double dhat);
double barrier_d1(double d, double dhat);
double barrier_d2(double d, double dhat);

struct PairTerm {
  DistanceEval eval;
  double b = 0.0;
  double b1 = 0.0;
  double b2 = 0.0;  // clamped to >= 0
};

/// kappa * sum b(d) with the per-pair first-derivative factors. The
/// Gauss-Newton Hessian of pair p is kappa * b2 * g g^T with
/// g = [d d/d phi_stencil; d d/d x].
struct BarrierEval {
  double energy = 0.0;
  std::vector<PairTerm> terms;  // aligned with the input pairs
};

BarrierEval barrier_energy_grad_hess(const std::vector<PrimitivePair>& pairs, const CellField& phi,
                                     const std::vector<Vec2>& x, const ContactParams& params);

/// Dense per-pair Gauss-Newton block over (stencil cells..., x, y).
Eigen::MatrixXd pair_hessian_block(const PairTerm& term, double kappa);

/// One pair per vertex whose distance at the reference state is below dhat.
std::vector<PrimitivePair> collect_pairs(const CellField& phi_ref, const std::vector<Vec2>& x_ref,
                                         const ContactParams& params);

/// Linear pairs whose frozen distance is non-positive at the start iterate are
/// re-frozen on the dual cell holding the vertex there. Returns the number moved.
int rebase_at_start(std::vector<PrimitivePair>& pairs, const CellField& phi_start,
                    const std::vector<Vec2>& x_start);

struct CcdResult {
  double t_bound = 1.0;
  int flagged = 0;
  bool floored = false;
};

inline constexpr double kCcdMinStep = 1e-4;

/// Step-size bound from the closest approach of the vertex path and the path
/// of its closest fluid-surface point, evaluated for pairs whose distance is
/// negative after the full step. When min(gamma, beta) falls below the floor
/// the time of closest approach of the two moving points is used instead.
CcdResult ccd_filter(const std::vector<PrimitivePair>& pairs, const CellField& phi,
                     const std::vector<Vec2>& x, const CellField& phi_full,
                     const std::vector<Vec2>& x_full);

/// Closest-approach parameters (gamma on segment P, beta on segment Q), both
/// clamped to [0, 1]. Degenerate segments are treated as points.
std::array<double, 2> segment_closest_params(const Vec2& p0, const Vec2& p1, const Vec2& q0,
                                             const Vec2& q1);

}  // namespace pfsim
