#pragma once

#include <vector>

#include "pfsim/grid.hpp"

namespace pfsim {

/// Dense labels of the 4-connected phi < 0 regions; -1 marks non-fluid cells.
struct ComponentLabels {
  std::vector<int> label;
  int count = 0;
};

/// Level-set state. phi < 0 inside the liquid.
struct LevelSet {
  CellField phi;
  double band_width = 0.0;  // eps (m)
  double sharpness = 0.0;   // k (1/m)
  ComponentLabels components;
  std::vector<double> targets;  // V_0 per component (m^2)
};

/// H(phi) = 1 / (1 + exp(2 k phi)); saturates to exactly 0 or 1 for |2 k phi| > 60.
double heaviside(double phi, double k);
/// dH/dphi; exactly 0 in the saturated range.
double heaviside_prime(double phi, double k);
/// k = L / eps.
double heaviside_sharpness(double domain_length, double band_width);

/// Smoothed density rho(phi) = (rho_l - rho_a) H(phi) + rho_a.
double smoothed_density(double phi, double k, double rho_liquid, double rho_air);

ComponentLabels connected_components(const CellField& phi);

/// Assigns every cell reachable from a fluid cell to a component, growing the
/// labels outward in breadth-first layers. Within a layer a cell takes the
/// label of its already-labeled neighbor with the smallest |phi| (ties: lowest
/// cell index). Returns -1 where no component exists.
std::vector<int> attribute_cells(const CellField& phi, const ComponentLabels& labels);

/// Per-component sum of H(phi) V_c over each component's attributed cells.
std::vector<double> discrete_volume(const CellField& phi, double k, const ComponentLabels& labels);
std::vector<double> discrete_volume(const LevelSet& ls);
/// Sum of H(phi) V_c over all cells.
double total_volume(const CellField& phi, double k);
/// Area of phi < 0 cells (sharp indicator).
double sharp_volume(const CellField& phi);

/// Reinitialization to a signed distance. Cells next to a sign change are
/// seeded from the local gradient and give one foot point each; cells within
/// 12 dx take the distance to the nearest foot point and first-order fast
/// marching covers the rest. Every cell keeps its sign. Throws NoInterface
/// when phi has no sign change.
CellField redistance(const CellField& phi);

struct SurfaceGeometry {
  Vec2 normal = Vec2::Zero();
  double curvature = 0.0;
  bool degenerate = false;  // |grad phi| < 1e-8
};

Vec2 cell_gradient(const CellField& phi, int i, int j);
/// Curvature div(grad phi / |grad phi|) at a cell center, clamped to +-1/dx.
double cell_curvature(const CellField& phi, int i, int j);

/// Normal and curvature at x, bilinearly blended from cell-center values.
SurfaceGeometry normal_and_curvature(const CellField& phi, const Vec2& x);

struct NarrowbandSet {
  std::vector<int> cells;
  std::vector<int> index_of;  // cell -> position in `cells`, or -1
  double eps = 0.0;
  bool no_fluid = false;

  int size() const { return static_cast<int>(cells.size()); }
};

/// eps = 3 max|u| dt, floored at 3 dx.
double narrowband_width(double max_speed, double dt, double dx);

/// Cells with |phi_star| < max(eps, 3 dx).
NarrowbandSet select_narrowband(const CellField& phi_star, double eps);

/// Carries volume targets across topology changes. Components are matched
/// through overlapping fluid cells: merged parents sum their targets, a split
/// parent divides its target in proportion to the children's current volumes,
/// and a component with no parent takes its current volume. With attribution
/// maps, a component without overlap first joins the component of the other
/// state that owns its cells (every owner with at least a quarter of the
/// leading vote count), so vanishing slivers and slivers that
/// appear inside another component's region keep the total unchanged.
std::vector<double> update_component_targets(const ComponentLabels& prev,
                                             const std::vector<double>& prev_targets,
                                             const ComponentLabels& next,
                                             const std::vector<double>& next_volumes,
                                             const std::vector<int>* prev_attribution = nullptr,
                                             const std::vector<int>* next_attribution = nullptr);

/// Components whose smoothed tails meet (some pair of adjacent cells with
/// different attribution has H >= h_min on both sides) share one target,
/// split in proportion to their volumes. Tail volume that crosses between
/// neighbouring components is then not read as a loss by one and a gain by
/// the other.
std::vector<double> pool_touching_targets(const std::vector<double>& targets,
                                          const std::vector<double>& volumes, const CellField& phi,
                                          const std::vector<int>& attribution, double k,
                                          double h_min = 0.1);

}  // namespace pfsim
