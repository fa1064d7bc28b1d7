#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/SparseCore>

#include "pfsim/grid.hpp"

namespace pfsim {

struct ElasticParams {
  double k_stretch = 0.0;  // N/m per unit rest length
  double k_bend = 0.0;     // N m
};

/// Lagrangian codimensional solid in 2D: isolated points and polylines.
struct SolidState {
  std::vector<Vec2> x;
  std::vector<Vec2> v;
  std::vector<std::array<int, 2>> edges;
  std::vector<double> rest_len;
  std::vector<std::array<int, 3>> bend_triples;
  std::vector<double> rest_angle;
  std::vector<double> mass;
  std::vector<std::uint8_t> fixed;
  double damping = 0.0;

  int vertex_count() const { return static_cast<int>(x.size()); }
  bool empty() const { return x.empty(); }
  void validate() const;

  /// Fills rest_len and rest_angle from the current positions.
  void set_rest_state_from_current();
};

/// Maps free vertices to contiguous 2-dof blocks; pinned vertices map to -1.
struct SolidDofMap {
  std::vector<int> dof_of_vertex;  // first dof index, or -1
  std::vector<int> free_vertices;
  int dof_count() const { return 2 * static_cast<int>(free_vertices.size()); }
};

SolidDofMap make_dof_map(const SolidState& s);

/// x* = x + dt v + dt^2 g for free vertices; pinned vertices stay put.
std::vector<Vec2> predict_positions(const SolidState& s, const Vec2& gravity, double dt);

/// Signed turning angle from edge (a -> b) to edge (b -> c).
double turning_angle(const Vec2& a, const Vec2& b, const Vec2& c);

struct ElasticEval {
  double energy = 0.0;
  Eigen::VectorXd gradient;                  // 2 n entries, all vertices
  std::vector<Eigen::Triplet<double>> hessian;  // 2n x 2n, all vertices
  int degenerate_edges = 0;
};

enum class HessianMode { None, Exact, ProjectedPSD };

/// Stretch energy sum 1/2 k_s / l0 (|xi - xj| - l0)^2 plus bending sum k_b (theta - theta0)^2.
ElasticEval elastic_eval(const SolidState& s, const std::vector<Vec2>& x, const ElasticParams& p,
                         HessianMode mode = HessianMode::ProjectedPSD);

double elastic_energy(const SolidState& s, const std::vector<Vec2>& x, const ElasticParams& p);
Eigen::VectorXd elastic_gradient(const SolidState& s, const std::vector<Vec2>& x,
                                 const ElasticParams& p);

/// v = (x_new - x_old) / dt, scaled by max(0, 1 - damping dt).
std::vector<Vec2> correct_velocities(const std::vector<Vec2>& x_new, const std::vector<Vec2>& x_old,
                                     double dt, double damping);

/// Per-dof lumped masses over the free vertices (two entries per vertex).
Eigen::VectorXd lumped_mass_matrix(const SolidState& s, const SolidDofMap& map);

/// Vertex masses for a polyline with linear density rho_l: each edge's mass
/// rho_l * l0 is split half to each endpoint.
std::vector<double> polyline_masses(int vertex_count, const std::vector<std::array<int, 2>>& edges,
                                    const std::vector<double>& rest_len, double linear_density);

}  // namespace pfsim
