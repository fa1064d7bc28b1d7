#pragma once

#include <utility>
#include <vector>

#include "pfsim/contact.hpp"
#include "pfsim/fluid.hpp"
#include "pfsim/solid.hpp"

namespace pfsim {

struct FaceRef {
  Axis axis = Axis::X;
  int i = 0;
  int j = 0;
  bool operator==(const FaceRef& o) const { return axis == o.axis && i == o.i && j == o.j; }
};

struct SolidBCSet {
  std::vector<FaceRef> faces;
  /// Per face: (vertex, weight) with nonnegative weights summing to 1.
  std::vector<std::vector<std::pair<int, double>>> weights;

  int size() const { return static_cast<int>(faces.size()); }
};

/// Faces separating fluid and non-fluid cells whose centers lie within
/// infinity-norm dhat of the dual cell of a pair with d < dhat.
std::vector<FaceRef> detect_bc_faces(const std::vector<PrimitivePair>& pairs, const CellField& phi,
                                     const std::vector<Vec2>& x, double dhat);

/// Length of the part of segment [a, b] inside the axis-aligned box
/// [lo, hi] (Liang-Barsky clipping).
double clipped_length(const Vec2& a, const Vec2& b, const Vec2& lo, const Vec2& hi);

/// Each face gets a box of half-width dhat; every solid edge contributes half
/// of its clipped length to each endpoint, vertices without edges contribute
/// dx 1e-2 when inside. Rows are normalized; empty rows are dropped.
SolidBCSet build_weights(const std::vector<FaceRef>& faces, const SolidState& solid,
                         const std::vector<Vec2>& x, const GridDesc& g, double dhat);

/// Normal component of W v on every flagged face.
FaceConstraints bc_constraints(const SolidBCSet& bc, const std::vector<Vec2>& v);

/// Imposes the flagged face values and projects with them as Neumann faces.
ProjectResult correct_fluid_velocities(const FaceField& u_star, const CellField& phi,
                                       const SolidBCSet& bc, const std::vector<Vec2>& v,
                                       double dt, double rho, const SolverTols& tols = {});

}  // namespace pfsim
