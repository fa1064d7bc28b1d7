#include "pfsim/velocity_correction.hpp"

#include <algorithm>
#include <cmath>

namespace pfsim {

namespace {

double box_distance_inf(const Vec2& p, const Vec2& lo, const Vec2& hi) {
  const double dx = std::max({lo.x() - p.x(), 0.0, p.x() - hi.x()});
  const double dy = std::max({lo.y() - p.y(), 0.0, p.y() - hi.y()});
  return std::max(dx, dy);
}

bool separates_fluid(const CellField& phi, const FaceRef& f) {
  const GridDesc& g = phi.desc();
  if (f.axis == Axis::X) {
    if (f.i <= 0 || f.i >= g.nx || f.j < 0 || f.j >= g.ny) return false;
    return (phi(f.i - 1, f.j) < 0.0) != (phi(f.i, f.j) < 0.0);
  }
  if (f.j <= 0 || f.j >= g.ny || f.i < 0 || f.i >= g.nx) return false;
  return (phi(f.i, f.j - 1) < 0.0) != (phi(f.i, f.j) < 0.0);
}

}  // namespace

std::vector<FaceRef> detect_bc_faces(const std::vector<PrimitivePair>& pairs, const CellField& phi,
                                     const std::vector<Vec2>& x, double dhat) {
  const GridDesc& g = phi.desc();
  std::vector<char> seen_u((g.nx + 1) * g.ny, 0), seen_v(g.nx * (g.ny + 1), 0);
  std::vector<FaceRef> faces;
  const int reach = 2 + static_cast<int>(std::ceil(dhat / g.dx));
  for (const PrimitivePair& pair : pairs) {
    const Vec2& xv = x[pair.vertex];
    if (!(live_distance(phi, xv, pair.scheme) < dhat)) continue;
    const auto [i0, j0] = dual_cell_of(g, xv);
    const Vec2 lo = g.cell_center(i0, j0);
    const Vec2 hi = g.cell_center(i0 + 1, j0 + 1);
    for (int j = j0 - reach; j <= j0 + reach + 1; ++j) {
      for (int i = i0 - reach; i <= i0 + reach + 1; ++i) {
        if (i >= 0 && i <= g.nx && j >= 0 && j < g.ny) {
          const FaceRef f{Axis::X, i, j};
          const int k = j * (g.nx + 1) + i;
          if (!seen_u[k] && box_distance_inf(g.xface_center(i, j), lo, hi) <= dhat &&
              separates_fluid(phi, f)) {
            seen_u[k] = 1;
            faces.push_back(f);
          }
        }
        if (i >= 0 && i < g.nx && j >= 0 && j <= g.ny) {
          const FaceRef f{Axis::Y, i, j};
          const int k = j * g.nx + i;
          if (!seen_v[k] && box_distance_inf(g.yface_center(i, j), lo, hi) <= dhat &&
              separates_fluid(phi, f)) {
            seen_v[k] = 1;
            faces.push_back(f);
          }
        }
      }
    }
  }
  return faces;
}

double clipped_length(const Vec2& a, const Vec2& b, const Vec2& lo, const Vec2& hi) {
  const Vec2 d = b - a;
  double t0 = 0.0, t1 = 1.0;
  for (int ax = 0; ax < 2; ++ax) {
    const double p[2] = {-d[ax], d[ax]};
    const double q[2] = {a[ax] - lo[ax], hi[ax] - a[ax]};
    for (int s = 0; s < 2; ++s) {
      if (p[s] == 0.0) {
        if (q[s] < 0.0) return 0.0;
        continue;
      }
      const double r = q[s] / p[s];
      if (p[s] < 0.0) {
        t0 = std::max(t0, r);
      } else {
        t1 = std::min(t1, r);
      }
    }
  }
  return t1 > t0 ? (t1 - t0) * d.norm() : 0.0;
}

SolidBCSet build_weights(const std::vector<FaceRef>& faces, const SolidState& solid,
                         const std::vector<Vec2>& x, const GridDesc& g, double dhat) {
  SolidBCSet out;
  const int nv = static_cast<int>(x.size());
  std::vector<int> degree(nv, 0);
  for (const auto& e : solid.edges) {
    ++degree[e[0]];
    ++degree[e[1]];
  }
  const Vec2 half(dhat, dhat);
  const double nominal = g.dx * 1e-2;
  for (const FaceRef& f : faces) {
    const Vec2 c = f.axis == Axis::X ? g.xface_center(f.i, f.j) : g.yface_center(f.i, f.j);
    const Vec2 lo = c - half, hi = c + half;
    std::vector<double> w(nv, 0.0);
    for (const auto& e : solid.edges) {
      const double len = clipped_length(x[e[0]], x[e[1]], lo, hi);
      w[e[0]] += 0.5 * len;
      w[e[1]] += 0.5 * len;
    }
    for (int v = 0; v < nv; ++v) {
      if (degree[v] == 0 && (x[v].array() >= lo.array()).all() &&
          (x[v].array() <= hi.array()).all()) {
        w[v] += nominal;
      }
    }
    double total = 0.0;
    for (double wv : w) total += wv;
    if (!(total > 0.0)) continue;
    std::vector<std::pair<int, double>> row;
    for (int v = 0; v < nv; ++v) {
      if (w[v] > 0.0) row.emplace_back(v, w[v] / total);
    }
    out.faces.push_back(f);
    out.weights.push_back(std::move(row));
  }
  return out;
}

FaceConstraints bc_constraints(const SolidBCSet& bc, const std::vector<Vec2>& v) {
  FaceConstraints out;
  out.reserve(bc.faces.size());
  for (int r = 0; r < bc.size(); ++r) {
    Vec2 wv = Vec2::Zero();
    for (const auto& [vert, w] : bc.weights[r]) wv += w * v[vert];
    const FaceRef& f = bc.faces[r];
    out.push_back({f.axis, f.i, f.j, f.axis == Axis::X ? wv.x() : wv.y()});
  }
  return out;
}

ProjectResult correct_fluid_velocities(const FaceField& u_star, const CellField& phi,
                                       const SolidBCSet& bc, const std::vector<Vec2>& v,
                                       double dt, double rho, const SolverTols& tols) {
  return project(u_star, phi, bc_constraints(bc, v), dt, rho, tols);
}

}  // namespace pfsim
