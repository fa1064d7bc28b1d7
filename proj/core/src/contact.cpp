#include "pfsim/contact.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pfsim/error.hpp"

namespace pfsim {

void ContactParams::validate() const {
  if (!(dhat > 0.0)) throw Error(ErrorCode::InvalidArgument, "dhat must be positive");
  if (!(kappa > 0.0)) throw Error(ErrorCode::InvalidArgument, "barrier stiffness must be positive");
}

ContactParams ContactParams::defaults(double dx, double rho_l, InterpScheme scheme) {
  ContactParams p;
  p.dhat = 0.5 * dx;
  p.kappa = 1e3 * (rho_l * dx * dx) * dx * dx;
  p.scheme = scheme;
  return p;
}

std::array<int, 2> dual_cell_of(const GridDesc& g, const Vec2& x) {
  const Vec2 s = (x - g.origin) / g.dx - Vec2(0.5, 0.5);
  const int i = std::clamp(static_cast<int>(std::floor(s.x())), 0, g.nx - 2);
  const int j = std::clamp(static_cast<int>(std::floor(s.y())), 0, g.ny - 2);
  return {i, j};
}

DistanceEval evaluate_distance(const CellField& phi, const Vec2& x, const PrimitivePair& pair) {
  const GridDesc& g = phi.desc();
  DistanceEval out;
  if (pair.scheme == InterpScheme::Quadratic) {
    out.stencil = quadratic_stencil(g, x);
    for (int k = 0; k < out.stencil.count; ++k) {
      const double v = phi[out.stencil.cells[k]];
      out.d += out.stencil.weights[k] * v;
      out.grad_x += out.stencil.grads[k] * v;
    }
    return out;
  }
  const int i = pair.base_i, j = pair.base_j;
  const Vec2 c1 = g.cell_center(i, j);
  const double fx = (x.x() - c1.x()) / g.dx;
  const double fy = (x.y() - c1.y()) / g.dx;
  const double p1 = phi(i, j), p2 = phi(i + 1, j), p3 = phi(i, j + 1), p4 = phi(i + 1, j + 1);
  InterpStencil& st = out.stencil;
  st.count = 4;
  st.cells = {g.cell_index(i, j), g.cell_index(i + 1, j), g.cell_index(i, j + 1),
              g.cell_index(i + 1, j + 1)};
  st.weights = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  out.d = p1 * st.weights[0] + p2 * st.weights[1] + p3 * st.weights[2] + p4 * st.weights[3];
  out.grad_x = Vec2(((p2 - p1) * (1 - fy) + (p4 - p3) * fy) / g.dx,
                    ((p3 - p1) * (1 - fx) + (p4 - p2) * fx) / g.dx);
  return out;
}

double signed_distance(const CellField& phi, const Vec2& x, const PrimitivePair& pair) {
  return evaluate_distance(phi, x, pair).d;
}

double live_distance(const CellField& phi, const Vec2& x, InterpScheme scheme) {
  if (scheme == InterpScheme::Quadratic) return quadratic_cell_interp(phi, x);
  return bilinear_cell_interp(phi, x);
}

namespace {
void check_positive(double d) {
  if (!(d > 0.0)) {
    throw Error(ErrorCode::NonPositiveDistance, "barrier evaluated at d = " + std::to_string(d));
  }
}
}  // namespace

double barrier(double d, double dhat) {
  check_positive(d);
  if (d >= dhat) return 0.0;
  const double t = d / dhat;
  return -(t - 1.0) * (t - 1.0) * std::log(t);
}

double barrier_d1(double d, double dhat) {
  check_positive(d);
  if (d >= dhat) return 0.0;
  const double t = d / dhat;
  return (-2.0 * (t - 1.0) * std::log(t) - (t - 1.0) * (t - 1.0) / t) / dhat;
}

double barrier_d2(double d, double dhat) {
  check_positive(d);
  if (d >= dhat) return 0.0;
  const double t = d / dhat;
  return (-2.0 * std::log(t) - 4.0 * (t - 1.0) / t + (t - 1.0) * (t - 1.0) / (t * t)) /
         (dhat * dhat);
}

BarrierEval barrier_energy_grad_hess(const std::vector<PrimitivePair>& pairs, const CellField& phi,
                                     const std::vector<Vec2>& x, const ContactParams& params) {
  BarrierEval out;
  out.terms.resize(pairs.size());
  for (size_t p = 0; p < pairs.size(); ++p) {
    PairTerm& t = out.terms[p];
    t.eval = evaluate_distance(phi, x[pairs[p].vertex], pairs[p]);
    const double d = t.eval.d;
    t.b = barrier(d, params.dhat);
    t.b1 = barrier_d1(d, params.dhat);
    t.b2 = std::max(barrier_d2(d, params.dhat), 0.0);
    out.energy += params.kappa * t.b;
  }
  return out;
}

Eigen::MatrixXd pair_hessian_block(const PairTerm& term, double kappa) {
  const int n = term.eval.stencil.count;
  Eigen::VectorXd g(n + 2);
  for (int k = 0; k < n; ++k) g[k] = term.eval.stencil.weights[k];
  g[n] = term.eval.grad_x.x();
  g[n + 1] = term.eval.grad_x.y();
  return kappa * term.b2 * g * g.transpose();
}

std::vector<PrimitivePair> collect_pairs(const CellField& phi_ref, const std::vector<Vec2>& x_ref,
                                         const ContactParams& params) {
  std::vector<PrimitivePair> pairs;
  const GridDesc& g = phi_ref.desc();
  for (int v = 0; v < static_cast<int>(x_ref.size()); ++v) {
    PrimitivePair p;
    p.vertex = v;
    p.scheme = params.scheme;
    const auto [i, j] = dual_cell_of(g, x_ref[v]);
    p.base_i = i;
    p.base_j = j;
    p.d = signed_distance(phi_ref, x_ref[v], p);
    if (p.d < params.dhat) pairs.push_back(p);
  }
  return pairs;
}

int rebase_at_start(std::vector<PrimitivePair>& pairs, const CellField& phi_start,
                    const std::vector<Vec2>& x_start) {
  int moved = 0;
  for (PrimitivePair& p : pairs) {
    if (p.scheme != InterpScheme::Linear) continue;
    const Vec2& x = x_start[p.vertex];
    if (signed_distance(phi_start, x, p) > 0.0) continue;
    const auto [i, j] = dual_cell_of(phi_start.desc(), x);
    if (i == p.base_i && j == p.base_j) continue;
    p.base_i = i;
    p.base_j = j;
    ++moved;
  }
  return moved;
}

std::array<double, 2> segment_closest_params(const Vec2& p0, const Vec2& p1, const Vec2& q0,
                                             const Vec2& q1) {
  const Vec2 d1 = p1 - p0;
  const Vec2 d2 = q1 - q0;
  const Vec2 r = p0 - q0;
  const double a = d1.squaredNorm();
  const double e = d2.squaredNorm();
  const double f = d2.dot(r);
  constexpr double tiny = 1e-24;
  double s = 0.0, t = 0.0;
  if (a <= tiny && e <= tiny) return {0.0, 0.0};
  if (a <= tiny) {
    t = std::clamp(f / e, 0.0, 1.0);
    return {0.0, t};
  }
  const double c = d1.dot(r);
  if (e <= tiny) {
    s = std::clamp(-c / a, 0.0, 1.0);
    return {s, 0.0};
  }
  const double b = d1.dot(d2);
  const double denom = a * e - b * b;
  s = denom > tiny * a * e ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
  t = (b * s + f) / e;
  if (t < 0.0) {
    t = 0.0;
    s = std::clamp(-c / a, 0.0, 1.0);
  } else if (t > 1.0) {
    t = 1.0;
    s = std::clamp((b - c) / a, 0.0, 1.0);
  }
  return {s, t};
}

CcdResult ccd_filter(const std::vector<PrimitivePair>& pairs, const CellField& phi,
                     const std::vector<Vec2>& x, const CellField& phi_full,
                     const std::vector<Vec2>& x_full) {
  CcdResult res;
  constexpr double degenerate_len = 1e-12;
  for (const PrimitivePair& pair : pairs) {
    const Vec2& xi = x[pair.vertex];
    const Vec2& xp = x_full[pair.vertex];
    const DistanceEval after = evaluate_distance(phi_full, xp, pair);
    if (after.d >= 0.0) continue;
    ++res.flagged;
    const DistanceEval before = evaluate_distance(phi, xi, pair);
    const Vec2 xphi = xi - before.d * before.grad_x / std::max(before.grad_x.norm(), 1e-8);
    const Vec2 xphi_p = xp - after.d * after.grad_x / std::max(after.grad_x.norm(), 1e-8);
    const Vec2 d1 = xp - xi;
    const Vec2 d2 = xphi_p - xphi;
    const double len = std::max(d1.norm(), d2.norm());
    const bool solid_point = d1.norm() <= std::max(degenerate_len, 1e-3 * len);
    const bool fluid_point = d2.norm() <= std::max(degenerate_len, 1e-3 * len);
    double t;
    if (solid_point && fluid_point) {
      // Both endpoints static: linear estimate of where the distance crosses zero.
      t = before.d > 0.0 ? before.d / (before.d - after.d) : 0.0;
    } else {
      const auto [gamma, beta] = segment_closest_params(xi, xp, xphi, xphi_p);
      if (solid_point) {
        t = beta;
      } else if (fluid_point) {
        t = gamma;
      } else {
        t = std::min(gamma, beta);
      }
      if (t < kCcdMinStep) {
        // The shortest path touches an endpoint (or the paths are parallel),
        // which says nothing about timing; use the time at which the two
        // moving points are closest instead.
        const Vec2 r0 = xi - xphi;
        const Vec2 r1 = d1 - d2;
        if (r1.squaredNorm() > 0.0) t = std::clamp(-r0.dot(r1) / r1.squaredNorm(), 0.0, 1.0);
      }
    }
    res.t_bound = std::min(res.t_bound, t);
  }
  if (res.t_bound < kCcdMinStep) {
    res.t_bound = kCcdMinStep;
    res.floored = true;
  }
  return res;
}

}  // namespace pfsim
