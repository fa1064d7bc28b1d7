#include "pfsim/fluid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "pfsim/error.hpp"
#include "pfsim/levelset.hpp"
#include "pfsim/sparse.hpp"

namespace pfsim {

void FluidParams::validate() const {
  if (!(rho_l > rho_a) || rho_a < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "need rho_l > rho_a >= 0");
  }
  if (gamma < 0.0) throw Error(ErrorCode::InvalidArgument, "surface tension must be >= 0");
}

double smoothed_delta(double phi, double eps) {
  if (std::abs(phi) >= eps) return 0.0;
  return (1.0 + std::cos(std::numbers::pi * phi / eps)) / (2.0 * eps);
}

namespace {

// Solves the band-restricted Helmholtz system for one face component.
// Row f: u_f / (dt^2 gamma delta_f) + sum_nbr (u_f - u_n) / dx^2 = rhs_f / (dt^2 gamma delta_f).
void helmholtz_component(std::vector<double>& out, int cols, int rows,
                         const std::vector<double>& delta, const std::vector<double>& rhs,
                         const std::vector<char>& in_band, double dt, double gamma, double dx,
                         const SolverTols& tols) {
  std::vector<int> index(out.size(), -1);
  int n = 0;
  for (size_t f = 0; f < out.size(); ++f) {
    if (in_band[f]) index[f] = n++;
  }
  if (n == 0) return;
  SparseSym A(n);
  A.reserve(5 * static_cast<size_t>(n));
  VecX b(n);
  const double inv_dx2 = 1.0 / (dx * dx);
  for (int j = 0; j < rows; ++j) {
    for (int i = 0; i < cols; ++i) {
      const int f = j * cols + i;
      const int r = index[f];
      if (r < 0) continue;
      const double s = 1.0 / (dt * dt * gamma * delta[f]);
      A.add(r, r, s);
      b[r] = rhs[f] * s;
      const int ni[4] = {i - 1, i + 1, i, i};
      const int nj[4] = {j, j, j - 1, j + 1};
      for (int q = 0; q < 4; ++q) {
        if (ni[q] < 0 || nj[q] < 0 || ni[q] >= cols || nj[q] >= rows) continue;
        const int c = index[nj[q] * cols + ni[q]];
        if (c < 0) continue;
        A.add(r, r, inv_dx2);
        A.add(r, c, -inv_dx2);
      }
    }
  }
  CgResult res;
  try {
    res = cg_solve(A.build(), b, tols.poisson_rel_tol * 1e-2, tols.poisson_max_iters,
                   Preconditioner::Jacobi);
  } catch (const NotConvergedError& e) {
    throw Error(ErrorCode::SolverDiverged, std::string("surface tension solve: ") + e.what());
  }
  for (size_t f = 0; f < out.size(); ++f) {
    if (index[f] >= 0) out[f] = res.x[index[f]];
  }
}

}  // namespace

FaceField apply_forces(const FaceField& u, const CellField& phi, const FluidParams& p, double dt,
                       const SolverTols& tols) {
  const GridDesc& g = u.desc();
  FaceField out = u;
  for (double& a : out.u_data()) a += dt * p.g.x();
  for (double& a : out.v_data()) a += dt * p.g.y();
  if (p.gamma == 0.0) return out;

  const double eps = p.band(g.dx);
  const int nxu = g.nx + 1, nyu = g.ny;
  const int nxv = g.nx, nyv = g.ny + 1;

  std::vector<double> du(out.u_size(), 0.0), dv(out.v_size(), 0.0);
  std::vector<char> bu(out.u_size(), 0), bv(out.v_size(), 0);
  std::vector<double> ru = out.u_data(), rv = out.v_data();

  // Interior x-faces.
  for (int j = 0; j < nyu; ++j) {
    for (int i = 1; i < nxu - 1; ++i) {
      const int f = j * nxu + i;
      const double ph = 0.5 * (phi(i - 1, j) + phi(i, j));
      if (std::abs(ph) >= eps) continue;
      const SurfaceGeometry geo = normal_and_curvature(phi, g.xface_center(i, j));
      const double d = smoothed_delta(ph, eps);
      if (geo.degenerate || d <= 0.0) continue;
      bu[f] = 1;
      du[f] = d;
      ru[f] += dt * (-p.gamma * d * geo.curvature * geo.normal.x());
    }
  }
  for (int j = 1; j < nyv - 1; ++j) {
    for (int i = 0; i < nxv; ++i) {
      const int f = j * nxv + i;
      const double ph = 0.5 * (phi(i, j - 1) + phi(i, j));
      if (std::abs(ph) >= eps) continue;
      const SurfaceGeometry geo = normal_and_curvature(phi, g.yface_center(i, j));
      const double d = smoothed_delta(ph, eps);
      if (geo.degenerate || d <= 0.0) continue;
      bv[f] = 1;
      dv[f] = d;
      rv[f] += dt * (-p.gamma * d * geo.curvature * geo.normal.y());
    }
  }
  helmholtz_component(out.u_data(), nxu, nyu, du, ru, bu, dt, p.gamma, g.dx, tols);
  helmholtz_component(out.v_data(), nxv, nyv, dv, rv, bv, dt, p.gamma, g.dx, tols);
  return out;
}

ProjectResult project(const FaceField& u_in, const CellField& phi, const FaceConstraints& bc,
                      double dt, double rho, const SolverTols& tols) {
  (void)dt;
  (void)rho;  // the solve is carried out for q = dt p / rho
  const GridDesc& g = u_in.desc();
  ProjectResult res;
  res.u = u_in;
  const int ncell = g.cell_count();
  std::vector<int> index(ncell, -1);
  std::vector<int> fluid;
  for (int c = 0; c < ncell; ++c) {
    if (phi[c] < 0.0) {
      index[c] = static_cast<int>(fluid.size());
      fluid.push_back(c);
    }
  }
  if (fluid.empty()) {
    res.no_fluid = true;
    return res;
  }

  FaceField& u = res.u;
  // Neumann faces: domain walls plus prescribed faces.
  std::vector<char> nu(u.u_size(), 0), nv(u.v_size(), 0);
  for (int j = 0; j < g.ny; ++j) {
    nu[j * (g.nx + 1)] = nu[j * (g.nx + 1) + g.nx] = 1;
    u.u(0, j) = u.u(g.nx, j) = 0.0;
  }
  for (int i = 0; i < g.nx; ++i) {
    nv[i] = nv[g.ny * g.nx + i] = 1;
    u.v(i, 0) = u.v(i, g.ny) = 0.0;
  }
  for (const FaceConstraint& f : bc) {
    if (f.axis == Axis::X) {
      nu[f.j * (g.nx + 1) + f.i] = 1;
      u.u(f.i, f.j) = f.value;
    } else {
      nv[f.j * g.nx + f.i] = 1;
      u.v(f.i, f.j) = f.value;
    }
  }

  const CellField div = divergence(u);
  const int n = static_cast<int>(fluid.size());
  SparseSym A(n);
  A.reserve(5 * static_cast<size_t>(n));
  VecX b(n);
  std::vector<char> has_dirichlet(n, 0);
  for (int r = 0; r < n; ++r) {
    const int c = fluid[r];
    const int i = c % g.nx, j = c / g.nx;
    b[r] = -g.dx * g.dx * div[c];
    struct Nb {
      bool neumann;
      int ci, cj;
    };
    const Nb nbs[4] = {{nu[j * (g.nx + 1) + i] != 0, i - 1, j},
                       {nu[j * (g.nx + 1) + i + 1] != 0, i + 1, j},
                       {nv[j * g.nx + i] != 0, i, j - 1},
                       {nv[(j + 1) * g.nx + i] != 0, i, j + 1}};
    for (const Nb& nb : nbs) {
      if (nb.neumann) continue;
      A.add(r, r, 1.0);
      const int q = index[g.cell_index(nb.ci, nb.cj)];
      if (q >= 0) {
        A.add(r, q, -1.0);
      } else {
        has_dirichlet[r] = 1;
      }
    }
  }

  // Fluid regions sealed off from air need a compatible right-hand side and a
  // pinned reference cell to make the system nonsingular.
  {
    const SpMat Atmp = A.build();
    std::vector<int> comp(n, -1);
    std::vector<int> stack;
    int ncomp = 0;
    for (int s = 0; s < n; ++s) {
      if (comp[s] >= 0) continue;
      std::vector<int> members;
      bool dirichlet = false;
      comp[s] = ncomp;
      stack.push_back(s);
      while (!stack.empty()) {
        const int r = stack.back();
        stack.pop_back();
        members.push_back(r);
        dirichlet = dirichlet || has_dirichlet[r];
        for (SpMat::InnerIterator it(Atmp, r); it; ++it) {
          const int q = static_cast<int>(it.row());
          if (q != r && comp[q] < 0) {
            comp[q] = ncomp;
            stack.push_back(q);
          }
        }
      }
      ++ncomp;
      if (!dirichlet) {
        double mean = 0.0;
        for (int r : members) mean += b[r];
        mean /= static_cast<double>(members.size());
        for (int r : members) b[r] -= mean;
        A.add(*std::min_element(members.begin(), members.end()),
              *std::min_element(members.begin(), members.end()), 1.0);
      }
    }
  }

  const double bnorm = b.norm();
  if (bnorm == 0.0) return res;
  // Residual target chosen so that max |div| <= rel_tol * max|u| / dx.
  const double umax = std::max(u.max_abs(), 1e-12);
  const double tol = std::min(1e-3, tols.poisson_rel_tol * umax * g.dx / bnorm);
  CgResult sol;
  try {
    sol = cg_solve(A.build(), b, tol, tols.poisson_max_iters, Preconditioner::IncompleteCholesky);
  } catch (const NotConvergedError& e) {
    throw Error(ErrorCode::SolverDiverged, std::string("pressure solve: ") + e.what());
  }
  res.iterations = sol.iterations;

  auto q_at = [&](int i, int j) {
    const int r = index[g.cell_index(i, j)];
    return r >= 0 ? sol.x[r] : 0.0;
  };
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 1; i < g.nx; ++i) {
      if (nu[j * (g.nx + 1) + i]) continue;
      if (index[g.cell_index(i - 1, j)] < 0 && index[g.cell_index(i, j)] < 0) continue;
      u.u(i, j) -= (q_at(i, j) - q_at(i - 1, j)) / g.dx;
    }
  }
  for (int j = 1; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      if (nv[j * g.nx + i]) continue;
      if (index[g.cell_index(i, j - 1)] < 0 && index[g.cell_index(i, j)] < 0) continue;
      u.v(i, j) -= (q_at(i, j) - q_at(i, j - 1)) / g.dx;
    }
  }
  return res;
}

namespace {

Vec2 backtrace(const FaceField& carrier, const Vec2& x, double dt, const GridDesc& g) {
  const Vec2 lo = g.origin;
  const Vec2 hi = g.origin + g.extent();
  auto clamp = [&](const Vec2& p) { return Vec2(std::clamp(p.x(), lo.x(), hi.x()), std::clamp(p.y(), lo.y(), hi.y())); };
  const Vec2 mid = clamp(x - 0.5 * dt * face_interp(carrier, x));
  return clamp(x - dt * face_interp(carrier, mid));
}

}  // namespace

CellField advect_semilagrangian(const FaceField& carrier, const CellField& field, double dt) {
  const GridDesc& g = field.desc();
  CellField out(g);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      out(i, j) = bilinear_cell_interp(field, backtrace(carrier, g.cell_center(i, j), dt, g));
    }
  }
  return out;
}

FaceField advect_semilagrangian(const FaceField& carrier, const FaceField& field, double dt) {
  const GridDesc& g = field.desc();
  FaceField out(g);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i <= g.nx; ++i) {
      out.u(i, j) = interp_u(field, backtrace(carrier, g.xface_center(i, j), dt, g));
    }
  }
  for (int j = 0; j <= g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      out.v(i, j) = interp_v(field, backtrace(carrier, g.yface_center(i, j), dt, g));
    }
  }
  return out;
}

FaceMask fluid_face_mask(const CellField& phi) {
  const GridDesc& g = phi.desc();
  FaceMask m;
  m.u.assign(static_cast<size_t>(g.nx + 1) * g.ny, 0);
  m.v.assign(static_cast<size_t>(g.nx) * (g.ny + 1), 0);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      if (phi(i, j) >= 0.0) continue;
      m.u[j * (g.nx + 1) + i] = m.u[j * (g.nx + 1) + i + 1] = 1;
      m.v[j * g.nx + i] = m.v[(j + 1) * g.nx + i] = 1;
    }
  }
  return m;
}

namespace {

void extrapolate_component(std::vector<double>& data, std::vector<char> valid, int cols, int rows,
                           int layers) {
  std::vector<int> frontier;
  std::vector<double> values;
  for (int layer = 0; layer < layers; ++layer) {
    frontier.clear();
    values.clear();
    for (int j = 0; j < rows; ++j) {
      for (int i = 0; i < cols; ++i) {
        const int f = j * cols + i;
        if (valid[f]) continue;
        double sum = 0.0;
        int cnt = 0;
        const int ni[4] = {i - 1, i + 1, i, i};
        const int nj[4] = {j, j, j - 1, j + 1};
        for (int q = 0; q < 4; ++q) {
          if (ni[q] < 0 || nj[q] < 0 || ni[q] >= cols || nj[q] >= rows) continue;
          const int n = nj[q] * cols + ni[q];
          if (valid[n]) {
            sum += data[n];
            ++cnt;
          }
        }
        if (cnt > 0) {
          frontier.push_back(f);
          values.push_back(sum / cnt);
        }
      }
    }
    if (frontier.empty()) break;
    for (size_t k = 0; k < frontier.size(); ++k) {
      data[frontier[k]] = values[k];
      valid[frontier[k]] = 1;
    }
  }
  for (size_t f = 0; f < data.size(); ++f) {
    if (!valid[f]) data[f] = 0.0;
  }
}

}  // namespace

FaceField extrapolate_velocity(const FaceField& u, const FaceMask& valid, int layers) {
  const GridDesc& g = u.desc();
  FaceField out = u;
  const bool any = std::any_of(valid.u.begin(), valid.u.end(), [](char c) { return c != 0; }) ||
                   std::any_of(valid.v.begin(), valid.v.end(), [](char c) { return c != 0; });
  if (!any) return out;
  extrapolate_component(out.u_data(), valid.u, g.nx + 1, g.ny, layers);
  extrapolate_component(out.v_data(), valid.v, g.nx, g.ny + 1, layers);
  // Walls only carry what the projection put there.
  for (int j = 0; j < g.ny; ++j) {
    if (!valid.u[j * (g.nx + 1)]) out.u(0, j) = 0.0;
    if (!valid.u[j * (g.nx + 1) + g.nx]) out.u(g.nx, j) = 0.0;
  }
  for (int i = 0; i < g.nx; ++i) {
    if (!valid.v[i]) out.v(i, 0) = 0.0;
    if (!valid.v[g.ny * g.nx + i]) out.v(i, g.ny) = 0.0;
  }
  return out;
}

FaceField extrapolate_velocity(const FaceField& u, const CellField& phi, int layers) {
  return extrapolate_velocity(u, fluid_face_mask(phi), layers);
}

double cfl_dt(double max_speed, double cfl, double dx, const FluidParams& p) {
  double dt = cfl * dx / std::max(max_speed, 1e-6);
  if (p.gamma > 0.0) {
    dt = std::min(dt, std::sqrt(p.rho_l * dx * dx * dx / (2.0 * std::numbers::pi * p.gamma)));
  }
  return dt;
}

double cfl_dt(const FaceField& u, double cfl, const FluidParams& p) {
  return cfl_dt(u.max_abs(), cfl, u.desc().dx, p);
}

}  // namespace pfsim
