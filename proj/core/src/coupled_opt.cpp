#include "pfsim/coupled_opt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pfsim/error.hpp"
#include "pfsim/levelset.hpp"

namespace pfsim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<int> unknown_index_map(const OptProblem& prob) {
  std::vector<int> map(prob.phi_star.size(), -1);
  for (int k = 0; k < prob.phi_count(); ++k) map[prob.unknowns[k]] = k;
  return map;
}

int solid_dof(const OptProblem& prob, int vertex) {
  if (prob.solid == nullptr) return -1;
  const int d = prob.dofs.dof_of_vertex[vertex];
  return d < 0 ? -1 : prob.phi_count() + d;
}

OptIterate apply_step(const OptProblem& prob, const OptIterate& it, const VecX& delta,
                      double alpha) {
  OptIterate out = it;
  for (int k = 0; k < prob.phi_count(); ++k) out.phi[prob.unknowns[k]] += alpha * delta[k];
  if (prob.solid != nullptr) {
    for (int v : prob.dofs.free_vertices) {
      const int d = solid_dof(prob, v);
      out.x[v] += alpha * Vec2(delta[d], delta[d + 1]);
    }
  }
  return out;
}

double merit(const OptProblem& prob, const OptIterate& it, const VecX& fluid_mass,
             const std::vector<PrimitivePair>& pairs, const std::vector<int>& rows,
             double rho_m, const OptParams& p) {
  const double f = objective_value(prob, it, fluid_mass, pairs, p);
  if (!std::isfinite(f)) return kInf;
  double viol = 0.0;
  if (!rows.empty()) {
    const auto h = volume_residuals(it.phi, prob.attribution, prob.targets, p.sharpness);
    for (int c : rows) viol += std::abs(h[c]);
  }
  return f + rho_m * viol;
}

}  // namespace

std::vector<double> volume_residuals(const CellField& phi, const std::vector<int>& attribution,
                                     const std::vector<double>& targets, double k) {
  std::vector<double> h(targets.size(), 0.0);
  const double vc = phi.desc().cell_volume();
  for (int c = 0; c < phi.size(); ++c) {
    const int comp = attribution[c];
    if (comp >= 0 && comp < static_cast<int>(h.size())) h[comp] += heaviside(phi[c], k) * vc;
  }
  for (size_t c = 0; c < h.size(); ++c) h[c] -= targets[c];
  return h;
}

double objective_value(const OptProblem& prob, const OptIterate& it, const VecX& fluid_mass,
                       const std::vector<PrimitivePair>& pairs, const OptParams& p) {
  double f = 0.0;
  for (int k = 0; k < prob.phi_count(); ++k) {
    const int c = prob.unknowns[k];
    const double r = it.phi[c] - prob.phi_star[c];
    f += 0.5 * fluid_mass[k] * r * r;
  }
  if (prob.solid != nullptr && !prob.solid->empty()) {
    for (int v : prob.dofs.free_vertices) {
      f += 0.5 * prob.solid->mass[v] * (it.x[v] - prob.x_star[v]).squaredNorm();
    }
    f += p.dt * p.dt * elastic_energy(*prob.solid, it.x, p.elastic);
  }
  for (const PrimitivePair& pair : pairs) {
    const double d = signed_distance(it.phi, it.x[pair.vertex], pair);
    if (!(d > 0.0)) return kInf;
    f += p.contact.kappa * barrier(d, p.contact.dhat);
  }
  return f;
}

Assembly assemble(const OptProblem& prob, const OptIterate& it,
                  const std::vector<PrimitivePair>& pairs, const OptParams& p) {
  const int nphi = prob.phi_count();
  const int n = prob.dof_count();
  const double vc = prob.phi_star.desc().cell_volume();
  Assembly a;
  a.gradient = VecX::Zero(n);
  a.fluid_mass = VecX::Zero(nphi);
  SparseSym H(n);

  for (int k = 0; k < nphi; ++k) {
    const int c = prob.unknowns[k];
    const double m = smoothed_density(it.phi[c], p.sharpness, p.rho_l, p.rho_a) * vc;
    const double r = it.phi[c] - prob.phi_star[c];
    a.fluid_mass[k] = m;
    a.objective += 0.5 * m * r * r;
    a.gradient[k] += m * r;
    H.add(k, k, m);
  }

  if (prob.solid != nullptr && !prob.solid->empty()) {
    const SolidState& s = *prob.solid;
    for (int v : prob.dofs.free_vertices) {
      const int d = solid_dof(prob, v);
      const Vec2 r = it.x[v] - prob.x_star[v];
      a.objective += 0.5 * s.mass[v] * r.squaredNorm();
      a.gradient[d] += s.mass[v] * r.x();
      a.gradient[d + 1] += s.mass[v] * r.y();
      H.add(d, d, s.mass[v]);
      H.add(d + 1, d + 1, s.mass[v]);
    }
    const double dt2 = p.dt * p.dt;
    const ElasticEval ev = elastic_eval(s, it.x, p.elastic, HessianMode::ProjectedPSD);
    a.objective += dt2 * ev.energy;
    for (int v : prob.dofs.free_vertices) {
      const int d = solid_dof(prob, v);
      a.gradient[d] += dt2 * ev.gradient[2 * v];
      a.gradient[d + 1] += dt2 * ev.gradient[2 * v + 1];
    }
    for (const auto& t : ev.hessian) {
      const int dr = solid_dof(prob, static_cast<int>(t.row()) / 2);
      const int dc = solid_dof(prob, static_cast<int>(t.col()) / 2);
      if (dr < 0 || dc < 0) continue;
      H.add(dr + static_cast<int>(t.row()) % 2, dc + static_cast<int>(t.col()) % 2,
            dt2 * t.value());
    }
  }

  if (!pairs.empty()) {
    const std::vector<int> umap = unknown_index_map(prob);
    const BarrierEval be = barrier_energy_grad_hess(pairs, it.phi, it.x, p.contact);
    a.objective += be.energy;
    for (size_t q = 0; q < pairs.size(); ++q) {
      const PairTerm& t = be.terms[q];
      const int sc = t.eval.stencil.count;
      std::vector<int> idx(sc + 2, -1);
      std::vector<double> gl(sc + 2);
      for (int k = 0; k < sc; ++k) {
        idx[k] = umap[t.eval.stencil.cells[k]];
        gl[k] = t.eval.stencil.weights[k];
      }
      const int d = solid_dof(prob, pairs[q].vertex);
      if (d >= 0) {
        idx[sc] = d;
        idx[sc + 1] = d + 1;
      }
      gl[sc] = t.eval.grad_x.x();
      gl[sc + 1] = t.eval.grad_x.y();
      const double k1 = p.contact.kappa * t.b1;
      const double k2 = p.contact.kappa * t.b2;
      for (int r = 0; r < sc + 2; ++r) {
        if (idx[r] < 0) continue;
        a.gradient[idx[r]] += k1 * gl[r];
        if (k2 == 0.0) continue;
        for (int c = 0; c < sc + 2; ++c) {
          if (idx[c] >= 0) H.add(idx[r], idx[c], k2 * gl[r] * gl[c]);
        }
      }
    }
  }
  a.H = H.build();

  std::vector<double> hall;
  if (p.volume_constraint && !prob.attribution.empty() && nphi > 0) {
    hall = volume_residuals(it.phi, prob.attribution, prob.targets, p.sharpness);
    const int ncomp = static_cast<int>(prob.targets.size());
    std::vector<std::vector<std::pair<int, double>>> rows(ncomp);
    for (int k = 0; k < nphi; ++k) {
      const int c = prob.unknowns[k];
      const int comp = prob.attribution[c];
      if (comp < 0 || comp >= ncomp) continue;
      const double jv = heaviside_prime(it.phi[c], p.sharpness) * vc;
      if (jv != 0.0) rows[comp].emplace_back(k, jv);
    }
    for (int c = 0; c < ncomp; ++c) {
      if (prob.targets[c] > 0.0 && !rows[c].empty()) a.row_component.push_back(c);
    }
    SparseSym J(static_cast<int>(a.row_component.size()), n);
    a.h = VecX(a.row_component.size());
    for (size_t r = 0; r < a.row_component.size(); ++r) {
      const int c = a.row_component[r];
      for (const auto& [k, v] : rows[c]) J.add(static_cast<int>(r), k, v);
      a.h[r] = hall[c];
    }
    a.J = J.build();
  } else {
    a.J = SpMat(0, n);
    a.h = VecX(0);
  }
  return a;
}

KktStep solve_kkt(const SpMat& H, const SpMat& J, const VecX& g, const VecX& h) {
  KktStep out;
  const VecX a = -g;
  const VecX b = -h;
  bool indefinite = false;
  try {
    KktSolution s = ldl_solve(H, J, a, b);
    if (!s.h_indefinite) {
      out.delta = std::move(s.primal);
      out.lambda = std::move(s.lambda);
      return out;
    }
    indefinite = true;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::SingularSystem) throw;
    indefinite = true;
  }
  const int n = static_cast<int>(H.rows());
  double trace = 0.0;
  for (int i = 0; i < n; ++i) trace += H.coeff(i, i);
  double mu = n > 0 && trace > 0.0 ? 1e-8 * trace / n : 1e-8;
  SpMat I(n, n);
  I.setIdentity();
  for (int retry = 1; retry <= 5 && indefinite; ++retry, mu *= 10.0) {
    try {
      KktSolution s = ldl_solve(SpMat(H + mu * I), J, a, b);
      if (s.h_indefinite) continue;
      out.delta = std::move(s.primal);
      out.lambda = std::move(s.lambda);
      out.mu = mu;
      out.retries = retry;
      return out;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::SingularSystem) throw;
    }
  }
  throw Error(ErrorCode::SingularSystem, "KKT system stayed indefinite after regularization");
}

NewtonResult newton_solve(const OptProblem& prob, const OptIterate& start, const OptParams& p) {
  if (!(p.dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "newton_solve needs dt > 0");
  NewtonResult res;
  NewtonStats& st = res.stats;
  st.used_line_search = p.line_search;
  st.used_ccd = p.ccd;
  OptIterate it = start;

  std::vector<PrimitivePair> active;
  for (PrimitivePair pair : prob.pairs) {
    pair.d = signed_distance(it.phi, it.x[pair.vertex], pair);
    if (pair.d > 0.0) {
      active.push_back(pair);
    } else {
      ++st.excluded_pairs;
    }
  }

  // Without line search a full step can leave the barrier's domain; such
  // pairs wait here until their distance is positive again.
  std::vector<PrimitivePair> outside;
  int floor_streak = 0;
  for (int iter = 0; iter < p.max_iters; ++iter) {
    if (!outside.empty()) {
      std::vector<PrimitivePair> still;
      for (PrimitivePair& pair : outside) {
        pair.d = signed_distance(it.phi, it.x[pair.vertex], pair);
        (pair.d > 0.0 ? active : still).push_back(pair);
      }
      outside = std::move(still);
    }
    const Assembly A = assemble(prob, it, active, p);
    const KktStep step = solve_kkt(A.H, A.J, A.gradient, A.h);
    st.iterations = iter + 1;
    res.lambda = step.lambda;
    const double dinf = step.delta.size() > 0 ? step.delta.lpNorm<Eigen::Infinity>() : 0.0;
    st.final_residual = dinf / p.dt;

    bool feasible = true;
    for (int r = 0; r < A.h.size(); ++r) {
      const int c = A.row_component[r];
      if (std::abs(A.h[r]) > p.volume_tol * prob.targets[c]) feasible = false;
    }
    if (st.final_residual < p.tol_v && feasible && outside.empty()) {
      st.converged = true;
      break;
    }

    double alpha = 1.0;
    if (p.ccd && !active.empty()) {
      const OptIterate full = apply_step(prob, it, step.delta, 1.0);
      const CcdResult ccd = ccd_filter(active, it.phi, it.x, full.phi, full.x);
      alpha = ccd.t_bound;
      floor_streak = ccd.floored ? floor_streak + 1 : 0;
      if (floor_streak >= 3) {
        throw Error(ErrorCode::StepFailed, "CCD step bound stuck at its floor");
      }
    }

    OptIterate trial;
    if (p.line_search) {
      const double lam = res.lambda.size() > 0 ? res.lambda.lpNorm<Eigen::Infinity>() : 0.0;
      const double rho_m = std::max(1.0, 2.0 * lam);
      const double m0 = merit(prob, it, A.fluid_mass, active, A.row_component, rho_m, p);
      double m = kInf;
      while (true) {
        trial = apply_step(prob, it, step.delta, alpha);
        m = merit(prob, trial, A.fluid_mass, active, A.row_component, rho_m, p);
        if (m <= m0) break;
        alpha *= 0.5;
        if (alpha < 1e-12) break;
      }
      if (!(m <= m0)) {
        st.line_search_stalled = true;
        break;
      }
      st.merits.push_back(m);
    } else {
      trial = apply_step(prob, it, step.delta, alpha);
      std::vector<PrimitivePair> kept;
      for (const PrimitivePair& pair : active) {
        if (signed_distance(trial.phi, trial.x[pair.vertex], pair) > 0.0) {
          kept.push_back(pair);
        } else {
          ++st.dropped_pairs;
          outside.push_back(pair);
        }
      }
      active = std::move(kept);
    }
    it = std::move(trial);
    st.alphas.push_back(alpha);
    st.final_step_size = alpha;
  }

  if (p.volume_constraint && !prob.attribution.empty()) {
    const auto h = volume_residuals(it.phi, prob.attribution, prob.targets, p.sharpness);
    for (size_t c = 0; c < h.size(); ++c) {
      if (prob.targets[c] > 0.0) {
        st.max_rel_volume_error = std::max(st.max_rel_volume_error, std::abs(h[c]) / prob.targets[c]);
      }
    }
  }
  st.min_pair_distance = kInf;
  for (const auto* set : {&active, &outside}) {
    for (const PrimitivePair& pair : *set) {
      st.min_pair_distance =
          std::min(st.min_pair_distance, signed_distance(it.phi, it.x[pair.vertex], pair));
    }
  }
  res.iterate = std::move(it);
  return res;
}

CellField volume_only_solve(const CellField& phi_star, const CellField& phi_start,
                            const std::vector<int>& unknowns, const std::vector<int>& attribution,
                            const std::vector<double>& targets, const OptParams& p,
                            NewtonStats* stats) {
  OptProblem prob;
  prob.phi_star = phi_star;
  prob.unknowns = unknowns;
  prob.attribution = attribution;
  prob.targets = targets;
  OptIterate start;
  start.phi = phi_star;
  for (int c : unknowns) start.phi[c] = phi_start[c];
  OptParams q = p;
  q.ccd = false;
  NewtonResult r = newton_solve(prob, start, q);
  if (stats != nullptr) *stats = r.stats;
  return std::move(r.iterate.phi);
}

}  // namespace pfsim
