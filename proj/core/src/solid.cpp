#include "pfsim/solid.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "pfsim/error.hpp"

namespace pfsim {

void SolidState::validate() const {
  const size_t n = x.size();
  if (v.size() != n || mass.size() != n || fixed.size() != n) {
    throw Error(ErrorCode::InvalidArgument, "solid per-vertex arrays disagree in size");
  }
  if (rest_len.size() != edges.size() || rest_angle.size() != bend_triples.size()) {
    throw Error(ErrorCode::InvalidArgument, "solid rest arrays disagree in size");
  }
  for (const auto& e : edges) {
    if (e[0] < 0 || e[1] < 0 || e[0] >= static_cast<int>(n) || e[1] >= static_cast<int>(n) ||
        e[0] == e[1]) {
      throw Error(ErrorCode::InvalidArgument, "bad edge");
    }
  }
  for (const auto& t : bend_triples) {
    for (int k : t) {
      if (k < 0 || k >= static_cast<int>(n)) throw Error(ErrorCode::InvalidArgument, "bad triple");
    }
  }
  for (double l : rest_len) {
    if (!(l > 0.0)) throw Error(ErrorCode::InvalidArgument, "rest length must be positive");
  }
  for (double m : mass) {
    if (!(m > 0.0)) throw Error(ErrorCode::InvalidArgument, "vertex mass must be positive");
  }
  if (damping < 0.0) throw Error(ErrorCode::InvalidArgument, "damping must be nonnegative");
}

void SolidState::set_rest_state_from_current() {
  rest_len.resize(edges.size());
  for (size_t e = 0; e < edges.size(); ++e) rest_len[e] = (x[edges[e][1]] - x[edges[e][0]]).norm();
  rest_angle.resize(bend_triples.size());
  for (size_t t = 0; t < bend_triples.size(); ++t) {
    const auto& b = bend_triples[t];
    rest_angle[t] = turning_angle(x[b[0]], x[b[1]], x[b[2]]);
  }
}

SolidDofMap make_dof_map(const SolidState& s) {
  SolidDofMap m;
  m.dof_of_vertex.assign(s.x.size(), -1);
  for (int i = 0; i < s.vertex_count(); ++i) {
    if (!s.fixed[i]) {
      m.dof_of_vertex[i] = 2 * static_cast<int>(m.free_vertices.size());
      m.free_vertices.push_back(i);
    }
  }
  return m;
}

std::vector<Vec2> predict_positions(const SolidState& s, const Vec2& gravity, double dt) {
  std::vector<Vec2> out(s.x.size());
  for (size_t i = 0; i < s.x.size(); ++i) {
    out[i] = s.fixed[i] ? s.x[i] : Vec2(s.x[i] + dt * s.v[i] + dt * dt * gravity);
  }
  return out;
}

double turning_angle(const Vec2& a, const Vec2& b, const Vec2& c) {
  const Vec2 e1 = b - a;
  const Vec2 e2 = c - b;
  const double cross = e1.x() * e2.y() - e1.y() * e2.x();
  return std::atan2(cross, e1.dot(e2));
}

namespace {

using Mat2 = Eigen::Matrix2d;

Vec2 perp(const Vec2& e) { return Vec2(-e.y(), e.x()); }

// d angle(e) / d e and its Jacobian.
Vec2 angle_grad(const Vec2& e) { return perp(e) / e.squaredNorm(); }

Mat2 angle_hess(const Vec2& e) {
  Mat2 R;
  R << 0, -1, 1, 0;
  const double n2 = e.squaredNorm();
  return R / n2 - 2.0 * R * e * e.transpose() / (n2 * n2);
}

template <int N>
void scatter(const Eigen::Matrix<double, N, N>& H, const std::array<int, N / 2>& verts,
             std::vector<Eigen::Triplet<double>>& out) {
  for (int a = 0; a < N / 2; ++a) {
    for (int b = 0; b < N / 2; ++b) {
      for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 2; ++c) {
          const double val = H(2 * a + r, 2 * b + c);
          if (val != 0.0) out.emplace_back(2 * verts[a] + r, 2 * verts[b] + c, val);
        }
      }
    }
  }
}

template <int N>
Eigen::Matrix<double, N, N> project_psd(const Eigen::Matrix<double, N, N>& H) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, N, N>> es(H);
  Eigen::Matrix<double, N, 1> ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

ElasticEval elastic_eval(const SolidState& s, const std::vector<Vec2>& x, const ElasticParams& p,
                         HessianMode mode) {
  ElasticEval out;
  const int n = static_cast<int>(x.size());
  out.gradient = Eigen::VectorXd::Zero(2 * n);

  for (size_t e = 0; e < s.edges.size(); ++e) {
    const int i = s.edges[e][0], j = s.edges[e][1];
    const double l0 = s.rest_len[e];
    const double ks = p.k_stretch / l0;
    const Vec2 d = x[j] - x[i];
    const double len = d.norm();
    out.energy += 0.5 * ks * (len - l0) * (len - l0);
    if (len < 1e-12) {
      ++out.degenerate_edges;
      continue;
    }
    const Vec2 u = d / len;
    const Vec2 gj = ks * (len - l0) * u;
    out.gradient.segment<2>(2 * i) -= gj;
    out.gradient.segment<2>(2 * j) += gj;
    if (mode != HessianMode::None) {
      const Mat2 uu = u * u.transpose();
      const Mat2 K = ks * (uu + (len - l0) / len * (Mat2::Identity() - uu));
      Eigen::Matrix4d H;
      H << K, -K, -K, K;
      if (mode == HessianMode::ProjectedPSD) H = project_psd<4>(H);
      scatter<4>(H, {i, j}, out.hessian);
    }
  }

  for (size_t t = 0; t < s.bend_triples.size(); ++t) {
    const auto [a, b, c] = s.bend_triples[t];
    const Vec2 e1 = x[b] - x[a];
    const Vec2 e2 = x[c] - x[b];
    if (e1.squaredNorm() < 1e-24 || e2.squaredNorm() < 1e-24) {
      ++out.degenerate_edges;
      continue;
    }
    const double theta = turning_angle(x[a], x[b], x[c]);
    const double diff = theta - s.rest_angle[t];
    out.energy += p.k_bend * diff * diff;
    // theta = angle(e2) - angle(e1), e1 = xb - xa, e2 = xc - xb
    const Vec2 g1 = angle_grad(e1);
    const Vec2 g2 = angle_grad(e2);
    Eigen::Matrix<double, 6, 1> dtheta;
    dtheta << g1, -g1 - g2, g2;
    const double coef = 2.0 * p.k_bend * diff;
    out.gradient.segment<2>(2 * a) += coef * dtheta.segment<2>(0);
    out.gradient.segment<2>(2 * b) += coef * dtheta.segment<2>(2);
    out.gradient.segment<2>(2 * c) += coef * dtheta.segment<2>(4);
    if (mode != HessianMode::None) {
      const Mat2 H1 = angle_hess(e1);
      const Mat2 H2 = angle_hess(e2);
      // d2 theta: -angle(e1) contributes through e1 = xb - xa, +angle(e2) through e2 = xc - xb.
      Eigen::Matrix<double, 6, 6> T = Eigen::Matrix<double, 6, 6>::Zero();
      // -H1 on [xa, xb] with signs (-1, +1)
      T.block<2, 2>(0, 0) += -H1;
      T.block<2, 2>(0, 2) += H1;
      T.block<2, 2>(2, 0) += H1;
      T.block<2, 2>(2, 2) += -H1;
      // +H2 on [xb, xc] with signs (-1, +1)
      T.block<2, 2>(2, 2) += H2;
      T.block<2, 2>(2, 4) += -H2;
      T.block<2, 2>(4, 2) += -H2;
      T.block<2, 2>(4, 4) += H2;
      Eigen::Matrix<double, 6, 6> H =
          2.0 * p.k_bend * (dtheta * dtheta.transpose() + diff * T);
      if (mode == HessianMode::ProjectedPSD) H = project_psd<6>(H);
      scatter<6>(H, {a, b, c}, out.hessian);
    }
  }
  return out;
}

double elastic_energy(const SolidState& s, const std::vector<Vec2>& x, const ElasticParams& p) {
  return elastic_eval(s, x, p, HessianMode::None).energy;
}

Eigen::VectorXd elastic_gradient(const SolidState& s, const std::vector<Vec2>& x,
                                 const ElasticParams& p) {
  return elastic_eval(s, x, p, HessianMode::None).gradient;
}

std::vector<Vec2> correct_velocities(const std::vector<Vec2>& x_new, const std::vector<Vec2>& x_old,
                                     double dt, double damping) {
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "dt must be positive");
  const double scale = std::max(0.0, 1.0 - damping * dt);
  std::vector<Vec2> v(x_new.size());
  for (size_t i = 0; i < x_new.size(); ++i) v[i] = scale * (x_new[i] - x_old[i]) / dt;
  return v;
}

Eigen::VectorXd lumped_mass_matrix(const SolidState& s, const SolidDofMap& map) {
  Eigen::VectorXd m(map.dof_count());
  for (size_t k = 0; k < map.free_vertices.size(); ++k) {
    m[2 * k] = m[2 * k + 1] = s.mass[map.free_vertices[k]];
  }
  return m;
}

std::vector<double> polyline_masses(int vertex_count, const std::vector<std::array<int, 2>>& edges,
                                    const std::vector<double>& rest_len, double linear_density) {
  std::vector<double> m(vertex_count, 0.0);
  for (size_t e = 0; e < edges.size(); ++e) {
    const double half = 0.5 * linear_density * rest_len[e];
    m[edges[e][0]] += half;
    m[edges[e][1]] += half;
  }
  return m;
}

}  // namespace pfsim
