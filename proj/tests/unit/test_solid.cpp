#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "pfsim/error.hpp"
#include "pfsim/solid.hpp"
#include "test_util.hpp"

using namespace pfsim;

namespace {

SolidState random_polyline(int n, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  SolidState s;
  Vec2 p(0.0, 0.0);
  for (int i = 0; i < n; ++i) {
    s.x.push_back(p);
    p += Vec2(1.0, 0.0) + Vec2(u(rng), u(rng));
  }
  s.v.assign(n, Vec2::Zero());
  s.mass.assign(n, 1.0);
  s.fixed.assign(n, 0);
  for (int i = 0; i + 1 < n; ++i) s.edges.push_back({i, i + 1});
  for (int i = 0; i + 2 < n; ++i) s.bend_triples.push_back({i, i + 1, i + 2});
  s.set_rest_state_from_current();
  return s;
}

std::vector<Vec2> perturbed(const std::vector<Vec2>& x, double amp, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-amp, amp);
  std::vector<Vec2> out = x;
  for (Vec2& p : out) p += Vec2(u(rng), u(rng));
  return out;
}

Eigen::MatrixXd dense(const std::vector<Eigen::Triplet<double>>& t, int n) {
  Eigen::SparseMatrix<double> m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  return Eigen::MatrixXd(m);
}

std::vector<Vec2> bump(std::vector<Vec2> x, int dof, double h) {
  x[dof / 2][dof % 2] += h;
  return x;
}

}  // namespace

TEST_SUITE("solid") {

TEST_CASE("predict positions") {
  SolidState s;
  s.x = {Vec2(0.1, 0.2), Vec2(0.5, 0.5)};
  s.v = {Vec2::Zero(), Vec2::Zero()};
  s.mass = {1.0, 1.0};
  s.fixed = {0, 0};
  SUBCASE("at rest without gravity") {
    const auto x = predict_positions(s, Vec2::Zero(), 0.1);
    CHECK(x[0] == s.x[0]);
    CHECK(x[1] == s.x[1]);
  }
  SUBCASE("velocity") {
    s.v[0] = Vec2(1.0, 0.0);
    const auto x = predict_positions(s, Vec2::Zero(), 0.1);
    CHECK(x[0].x() == doctest::Approx(0.2));
    CHECK(x[0].y() == doctest::Approx(0.2));
  }
  SUBCASE("gravity") {
    const auto x = predict_positions(s, Vec2(0.0, -10.0), 0.1);
    CHECK(x[1].y() == doctest::Approx(0.4));
    CHECK(x[1].x() == 0.5);
  }
  SUBCASE("pinned vertices stay") {
    s.fixed[1] = 1;
    s.v[1] = Vec2(3.0, 3.0);
    const auto x = predict_positions(s, Vec2(0.0, -10.0), 0.1);
    CHECK(x[1] == s.x[1]);
  }
}

TEST_CASE("elastic energy hand values") {
  SolidState s;
  s.x = {Vec2(0.0, 0.0), Vec2(1.0, 0.0)};
  s.v.assign(2, Vec2::Zero());
  s.mass = {1.0, 1.0};
  s.fixed = {0, 0};
  s.edges = {{0, 1}};
  s.rest_len = {1.0};
  const ElasticParams p{1.0, 0.0};
  CHECK(elastic_energy(s, s.x, p) == 0.0);
  CHECK(elastic_gradient(s, s.x, p).norm() == 0.0);
  const std::vector<Vec2> stretched = {Vec2(0.0, 0.0), Vec2(2.0, 0.0)};
  CHECK(elastic_energy(s, stretched, p) == doctest::Approx(0.5));
}

TEST_CASE("rest configuration has zero energy and gradient") {
  std::mt19937 rng(1);
  const SolidState s = random_polyline(7, rng);
  const ElasticParams p{3.0, 0.2};
  const ElasticEval e = elastic_eval(s, s.x, p);
  CHECK(std::abs(e.energy) < 1e-24);
  CHECK(e.gradient.norm() < 1e-12);
}

TEST_CASE("turning angle") {
  CHECK(turning_angle(Vec2(0, 0), Vec2(1, 0), Vec2(2, 0)) == doctest::Approx(0.0));
  CHECK(turning_angle(Vec2(0, 0), Vec2(1, 0), Vec2(1, 1)) == doctest::Approx(std::numbers::pi / 2));
  CHECK(turning_angle(Vec2(0, 0), Vec2(1, 0), Vec2(1, -1)) == doctest::Approx(-std::numbers::pi / 2));
}

TEST_CASE("elastic gradient matches finite differences") {
  std::mt19937 rng(2);
  const ElasticParams p{2.0, 0.3};
  for (int trial = 0; trial < 5; ++trial) {
    const SolidState s = random_polyline(6, rng);
    const auto x = perturbed(s.x, 0.1, rng);
    const Eigen::VectorXd g = elastic_gradient(s, x, p);
    const double h = 1e-6;
    for (int d = 0; d < 2 * s.vertex_count(); ++d) {
      const double fd =
          (elastic_energy(s, bump(x, d, h), p) - elastic_energy(s, bump(x, d, -h), p)) / (2 * h);
      CHECK(std::abs(g[d] - fd) <= 1e-5 * std::max(1.0, std::abs(g[d])));
    }
  }
}

TEST_CASE("elastic hessian matches gradient differences") {
  std::mt19937 rng(3);
  const ElasticParams p{2.0, 0.3};
  for (int trial = 0; trial < 5; ++trial) {
    const SolidState s = random_polyline(5, rng);
    const auto x = perturbed(s.x, 0.1, rng);
    const int n = 2 * s.vertex_count();
    const Eigen::MatrixXd H = dense(elastic_eval(s, x, p, HessianMode::Exact).hessian, n);
    const double h = 1e-6;
    Eigen::MatrixXd fd(n, n);
    for (int d = 0; d < n; ++d) {
      fd.col(d) = (elastic_gradient(s, bump(x, d, h), p) - elastic_gradient(s, bump(x, d, -h), p)) /
                  (2 * h);
    }
    CHECK((H - fd).norm() <= 1e-4 * std::max(1.0, fd.norm()));
    CHECK((H - H.transpose()).norm() < 1e-12 * std::max(1.0, H.norm()));
  }
}

TEST_CASE("projected hessian is positive semidefinite") {
  std::mt19937 rng(4);
  const ElasticParams p{2.0, 0.3};
  for (int trial = 0; trial < 5; ++trial) {
    const SolidState s = random_polyline(6, rng);
    const auto x = perturbed(s.x, 0.4, rng);  // compressed edges give negative curvature
    const int n = 2 * s.vertex_count();
    const Eigen::MatrixXd H = dense(elastic_eval(s, x, p, HessianMode::ProjectedPSD).hessian, n);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10 * std::max(1.0, H.norm()));
  }
}

TEST_CASE("elastic energy is rigid-motion invariant") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const ElasticParams p{2.0, 0.3};
  for (int trial = 0; trial < 10; ++trial) {
    const SolidState s = random_polyline(6, rng);
    const auto x = perturbed(s.x, 0.2, rng);
    const double th = std::numbers::pi * u(rng);
    const Eigen::Rotation2Dd R(th);
    const Vec2 t(u(rng), u(rng));
    std::vector<Vec2> y;
    for (const Vec2& q : x) y.push_back(R * q + t);
    CHECK(std::abs(elastic_energy(s, y, p) - elastic_energy(s, x, p)) < 1e-10);
  }
}

TEST_CASE("degenerate edges are flagged with zero gradient") {
  SolidState s;
  s.x = {Vec2(0.3, 0.3), Vec2(0.3, 0.3)};
  s.v.assign(2, Vec2::Zero());
  s.mass = {1.0, 1.0};
  s.fixed = {0, 0};
  s.edges = {{0, 1}};
  s.rest_len = {0.1};
  const ElasticEval e = elastic_eval(s, s.x, ElasticParams{1.0, 0.0});
  CHECK(e.degenerate_edges == 1);
  CHECK(e.gradient.norm() == 0.0);
  CHECK(std::isfinite(e.energy));
}

TEST_CASE("correct velocities") {
  const std::vector<Vec2> x0 = {Vec2(0.1, 0.1)};
  CHECK(correct_velocities(x0, x0, 0.1, 0.0)[0].norm() == 0.0);
  const std::vector<Vec2> x1 = {Vec2(0.3, 0.1)};
  const Vec2 v = correct_velocities(x1, x0, 0.1, 0.0)[0];
  CHECK(v.x() == doctest::Approx(2.0));
  CHECK(v.y() == doctest::Approx(0.0));
  CHECK(correct_velocities(x1, x0, 0.1, 10.0)[0].norm() == 0.0);
  CHECK(correct_velocities(x1, x0, 0.1, 50.0)[0].norm() == 0.0);
  CHECK(correct_velocities(x1, x0, 0.1, 5.0)[0].x() == doctest::Approx(1.0));
}

TEST_CASE("lumped masses and dof map") {
  SolidState s;
  s.x = {Vec2(0, 0), Vec2(1, 0), Vec2(2, 0)};
  s.v.assign(3, Vec2::Zero());
  s.mass = {0.5, 0.5, 0.5};
  s.fixed = {0, 0, 0};
  SUBCASE("uniform") {
    const SolidDofMap map = make_dof_map(s);
    const Eigen::VectorXd m = lumped_mass_matrix(s, map);
    CHECK(m.size() == 6);
    for (int k = 0; k < 6; ++k) CHECK(m[k] == 0.5);
  }
  SUBCASE("pinned vertex has no unknowns") {
    s.fixed[1] = 1;
    const SolidDofMap map = make_dof_map(s);
    CHECK(map.dof_count() == 4);
    CHECK(map.dof_of_vertex[1] == -1);
    CHECK(map.dof_of_vertex[0] == 0);
    CHECK(map.dof_of_vertex[2] == 2);
    CHECK(lumped_mass_matrix(s, map).size() == 4);
  }
  SUBCASE("polyline masses sum to the total") {
    const std::vector<std::array<int, 2>> edges = {{0, 1}, {1, 2}, {2, 3}};
    const std::vector<double> len = {0.1, 0.2, 0.3};
    const auto m = polyline_masses(4, edges, len, 2.0);
    CHECK(m[0] == doctest::Approx(0.1));
    CHECK(m[1] == doctest::Approx(0.3));
    CHECK(m[3] == doctest::Approx(0.3));
    CHECK(m[0] + m[1] + m[2] + m[3] == doctest::Approx(2.0 * 0.6));
  }
}

TEST_CASE("solid state validation") {
  SolidState s;
  s.x = {Vec2(0, 0), Vec2(1, 0)};
  s.v.assign(2, Vec2::Zero());
  s.mass = {1.0, 1.0};
  s.fixed = {0, 0};
  s.edges = {{0, 1}};
  s.rest_len = {1.0};
  CHECK_NOTHROW(s.validate());
  s.mass[1] = 0.0;
  CHECK_THROWS_AS(s.validate(), Error);
  s.mass[1] = 1.0;
  s.rest_len[0] = -1.0;
  CHECK_THROWS_AS(s.validate(), Error);
  s.rest_len[0] = 1.0;
  s.edges[0] = {0, 2};
  CHECK_THROWS_AS(s.validate(), Error);
}

}  // TEST_SUITE
