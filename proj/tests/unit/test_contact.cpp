#include <cmath>
#include <random>
#include <set>

#include <Eigen/Dense>

#include "doctest.h"
#include "pfsim/contact.hpp"
#include "pfsim/error.hpp"
#include "test_util.hpp"

using namespace pfsim;
using pfsim::test::make_grid;
using pfsim::test::sample_cells;

namespace {

PrimitivePair linear_pair(int vertex, int bi, int bj) {
  PrimitivePair p;
  p.vertex = vertex;
  p.scheme = InterpScheme::Linear;
  p.base_i = bi;
  p.base_j = bj;
  return p;
}

PrimitivePair quadratic_pair(int vertex) {
  PrimitivePair p;
  p.vertex = vertex;
  p.scheme = InterpScheme::Quadratic;
  return p;
}

double weight_of(const InterpStencil& st, int cell) {
  double w = 0.0;
  for (int q = 0; q < st.count; ++q)
    if (st.cells[q] == cell) w += st.weights[q];
  return w;
}

CellField random_field(const GridDesc& g, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  CellField f(g);
  for (double& v : f.data()) v = u(rng);
  return f;
}

}  // namespace

TEST_SUITE("contact") {

TEST_CASE("default parameters") {
  const ContactParams p = ContactParams::defaults(0.01, 1000.0, InterpScheme::Linear);
  CHECK(p.dhat == doctest::Approx(0.005));
  CHECK(p.kappa == doctest::Approx(1e3 * 1000.0 * 1e-4 * 1e-4));
  CHECK_NOTHROW(p.validate());
  ContactParams bad = p;
  bad.dhat = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("linear distance hand values") {
  const GridDesc g = make_grid(4, 4, 1.0);
  SUBCASE("constant stencil") {
    const CellField phi(g, 0.37);
    const PrimitivePair p = linear_pair(0, 1, 1);
    for (const Vec2& x : {Vec2(1.6, 1.7), Vec2(2.4, 2.1), Vec2(1.5, 1.5)}) {
      const DistanceEval e = evaluate_distance(phi, x, p);
      CHECK(e.d == doctest::Approx(0.37));
      CHECK(e.grad_x.norm() < 1e-14);
    }
  }
  SUBCASE("(-1, 1, -1, 1) at fr = (0.75, 0.5)") {
    CellField phi(g);
    phi(1, 1) = -1.0;
    phi(2, 1) = 1.0;
    phi(1, 2) = -1.0;
    phi(2, 2) = 1.0;
    const Vec2 x = g.cell_center(1, 1) + Vec2(0.75, 0.5);
    CHECK(signed_distance(phi, x, linear_pair(0, 1, 1)) == doctest::Approx(0.5));
  }
  SUBCASE("corner collocation") {
    std::mt19937 rng(1);
    const CellField phi = random_field(g, rng);
    const DistanceEval e = evaluate_distance(phi, g.cell_center(1, 1), linear_pair(0, 1, 1));
    CHECK(weight_of(e.stencil, g.cell_index(1, 1)) == doctest::Approx(1.0));
    CHECK(weight_of(e.stencil, g.cell_index(2, 1)) == doctest::Approx(0.0));
    CHECK(weight_of(e.stencil, g.cell_index(1, 2)) == doctest::Approx(0.0));
    CHECK(weight_of(e.stencil, g.cell_index(2, 2)) == doctest::Approx(0.0));
    CHECK(e.d == doctest::Approx(phi(1, 1)));
  }
  SUBCASE("frozen pair extrapolates a linear field") {
    const CellField phi = sample_cells(g, [](const Vec2& p) { return p.x(); });
    const PrimitivePair p = linear_pair(0, 1, 1);
    const Vec2 x = g.cell_center(1, 1) + Vec2(0.4, 0.3) + Vec2(1.0, 0.0);
    CHECK(signed_distance(phi, x, p) == doctest::Approx(x.x()));
    CHECK(signed_distance(phi, x + Vec2(-2.7, 0.9), p) == doctest::Approx(x.x() - 2.7));
  }
}

TEST_CASE("distance gradients match finite differences") {
  const GridDesc g = make_grid(12, 12, 0.1);
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> pos(0.3, 0.9), off(-0.05, 0.05);
  for (int trial = 0; trial < 20; ++trial) {
    const CellField phi = random_field(g, rng);
    const Vec2 x(pos(rng), pos(rng));
    const auto [bi, bj] = dual_cell_of(g, x);
    for (const PrimitivePair& p : {linear_pair(0, bi, bj), quadratic_pair(0)}) {
      // Linear pairs may be evaluated off their dual cell.
      const Vec2 y = p.scheme == InterpScheme::Linear ? Vec2(x + Vec2(off(rng), off(rng))) : x;
      const DistanceEval e = evaluate_distance(phi, y, p);
      double wsum = 0.0;
      for (int q = 0; q < e.stencil.count; ++q) wsum += e.stencil.weights[q];
      CHECK(wsum == doctest::Approx(1.0).epsilon(1e-12));

      const double h = 1e-6;
      for (int a = 0; a < 2; ++a) {
        Vec2 yp = y, ym = y;
        yp[a] += h;
        ym[a] -= h;
        const double fd = (signed_distance(phi, yp, p) - signed_distance(phi, ym, p)) / (2 * h);
        CHECK(std::abs(e.grad_x[a] - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
      }
      for (int q = 0; q < e.stencil.count; ++q) {
        CellField pp = phi, pm = phi;
        pp[e.stencil.cells[q]] += h;
        pm[e.stencil.cells[q]] -= h;
        const double fd = (signed_distance(pp, y, p) - signed_distance(pm, y, p)) / (2 * h);
        CHECK(std::abs(e.stencil.weights[q] - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
      }
    }
  }
}

TEST_CASE("quadratic distance is continuous across dual-cell borders") {
  const GridDesc g = make_grid(16, 16, 1.0 / 16);
  std::mt19937 rng(3);
  const CellField phi = random_field(g, rng);
  const double e = 1e-6 * g.dx;
  for (int i = 3; i < 13; ++i) {
    const Vec2 b(i * g.dx, 0.53);  // primal cell edge = dual cell center line switch
    const DistanceEval lo = evaluate_distance(phi, b - Vec2(e, 0), quadratic_pair(0));
    const DistanceEval hi = evaluate_distance(phi, b + Vec2(e, 0), quadratic_pair(0));
    // Jump after removing the first-order change across the 2e gap.
    CHECK(std::abs(hi.d - lo.d - 2 * e * 0.5 * (lo.grad_x.x() + hi.grad_x.x())) < 1e-8 * g.dx);
    CHECK((hi.grad_x - lo.grad_x).norm() < 1e-3);
    const Vec2 lo2(std::nextafter(b.x(), 0.0), b.y()), hi2(std::nextafter(b.x(), 1.0), b.y());
    CHECK(std::abs(signed_distance(phi, lo2, quadratic_pair(0)) -
                   signed_distance(phi, hi2, quadratic_pair(0))) < 1e-12);
  }
}

TEST_CASE("frozen linear distance has a continuous gradient along a path") {
  const GridDesc g = make_grid(10, 10, 0.1);
  std::mt19937 rng(4);
  const CellField phi = random_field(g, rng);
  const PrimitivePair p = linear_pair(0, 4, 4);
  Vec2 prev_g = evaluate_distance(phi, Vec2(0.2, 0.25), p).grad_x;
  const int steps = 2000;
  for (int s = 1; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    const Vec2 x = Vec2(0.2, 0.25) + t * Vec2(0.6, 0.5);  // crosses several dual cells
    const Vec2 gx = evaluate_distance(phi, x, p).grad_x;
    CHECK((gx - prev_g).norm() < 1e-2);
    prev_g = gx;
  }
}

TEST_CASE("barrier function") {
  const double dhat = 0.02;
  CHECK(barrier(dhat, dhat) == 0.0);
  CHECK(barrier_d1(dhat, dhat) == 0.0);
  CHECK(barrier(2 * dhat, dhat) == 0.0);
  CHECK(barrier(dhat / 2, dhat) == doctest::Approx(0.25 * std::log(2.0)));
  CHECK(barrier(dhat / 2, dhat) == doctest::Approx(0.17329).epsilon(1e-5));
  for (double s : {0.1, 0.5, 0.9}) {
    const double d = s * dhat, h = 1e-7 * dhat;
    const double fd1 = (barrier(d + h, dhat) - barrier(d - h, dhat)) / (2 * h);
    const double fd2 = (barrier_d1(d + h, dhat) - barrier_d1(d - h, dhat)) / (2 * h);
    CHECK(pfsim::test::rel_err(barrier_d1(d, dhat), fd1) < 1e-6);
    CHECK(pfsim::test::rel_err(barrier_d2(d, dhat), fd2) < 1e-6);
  }
  CHECK(barrier(1e-12 * dhat, dhat) > 20.0);
  for (double d : {0.0, -1e-3}) {
    try {
      barrier(d, dhat);
      FAIL("expected NonPositiveDistance");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NonPositiveDistance);
    }
  }
}

TEST_CASE("barrier is nonincreasing and nonnegative") {
  const double dhat = 0.5;
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= 1000; ++k) {
    const double b = barrier(k * dhat / 1000, dhat);
    CHECK(b >= 0.0);
    CHECK(b <= prev);
    prev = b;
  }
}

TEST_CASE("barrier energy, gradient and Hessian blocks") {
  const GridDesc g = make_grid(12, 12, 0.1);
  const ContactParams cp{0.05, 3.0, InterpScheme::Quadratic};
  SUBCASE("no pairs") {
    const BarrierEval b = barrier_energy_grad_hess({}, CellField(g, 1.0), {}, cp);
    CHECK(b.energy == 0.0);
    CHECK(b.terms.empty());
  }
  SUBCASE("one pair at half the threshold") {
    // phi = y - 0.5, vertex above the plane at d = dhat / 2
    const CellField phi = sample_cells(g, [](const Vec2& p) { return p.y() - 0.5; });
    const std::vector<Vec2> x = {Vec2(0.43, 0.5 + cp.dhat / 2)};
    for (const PrimitivePair& p : {quadratic_pair(0), linear_pair(0, 3, 4)}) {
      const BarrierEval b = barrier_energy_grad_hess({p}, phi, x, cp);
      REQUIRE(b.terms.size() == 1);
      const PairTerm& t = b.terms[0];
      CHECK(t.eval.d == doctest::Approx(cp.dhat / 2));
      CHECK(b.energy == doctest::Approx(cp.kappa * 0.25 * std::log(2.0)));
      CHECK(t.b1 == doctest::Approx(barrier_d1(cp.dhat / 2, cp.dhat)));
      const DistanceEval e = evaluate_distance(phi, x[0], p);
      CHECK((t.eval.grad_x - e.grad_x).norm() < 1e-14);
      for (int q = 0; q < e.stencil.count; ++q) CHECK(t.eval.stencil.weights[q] == e.stencil.weights[q]);
    }
  }
  SUBCASE("pair blocks are symmetric PSD") {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> u(0.01, 0.049);
    for (int trial = 0; trial < 20; ++trial) {
      const CellField phi = sample_cells(g, [](const Vec2& p) { return p.y() - 0.5; });
      const std::vector<Vec2> x = {Vec2(0.47, 0.5 + u(rng))};
      const auto [bi, bj] = dual_cell_of(g, x[0]);
      for (const PrimitivePair& p : {quadratic_pair(0), linear_pair(0, bi, bj)}) {
        const BarrierEval b = barrier_energy_grad_hess({p}, phi, x, cp);
        const Eigen::MatrixXd H = pair_hessian_block(b.terms[0], cp.kappa);
        CHECK(H.rows() == b.terms[0].eval.stencil.count + 2);
        CHECK((H - H.transpose()).norm() <= 1e-12 * std::max(1.0, H.norm()));
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
        CHECK(es.eigenvalues().minCoeff() >= -1e-12 * std::max(1.0, H.norm()));
      }
    }
  }
  SUBCASE("non-positive distance propagates") {
    const CellField phi = sample_cells(g, [](const Vec2& p) { return p.y() - 0.5; });
    const std::vector<Vec2> x = {Vec2(0.43, 0.45)};
    CHECK_THROWS_AS(barrier_energy_grad_hess({quadratic_pair(0)}, phi, x, cp), Error);
  }
}

TEST_CASE("pair collection") {
  const GridDesc g = make_grid(16, 16, 1.0 / 16);
  const CellField phi = sample_cells(g, [](const Vec2& p) { return p.y() - 0.5; });
  ContactParams cp = ContactParams::defaults(g.dx, 1000.0, InterpScheme::Linear);
  SUBCASE("far vertex") {
    CHECK(collect_pairs(phi, {Vec2(0.5, 0.5 + 2 * cp.dhat)}, cp).empty());
  }
  SUBCASE("vertex at half the threshold") {
    const Vec2 x(0.51, 0.5 + cp.dhat / 2);
    const auto pairs = collect_pairs(phi, {x}, cp);
    REQUIRE(pairs.size() == 1);
    const auto [bi, bj] = dual_cell_of(g, x);
    CHECK(pairs[0].base_i == bi);
    CHECK(pairs[0].base_j == bj);
    CHECK(pairs[0].scheme == InterpScheme::Linear);
    CHECK(pairs[0].d == doctest::Approx(cp.dhat / 2));
  }
  SUBCASE("a row inside the band yields one pair per vertex") {
    for (InterpScheme s : {InterpScheme::Linear, InterpScheme::Quadratic}) {
      cp.scheme = s;
      std::vector<Vec2> row;
      for (int k = 0; k < 20; ++k) row.push_back(Vec2(0.1 + 0.04 * k, 0.5 + 0.3 * cp.dhat));
      const auto pairs = collect_pairs(phi, row, cp);
      CHECK(pairs.size() == row.size());
      std::set<int> seen;
      for (const auto& p : pairs) seen.insert(p.vertex);
      CHECK(seen.size() == row.size());
    }
  }
  SUBCASE("rebase moves only pairs with a non-positive start distance") {
    const std::vector<Vec2> xref = {Vec2(0.3, 0.5 + cp.dhat / 2), Vec2(0.7, 0.5 + cp.dhat / 2)};
    auto pairs = collect_pairs(phi, xref, cp);
    REQUIRE(pairs.size() == 2);
    // Vertex 0 starts a cell to the left and below the interface.
    const std::vector<Vec2> xstart = {xref[0] - Vec2(g.dx, 0.3 * g.dx), xref[1]};
    const CellField phi_start = sample_cells(g, [](const Vec2& p) { return p.y() - 0.5 + 0.2 / 16; });
    const auto before = pairs;
    CHECK(rebase_at_start(pairs, phi_start, xstart) == 0);  // frozen d is still positive there
    // Interface raised above both vertices: vertex 0 changed dual cell, vertex 1 did not.
    const CellField phi_up = sample_cells(g, [](const Vec2& p) { return p.y() - 0.6; });
    CHECK(rebase_at_start(pairs, phi_up, xstart) == 1);
    CHECK(pairs[1].base_i == before[1].base_i);
    CHECK(pairs[1].base_j == before[1].base_j);
    const auto [bi, bj] = dual_cell_of(g, xstart[0]);
    CHECK(pairs[0].base_i == bi);
    CHECK(pairs[0].base_j == bj);
  }
}

TEST_CASE("ccd filter") {
  SUBCASE("point approaching a fixed surface point") {
    // phi = 1 - x: the surface point of both (0,0) and (2,0) is (1,0).
    const GridDesc g = make_grid(16, 16, 0.25, Vec2(-1.0, -2.0));
    const CellField phi = sample_cells(g, [](const Vec2& p) { return 1.0 - p.x(); });
    const CcdResult r = ccd_filter({quadratic_pair(0)}, phi, {Vec2(0, 0)}, phi, {Vec2(2, 0)});
    CHECK(r.flagged == 1);
    CHECK(r.t_bound == doctest::Approx(0.5));
    CHECK_FALSE(r.floored);
  }
  SUBCASE("no pair goes negative") {
    const GridDesc g = make_grid(16, 16, 0.25, Vec2(-1.0, -2.0));
    const CellField phi = sample_cells(g, [](const Vec2& p) { return 1.0 - p.x(); });
    const CcdResult r = ccd_filter({quadratic_pair(0)}, phi, {Vec2(0, 0)}, phi, {Vec2(-0.5, 0.3)});
    CHECK(r.flagged == 0);
    CHECK(r.t_bound == 1.0);
  }
  SUBCASE("surface and vertex moving apart") {
    const GridDesc g = make_grid(16, 16, 0.25, Vec2(-1.0, -2.0));
    const CellField phi = sample_cells(g, [](const Vec2& p) { return 1.0 - p.x(); });
    const CellField phi_away = sample_cells(g, [](const Vec2& p) { return 1.5 - p.x(); });
    const CcdResult r = ccd_filter({quadratic_pair(0)}, phi, {Vec2(0, 0)}, phi_away, {Vec2(0.2, 0)});
    CHECK(r.t_bound == 1.0);
  }
  SUBCASE("accepted step keeps the distance positive") {
    const GridDesc g = make_grid(16, 16, 0.25, Vec2(-1.0, -2.0));
    std::mt19937 rng(6);
    std::uniform_real_distribution<double> u(0.1, 1.9);
    for (int trial = 0; trial < 30; ++trial) {
      const double c0 = 1.0, c1 = 1.0 + 0.3 * (u(rng) - 1.0);
      const CellField phi = sample_cells(g, [&](const Vec2& p) { return c0 - p.x(); });
      const CellField phi1 = sample_cells(g, [&](const Vec2& p) { return c1 - p.x(); });
      const std::vector<Vec2> x0 = {Vec2(0.0, 0.1)}, x1 = {Vec2(u(rng), 0.2)};
      const CcdResult r = ccd_filter({quadratic_pair(0)}, phi, x0, phi1, x1);
      const double t = r.t_bound;
      CellField phit = phi;
      for (int c = 0; c < g.cell_count(); ++c) phit[c] += t * (phi1[c] - phi[c]);
      const Vec2 xt = x0[0] + t * (x1[0] - x0[0]);
      // A backtracked fraction of the bound is strictly feasible.
      CellField phih = phi;
      for (int c = 0; c < g.cell_count(); ++c) phih[c] += 0.9 * t * (phi1[c] - phi[c]);
      CHECK(signed_distance(phih, x0[0] + 0.9 * t * (x1[0] - x0[0]), quadratic_pair(0)) > 0.0);
      CHECK(signed_distance(phit, xt, quadratic_pair(0)) >= -1e-12);
    }
  }
  SUBCASE("segment closest parameters") {
    const auto a = segment_closest_params(Vec2(0, 0), Vec2(2, 0), Vec2(1, 1), Vec2(1, 3));
    CHECK(a[0] == doctest::Approx(0.5));
    CHECK(a[1] == doctest::Approx(0.0));
    const auto b = segment_closest_params(Vec2(0, 0), Vec2(0, 0), Vec2(-1, 1), Vec2(1, 1));
    CHECK(b[1] == doctest::Approx(0.5));
  }
}

}  // TEST_SUITE
