#include <algorithm>
#include <numeric>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "pfsim/error.hpp"
#include "pfsim/sparse.hpp"

using namespace pfsim;

namespace {

SpMat chain_laplacian(int n) {
  SparseSym s(n);
  for (int i = 0; i < n; ++i) {
    s.add(i, i, 2.0);
    if (i + 1 < n) s.add_sym(i, i + 1, -1.0);
  }
  return s.build();
}

SpMat random_spd(int n, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = u(rng);
  Eigen::MatrixXd m = a * a.transpose() + n * Eigen::MatrixXd::Identity(n, n);
  return m.sparseView();
}

double kkt_residual(const SpMat& H, const SpMat& J, const VecX& a, const VecX& b,
                    const KktSolution& s) {
  const SpMat K = bordered_matrix(H, J);
  VecX x(s.primal.size() + s.lambda.size());
  x << s.primal, s.lambda;
  VecX rhs(a.size() + b.size());
  rhs << a, b;
  return (K * x - rhs).norm() / std::max(rhs.norm(), 1e-300);
}

}  // namespace

TEST_SUITE("sparse") {

TEST_CASE("assembly sums duplicates independent of insertion order") {
  std::vector<std::tuple<int, int, double>> t = {{0, 0, 0.1}, {1, 2, 0.2}, {0, 0, 0.3},
                                                 {2, 1, 1e-17}, {1, 2, 1.0}, {2, 2, 5.0},
                                                 {0, 0, 1e16}, {0, 0, -1e16}};
  SparseSym a(3);
  for (auto [r, c, v] : t) a.add(r, c, v);
  const SpMat ma = a.build();
  std::mt19937 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(t.begin(), t.end(), rng);
    SparseSym b(3);
    for (auto [r, c, v] : t) b.add(r, c, v);
    const SpMat mb = b.build();
    REQUIRE(mb.nonZeros() == ma.nonZeros());
    for (int k = 0; k < ma.nonZeros(); ++k) {
      CHECK(mb.valuePtr()[k] == ma.valuePtr()[k]);
      CHECK(mb.innerIndexPtr()[k] == ma.innerIndexPtr()[k]);
    }
  }
}

TEST_CASE("add_sym mirrors off-diagonal entries") {
  SparseSym s(3);
  s.add_sym(0, 2, 4.0);
  s.add_sym(1, 1, 2.0);
  const Eigen::MatrixXd d = Eigen::MatrixXd(s.build());
  CHECK(d(0, 2) == 4.0);
  CHECK(d(2, 0) == 4.0);
  CHECK(d(1, 1) == 2.0);
}

TEST_CASE("cg on the identity takes one iteration") {
  SparseSym s(5);
  for (int i = 0; i < 5; ++i) s.add(i, i, 1.0);
  VecX b(5);
  b << 1, -2, 3, 0.5, 7;
  for (auto pc : {Preconditioner::None, Preconditioner::Jacobi, Preconditioner::IncompleteCholesky}) {
    const CgResult r = cg_solve(s.build(), b, 1e-12, 10, pc);
    CHECK(r.iterations == 1);
    CHECK((r.x - b).norm() < 1e-12);
  }
}

TEST_CASE("cg on a Poisson chain matches a dense solve") {
  const int n = 64;
  const SpMat A = chain_laplacian(n);
  VecX b = VecX::Zero(n);
  b[0] = 1.0;
  const VecX ref = Eigen::MatrixXd(A).ldlt().solve(b);
  for (auto pc : {Preconditioner::None, Preconditioner::Jacobi, Preconditioner::IncompleteCholesky}) {
    const CgResult r = cg_solve(A, b, 1e-12, 500, pc);
    CHECK((r.x - ref).lpNorm<Eigen::Infinity>() < 1e-8);
    CHECK(r.rel_residual <= 1e-12);
  }
}

TEST_CASE("cg reports indefinite systems") {
  SparseSym s(3);
  s.add(0, 0, 1.0);
  s.add(1, 1, -2.0);
  s.add(2, 2, 1.0);
  VecX b(3);
  b << 1, 1, 1;
  try {
    const CgResult r = cg_solve(s.build(), b, 1e-12, 50, Preconditioner::None);
    // A lucky Krylov space may still produce the exact answer; it must be correct then.
    CHECK((s.build() * r.x - b).norm() <= 1e-10);
  } catch (const NotConvergedError& e) {
    CHECK(e.code() == ErrorCode::NotConverged);
    CHECK(e.residual() >= 0.0);
  }
}

TEST_CASE("cg error energy norm decreases monotonically") {
  const int n = 40;
  const SpMat A = chain_laplacian(n);
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  VecX b(n);
  for (int i = 0; i < n; ++i) b[i] = u(rng);
  const VecX xs = Eigen::MatrixXd(A).ldlt().solve(b);
  for (auto pc : {Preconditioner::Jacobi, Preconditioner::IncompleteCholesky}) {
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 20; ++k) {
      VecX x;
      try {
        x = cg_solve(A, b, 0.0, k, pc).x;
      } catch (const NotConvergedError& e) {
        x = e.iterate();
      }
      const VecX e = x - xs;
      const double energy = e.dot(A * e);
      CHECK(energy <= prev * (1.0 + 1e-12));
      prev = energy;
    }
  }
}

TEST_CASE("kkt hand solve") {
  SparseSym h(2);
  h.add(0, 0, 1.0);
  h.add(1, 1, 1.0);
  SparseSym j(1, 2);
  j.add(0, 0, 1.0);
  j.add(0, 1, 1.0);
  VecX a = VecX::Zero(2);
  VecX b(1);
  b << -1.0;
  const KktSolution s = ldl_solve(h.build(), j.build(), a, b);
  CHECK(s.primal[0] == doctest::Approx(-0.5));
  CHECK(s.primal[1] == doctest::Approx(-0.5));
  CHECK(s.lambda[0] == doctest::Approx(0.5));
  CHECK_FALSE(s.h_indefinite);
}

TEST_CASE("kkt with a zero constraint row is singular") {
  SparseSym h(2);
  h.add(0, 0, 1.0);
  h.add(1, 1, 1.0);
  SparseSym j(1, 2);
  VecX a = VecX::Zero(2);
  VecX b(1);
  b << 1.0;
  try {
    ldl_solve(h.build(), j.build(), a, b);
    FAIL("expected SingularSystem");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SingularSystem);
  }
}

TEST_CASE("random kkt systems solve to 1e-10 residual") {
  std::mt19937 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 6 + trial, m = 1 + trial % 3;
    const SpMat H = random_spd(n, rng);
    Eigen::MatrixXd jd(m, n);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < n; ++c) jd(r, c) = u(rng);
    const SpMat J = jd.sparseView();
    VecX a(n), b(m);
    for (int i = 0; i < n; ++i) a[i] = u(rng);
    for (int i = 0; i < m; ++i) b[i] = u(rng);
    const KktSolution s = ldl_solve(H, J, a, b);
    CHECK(kkt_residual(H, J, a, b, s) <= 1e-10);
  }
}

TEST_CASE("kkt with an indefinite block falls back and stays accurate") {
  SparseSym h(3);
  h.add(0, 0, 1.0);
  h.add(1, 1, -1.0);
  h.add(2, 2, 2.0);
  SparseSym j(1, 3);
  j.add(0, 1, 1.0);
  VecX a(3), b(1);
  a << 1, 2, 3;
  b << 0.5;
  const SpMat H = h.build(), J = j.build();
  const KktSolution s = ldl_solve(H, J, a, b);
  CHECK(s.h_indefinite);
  CHECK(kkt_residual(H, J, a, b, s) <= 1e-10);
}

}  // TEST_SUITE
