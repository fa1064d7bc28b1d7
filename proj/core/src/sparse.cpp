#include "pfsim/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

namespace pfsim {

SparseSym::SparseSym(int rows, int cols) : rows_(rows), cols_(cols < 0 ? rows : cols) {}

void SparseSym::add(int r, int c, double v) {
  if (r < 0 || c < 0 || r >= rows_ || c >= cols_) {
    throw Error(ErrorCode::InvalidArgument, "triplet index out of range");
  }
  entries_.push_back({r, c, v});
}

void SparseSym::add_sym(int r, int c, double v) {
  add(r, c, v);
  if (r != c) add(c, r, v);
}

SpMat SparseSym::build() const {
  std::vector<Entry> sorted = entries_;
  std::sort(sorted.begin(), sorted.end(), [](const Entry& a, const Entry& b) {
    return std::tie(a.c, a.r, a.v) < std::tie(b.c, b.r, b.v);
  });
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(sorted.size());
  for (size_t k = 0; k < sorted.size();) {
    double sum = 0.0;
    size_t e = k;
    while (e < sorted.size() && sorted[e].r == sorted[k].r && sorted[e].c == sorted[k].c) {
      sum += sorted[e].v;
      ++e;
    }
    trips.emplace_back(sorted[k].r, sorted[k].c, sum);
    k = e;
  }
  SpMat m(rows_, cols_);
  m.setFromTriplets(trips.begin(), trips.end());
  m.makeCompressed();
  return m;
}

namespace {

class Precond {
 public:
  Precond(const SpMat& A, Preconditioner kind) : kind_(kind) {
    if (kind_ == Preconditioner::IncompleteCholesky) {
      ic_.compute(A);
      if (ic_.info() != Eigen::Success) kind_ = Preconditioner::Jacobi;
    }
    if (kind_ == Preconditioner::Jacobi) {
      inv_diag_ = A.diagonal();
      for (Eigen::Index i = 0; i < inv_diag_.size(); ++i) {
        inv_diag_[i] = inv_diag_[i] > 0.0 ? 1.0 / inv_diag_[i] : 1.0;
      }
    }
  }

  VecX apply(const VecX& r) const {
    switch (kind_) {
      case Preconditioner::None: return r;
      case Preconditioner::Jacobi: return inv_diag_.cwiseProduct(r);
      case Preconditioner::IncompleteCholesky: return ic_.solve(r);
    }
    return r;
  }

 private:
  Preconditioner kind_;
  VecX inv_diag_;
  Eigen::IncompleteCholesky<double, Eigen::Lower, Eigen::AMDOrdering<int>> ic_;
};

}  // namespace

CgResult cg_solve(const SpMat& A, const VecX& b, double tol, int max_iters, Preconditioner precond,
                  const VecX* x0) {
  if (A.rows() != A.cols() || A.rows() != b.size()) {
    throw Error(ErrorCode::InvalidArgument, "cg_solve dimension mismatch");
  }
  CgResult res;
  res.x = x0 ? *x0 : VecX::Zero(b.size());
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    res.x.setZero();
    return res;
  }
  VecX r = b - A * res.x;
  double rnorm = r.norm();
  if (rnorm <= tol * bnorm) {
    res.rel_residual = rnorm / bnorm;
    return res;
  }
  const Precond M(A, precond);
  VecX z = M.apply(r);
  VecX p = z;
  double rz = r.dot(z);
  for (int it = 1; it <= max_iters; ++it) {
    const VecX Ap = A * p;
    const double pAp = p.dot(Ap);
    if (!(pAp > 0.0) || !std::isfinite(pAp)) {
      throw NotConvergedError("cg breakdown: non-positive curvature (matrix not SPD)", rnorm / bnorm,
                              it, res.x);
    }
    const double alpha = rz / pAp;
    res.x += alpha * p;
    r -= alpha * Ap;
    rnorm = r.norm();
    res.iterations = it;
    if (rnorm <= tol * bnorm) {
      // Guard against drift in the recursive residual.
      const double true_r = (b - A * res.x).norm();
      if (true_r <= tol * bnorm) {
        res.rel_residual = true_r / bnorm;
        return res;
      }
      r = b - A * res.x;
      rnorm = true_r;
    }
    z = M.apply(r);
    const double rz_new = r.dot(z);
    const double beta = rz_new / rz;
    rz = rz_new;
    p = z + beta * p;
  }
  throw NotConvergedError("cg exceeded " + std::to_string(max_iters) + " iterations", rnorm / bnorm,
                          max_iters, res.x);
}

SpMat bordered_matrix(const SpMat& H, const SpMat& J) {
  const int n = static_cast<int>(H.rows());
  const int m = static_cast<int>(J.rows());
  SparseSym K(n + m);
  K.reserve(H.nonZeros() + 2 * J.nonZeros());
  for (int c = 0; c < H.outerSize(); ++c) {
    for (SpMat::InnerIterator it(H, c); it; ++it) K.add(it.row(), it.col(), it.value());
  }
  for (int c = 0; c < J.outerSize(); ++c) {
    for (SpMat::InnerIterator it(J, c); it; ++it) {
      K.add(n + it.row(), it.col(), it.value());
      K.add(it.col(), n + it.row(), it.value());
    }
  }
  return K.build();
}

namespace {

double kkt_residual(const SpMat& H, const SpMat& J, const VecX& a, const VecX& b, const VecX& p,
                    const VecX& l) {
  const VecX r1 = H * p + J.transpose() * l - a;
  const VecX r2 = J * p - b;
  const double num = std::sqrt(r1.squaredNorm() + r2.squaredNorm());
  const double den = std::sqrt(a.squaredNorm() + b.squaredNorm());
  return den > 0.0 ? num / den : num;
}

}  // namespace

KktSolution ldl_solve(const SpMat& H, const SpMat& J, const VecX& a, const VecX& b) {
  const Eigen::Index n = H.rows();
  const Eigen::Index m = J.rows();
  if (H.cols() != n || a.size() != n || b.size() != m || (m > 0 && J.cols() != n)) {
    throw Error(ErrorCode::InvalidArgument, "ldl_solve dimension mismatch");
  }
  KktSolution sol;
  sol.primal = VecX::Zero(n);
  sol.lambda = VecX::Zero(m);

  for (Eigen::Index r = 0; r < m; ++r) {
    if (J.row(r).norm() == 0.0) throw Error(ErrorCode::SingularSystem, "zero constraint row");
  }

  Eigen::SimplicialLDLT<SpMat> ldlt;
  bool pd = false;
  if (n > 0) {
    ldlt.compute(H);
    if (ldlt.info() == Eigen::Success) {
      const VecX d = ldlt.vectorD();
      pd = (d.array() > 0.0).all() && d.allFinite();
    }
  } else {
    pd = true;
  }

  if (pd) {
    // Schur complement on the (few) multipliers.
    auto solveH = [&](const VecX& rhs) -> VecX { return n > 0 ? VecX(ldlt.solve(rhs)) : VecX(); };
    const VecX Ha = solveH(a);
    if (m == 0) {
      sol.primal = Ha;
    } else {
      Eigen::MatrixXd Y(n, m);
      const Eigen::MatrixXd Jd = Eigen::MatrixXd(J);
      for (Eigen::Index k = 0; k < m; ++k) Y.col(k) = solveH(Jd.row(k).transpose());
      const Eigen::MatrixXd S = Jd * Y;
      Eigen::FullPivLU<Eigen::MatrixXd> lu(S);
      lu.setThreshold(1e-13);
      if (lu.rank() < m) throw Error(ErrorCode::SingularSystem, "rank-deficient constraint block");
      sol.lambda = lu.solve(Jd * Ha - b);
      sol.primal = Ha - Y * sol.lambda;
      // One round of iterative refinement.
      for (int pass = 0; pass < 2; ++pass) {
        const VecX r1 = a - H * sol.primal - J.transpose() * sol.lambda;
        const VecX r2 = b - J * sol.primal;
        if (std::sqrt(r1.squaredNorm() + r2.squaredNorm()) == 0.0) break;
        const VecX Hr = solveH(r1);
        const VecX dl = lu.solve(Jd * Hr - r2);
        sol.lambda += dl;
        sol.primal += Hr - Y * dl;
      }
    }
  } else {
    sol.h_indefinite = true;
    const SpMat K = bordered_matrix(H, J);
    Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
    lu.analyzePattern(K);
    lu.factorize(K);
    if (lu.info() != Eigen::Success) {
      throw Error(ErrorCode::SingularSystem, "bordered system factorization failed");
    }
    VecX rhs(n + m);
    rhs << a, b;
    VecX z = lu.solve(rhs);
    for (int pass = 0; pass < 2; ++pass) z += lu.solve(VecX(rhs - K * z));
    if (!z.allFinite()) throw Error(ErrorCode::SingularSystem, "non-finite KKT solution");
    sol.primal = z.head(n);
    sol.lambda = z.tail(m);
  }
  sol.rel_residual = kkt_residual(H, J, a, b, sol.primal, sol.lambda);
  if (!std::isfinite(sol.rel_residual) || sol.rel_residual > 1e-6) {
    throw Error(ErrorCode::SingularSystem,
                "KKT residual too large: " + std::to_string(sol.rel_residual));
  }
  return sol;
}

}  // namespace pfsim
