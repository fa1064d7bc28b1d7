#pragma once

#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "pfsim/error.hpp"

namespace pfsim {

using SpMat = Eigen::SparseMatrix<double>;
using VecX = Eigen::VectorXd;

/// Triplet buffer that compresses to a canonical CSC matrix. Duplicates are
/// sorted by (col, row, value) before summation, so the result does not depend
/// on insertion order.
class SparseSym {
 public:
  explicit SparseSym(int rows, int cols = -1);

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  void add(int r, int c, double v);
  /// Adds v at (r, c) and, off the diagonal, at (c, r).
  void add_sym(int r, int c, double v);
  void reserve(size_t n) { entries_.reserve(n); }
  size_t entry_count() const { return entries_.size(); }

  SpMat build() const;

 private:
  struct Entry {
    int r, c;
    double v;
  };
  int rows_, cols_;
  std::vector<Entry> entries_;
};

enum class Preconditioner { None, Jacobi, IncompleteCholesky };

struct CgResult {
  VecX x;
  int iterations = 0;
  double rel_residual = 0.0;
};

class NotConvergedError : public Error {
 public:
  NotConvergedError(const std::string& what, double residual, int iterations, VecX iterate = {})
      : Error(ErrorCode::NotConverged, what),
        residual_(residual),
        iterations_(iterations),
        iterate_(std::move(iterate)) {}
  double residual() const { return residual_; }
  int iterations() const { return iterations_; }
  /// Last iterate before the failure.
  const VecX& iterate() const { return iterate_; }

 private:
  double residual_;
  int iterations_;
  VecX iterate_;
};

/// Preconditioned conjugate gradients for SPD A. Stops when
/// ||Ax - b|| <= tol ||b||. Throws NotConvergedError on breakdown
/// (non-positive curvature) or when max_iters is exhausted.
CgResult cg_solve(const SpMat& A, const VecX& b, double tol, int max_iters,
                  Preconditioner precond = Preconditioner::IncompleteCholesky,
                  const VecX* x0 = nullptr);

struct KktSolution {
  VecX primal;
  VecX lambda;
  /// True when the (1,1) block failed an LDL^T with positive pivots; the
  /// solve then fell back to LU on the full bordered matrix.
  bool h_indefinite = false;
  double rel_residual = 0.0;
};

/// Solves [H J^T; J 0] [p; l] = [a; b] with H sparse symmetric and J having
/// one row per constraint. Throws SingularSystem if the bordered matrix is
/// singular (for instance a zero constraint row).
KktSolution ldl_solve(const SpMat& H, const SpMat& J, const VecX& a, const VecX& b);

/// Assembles the bordered matrix explicitly (used by tests and the LU fallback).
SpMat bordered_matrix(const SpMat& H, const SpMat& J);

}  // namespace pfsim
