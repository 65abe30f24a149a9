#pragma once

#include <Eigen/SparseCore>
#include <cstdint>
#include <vector>

#include "railsched/types.hpp"

namespace railsched::mip {

// min c'x  s.t.  row_lo <= A x <= row_hi,  lo <= x <= hi.
// Equality rows have row_lo == row_hi; one-sided rows use +-inf.
struct LpProblem {
  Eigen::SparseMatrix<double> A;  // column-major
  VectorXd c;
  VectorXd lo, hi;          // column bounds
  VectorXd row_lo, row_hi;  // row activity bounds

  int rows() const { return int(A.rows()); }
  int cols() const { return int(A.cols()); }
  void set_dense(const MatrixXd& dense) { A = dense.sparseView(); }
};

enum class LpStatus { Optimal, Infeasible, Unbounded, IterLimit, Error };

// Simplex basis: m basic variable indices over [0, n+m) (structurals then row
// slacks), plus the rest position of every nonbasic variable.
struct Basis {
  std::vector<int> basic;
  std::vector<std::uint8_t> at_upper;  // per variable; ignored for basics
  bool empty() const { return basic.empty(); }
};

struct SimplexOptions {
  double feas_tol = 1e-7;
  double opt_tol = 1e-7;
  int max_iters = 50000;
  int refactor_every = 64;
};

struct LpResult {
  LpStatus status = LpStatus::Error;
  VectorXd x;  // structural values
  double objective = 0;
  Basis basis;
  long iterations = 0;
  double det_time = 0;  // deterministic cost-model seconds
};

LpResult solve_lp(const LpProblem& lp, const SimplexOptions& opt = {},
                  const Basis* warm = nullptr);

// Max violation of row activities and column bounds at x.
double lp_violation(const LpProblem& lp, const VectorXd& x);

// Deterministic cost model used for every "seconds" budget in the solver
// stack, so that limit-driven decisions replay identically across runs.
double det_seconds_per_iter(int m, int n);
double det_seconds_refactor(int m);

}  // namespace railsched::mip
