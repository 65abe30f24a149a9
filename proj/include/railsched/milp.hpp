#pragma once

#include <optional>
#include <string>

#include "railsched/lp.hpp"
#include "railsched/model.hpp"
#include "railsched/types.hpp"

namespace railsched::mip {

enum class SolveStatus {
  Optimal,
  FeasibleTimeLimit,
  Infeasible,
  InfeasibleUnproven,  // limit hit with no incumbent
  Unbounded,
  Error,
};

const char* to_string(SolveStatus s);

struct SolveStats {
  long nodes = 0;
  long simplex_iters = 0;
  long continuous_solves = 0;
  double det_time = 0;   // deterministic model seconds; drives every limit
  double wall_time = 0;  // measured, reporting only
};

struct SolveResult {
  SolveStatus status = SolveStatus::Error;
  VectorXd x;
  double objective = kInf;
  double bound = -kInf;
  double gap = kInf;  // relative, vs best bound
  SolveStats stats;
  std::string note;
};

struct SolverConfig {
  double gap_tol = 1e-6;
  double feas_tol = 1e-7;
  double int_tol = 1e-6;
  double time_limit_s = 240;  // deterministic seconds
  double early_term_window_s = 10;
  double early_term_min_drop = 0.005;
  std::uint64_t seed = 0;
  long max_nodes = 500000;
};

struct IntegerProgram {
  LpProblem lp;
  std::vector<std::uint8_t> is_int;
};

IntegerProgram relaxation_of(const model::StandardFormProblem& sp);

// Best-bound branch and bound over the LP relaxation.  Branching picks the
// most fractional integer column (ties by lowest index); nodes tie-break by
// creation order.  The early-termination rule returns the incumbent when the
// gap fails to drop by early_term_min_drop within early_term_window_s.
SolveResult solve_milp(const IntegerProgram& ip, const SolverConfig& cfg,
                       const VectorXd* warm_start = nullptr);

}  // namespace railsched::mip
