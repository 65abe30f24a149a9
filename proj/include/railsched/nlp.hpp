#pragma once

#include "railsched/milp.hpp"
#include "railsched/model.hpp"

namespace railsched::mip {

struct PolishOptions {
  int max_iters = 50;
  double step_tol = 1e-3;   // stop when the accepted step is below this, s
  double tr_init = 60.0;    // trust-region half width on time columns, s
  double tr_min = 1e-4;
  double tr_grow = 1.6;
  double tr_shrink = 0.5;
};

// Sequential linearization of a bilinear objective over a fixed polytope,
// with a box trust region on the given time columns.  Only improving steps
// are accepted, so the true objective is non-increasing.  The start point is
// projected onto the polytope first when it is not feasible.
SolveResult polish_nlp(const LpProblem& lp, const model::ObjectiveDescriptor& obj,
                       const std::vector<int>& time_cols, const VectorXd& start,
                       const SolverConfig& cfg = {}, const PolishOptions& popt = {},
                       std::vector<double>* objective_trace = nullptr);

}  // namespace railsched::mip
