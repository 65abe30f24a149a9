#pragma once

#include <map>
#include <string>
#include <vector>

#include "railsched/model.hpp"

namespace railsched::presolve {

// Which pruning rule fixed a column.
enum class Rule { OrderWindow = 51, OrderMonotone = 52, NoDepot = 53, AlreadyDeparted = 54 };

struct PresolveMask {
  std::map<model::OrderPair, int> fixed_xi;
  std::map<model::Slot, int> fixed_y;
  std::vector<int> free_integer_cols;     // integer columns left free, ascending
  std::map<int, double> fixed_values;     // column -> pinned value
  std::map<int, Rule> fixed_rule;
};

// Rules 5.1-5.4 over a built window problem.  t_now is the wall clock of the
// current control step; `past` supplies applied decisions for 5.4.
// Throws InfeasibleInputError when past decisions conflict with bounds.
PresolveMask apply_presolve(const model::StandardFormProblem& sp, TimeSec t_now,
                            const model::InitialCondition& past);

// Pin the masked columns into the problem bounds.
void apply_mask(model::StandardFormProblem& sp, const PresolveMask& mask);

// One line per fixed column with the rule that fixed it.
std::string dump_mask(const PresolveMask& mask, const model::StandardFormProblem& sp);

// Nominal-order completion: every xi still free after the mask is set by
// evaluating the order rule at the predetermined departures.
std::map<model::OrderPair, int> residual_xi_policy(const model::StandardFormProblem& sp,
                                                   const PresolveMask& mask);

// Order-rule consistency at actual departures; returns the violated pairs in
// deterministic order.
std::vector<model::OrderPair> xi_violations(const model::StandardFormProblem& sp,
                                            const std::map<model::OrderPair, int>& xi,
                                            const VectorXd& x);

}  // namespace railsched::presolve
