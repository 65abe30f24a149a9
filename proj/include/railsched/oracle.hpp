#pragma once

#include "railsched/milp.hpp"

namespace railsched::mip {

// Exhaustive ground truth for small problems: enumerates every integer
// assignment over the integer columns' (finite) bound boxes and solves the
// continuous subproblem for each.  Hard cap of 12 integer columns; refuses
// larger inputs.
SolveResult brute_force_oracle(const IntegerProgram& ip, const SolverConfig& cfg = {});

}  // namespace railsched::mip
