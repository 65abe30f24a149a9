#pragma once

#include <string>

#include "railsched/model.hpp"

namespace railsched::mps {

// Fixed-layout MPS rendering of the (linearized) problem, for cross-checking
// against external solvers.  Column names follow the d_p{pid}_k{idx} pattern
// of the variable index; ranged rows land in RANGES, integrality in
// INTORG/INTEND markers plus LI/UI bounds.
std::string write_mps(const model::StandardFormProblem& sp, const std::string& name = "RAILSCHED");

void save_mps(const model::StandardFormProblem& sp, const std::string& path,
              const std::string& name = "RAILSCHED");

}  // namespace railsched::mps
