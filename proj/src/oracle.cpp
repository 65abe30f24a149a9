#include "railsched/oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace railsched::mip {

SolveResult brute_force_oracle(const IntegerProgram& ip, const SolverConfig& cfg) {
  SolveResult res;
  const int n = ip.lp.cols();
  std::vector<int> cols;
  for (int j = 0; j < n; ++j)
    if (ip.is_int[size_t(j)]) cols.push_back(j);
  if (cols.size() > 12)
    throw std::invalid_argument("brute_force_oracle: more than 12 integer columns");

  std::vector<long> base(cols.size()), width(cols.size());
  double combos = 1;
  for (size_t i = 0; i < cols.size(); ++i) {
    const int j = cols[i];
    if (!std::isfinite(ip.lp.lo[j]) || !std::isfinite(ip.lp.hi[j]))
      throw std::invalid_argument("brute_force_oracle: unbounded integer column");
    base[i] = llround(std::ceil(ip.lp.lo[j] - 1e-9));
    width[i] = llround(std::floor(ip.lp.hi[j] + 1e-9)) - base[i] + 1;
    if (width[i] <= 0) {
      res.status = SolveStatus::Infeasible;
      return res;
    }
    combos *= double(width[i]);
    if (combos > double(1 << 22))
      throw std::invalid_argument("brute_force_oracle: assignment space too large");
  }

  SimplexOptions sopt;
  sopt.feas_tol = cfg.feas_tol;
  Basis warm;
  bool have_warm = false;
  std::vector<long> idx(cols.size(), 0);
  bool done = false;
  while (!done) {
    LpProblem lp = ip.lp;
    for (size_t i = 0; i < cols.size(); ++i) {
      const double v = double(base[i] + idx[i]);
      lp.lo[cols[i]] = lp.hi[cols[i]] = v;
    }
    auto r = solve_lp(lp, sopt, have_warm ? &warm : nullptr);
    res.stats.continuous_solves++;
    res.stats.simplex_iters += r.iterations;
    res.stats.det_time += r.det_time;
    if (r.status == LpStatus::Optimal) {
      warm = r.basis;
      have_warm = true;
      if (r.objective < res.objective) {
        res.objective = r.objective;
        res.x = r.x;
        res.status = SolveStatus::Optimal;
      }
    }
    // Lexicographic advance.
    done = true;
    for (size_t i = 0; i < idx.size(); ++i) {
      if (++idx[i] < width[i]) {
        done = false;
        break;
      }
      idx[i] = 0;
    }
    if (cols.empty()) break;
  }
  if (res.status == SolveStatus::Optimal) {
    res.bound = res.objective;
    res.gap = 0;
  } else {
    res.status = SolveStatus::Infeasible;
  }
  return res;
}

}  // namespace railsched::mip
