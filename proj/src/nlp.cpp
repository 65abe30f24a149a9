#include "railsched/nlp.hpp"

#include <chrono>
#include <cmath>

namespace railsched::mip {

SolveResult polish_nlp(const LpProblem& lp, const model::ObjectiveDescriptor& obj,
                       const std::vector<int>& time_cols, const VectorXd& start,
                       const SolverConfig& cfg, const PolishOptions& popt,
                       std::vector<double>* objective_trace) {
  const auto t0 = std::chrono::steady_clock::now();
  SolveResult res;
  SimplexOptions sopt;
  sopt.feas_tol = cfg.feas_tol;

  VectorXd x = start;
  if (lp_violation(lp, x) > 1e2 * cfg.feas_tol) {
    // Phase-1 projection: any feasible point of the polytope.
    LpProblem feas = lp;
    feas.c = VectorXd::Zero(lp.cols());
    auto r = solve_lp(feas, sopt);
    res.stats.continuous_solves++;
    res.stats.simplex_iters += r.iterations;
    res.stats.det_time += r.det_time;
    if (r.status != LpStatus::Optimal) {
      res.status = SolveStatus::Infeasible;
      res.note = "polish start projection failed";
      return res;
    }
    x = r.x;
  }

  double f = obj.eval(x);
  if (objective_trace) objective_trace->push_back(f);
  double radius = popt.tr_init;
  Basis warm;
  bool have_warm = false;

  for (int it = 0; it < popt.max_iters; ++it) {
    if (res.stats.det_time >= cfg.time_limit_s) break;
    VectorXd g = obj.grad(x);
    LpProblem sub = lp;
    sub.c = g;
    for (int c : time_cols) {
      sub.lo[c] = std::max(lp.lo[c], x[c] - radius);
      sub.hi[c] = std::min(lp.hi[c], x[c] + radius);
    }
    auto r = solve_lp(sub, sopt, have_warm ? &warm : nullptr);
    res.stats.continuous_solves++;
    res.stats.simplex_iters += r.iterations;
    res.stats.det_time += r.det_time;
    if (r.status != LpStatus::Optimal) break;
    warm = r.basis;
    have_warm = true;

    const double f_new = obj.eval(r.x);
    double step = 0;
    for (int c : time_cols) step = std::max(step, std::abs(r.x[c] - x[c]));
    if (f_new <= f - 1e-12) {
      x = r.x;
      f = f_new;
      if (objective_trace) objective_trace->push_back(f);
      radius = std::min(radius * popt.tr_grow, popt.tr_init * 8);
      if (step < popt.step_tol) break;
    } else {
      radius *= popt.tr_shrink;
      if (radius < popt.tr_min) break;
    }
  }

  res.x = x;
  res.objective = f;
  res.bound = f;
  res.gap = 0;
  res.status = SolveStatus::Optimal;
  res.stats.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace railsched::mip
