#include "railsched/milp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <memory>
#include <queue>
#include <cstdio>
#include <cstdlib>

namespace railsched::mip {

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal:
      return "optimal";
    case SolveStatus::FeasibleTimeLimit:
      return "feasible_time_limit";
    case SolveStatus::Infeasible:
      return "infeasible";
    case SolveStatus::InfeasibleUnproven:
      return "infeasible_unproven";
    case SolveStatus::Unbounded:
      return "unbounded";
    case SolveStatus::Error:
      return "error";
  }
  return "?";
}

IntegerProgram relaxation_of(const model::StandardFormProblem& sp) {
  return {sp.lp, sp.is_int};
}

namespace {

struct Node {
  double bound = -kInf;
  long id = 0;
  // Bound tightenings relative to the root problem.
  std::vector<std::tuple<int, double, double>> changes;  // (col, lo, hi)
  Basis basis;
};

struct NodeOrder {
  bool operator()(const std::shared_ptr<Node>& a, const std::shared_ptr<Node>& b) const {
    if (a->bound != b->bound) return a->bound > b->bound;  // min-heap on bound
    return a->id > b->id;                                  // FIFO tie-break
  }
};

double rel_gap(double incumbent, double bound) {
  if (!std::isfinite(incumbent)) return kInf;
  return (incumbent - bound) / std::max(1e-9, std::abs(incumbent));
}

}  // namespace

SolveResult solve_milp(const IntegerProgram& ip, const SolverConfig& cfg,
                       const VectorXd* warm_start) {
  const auto t0 = std::chrono::steady_clock::now();
  SolveResult res;
  SimplexOptions sopt;
  sopt.feas_tol = cfg.feas_tol;

  const int n = ip.lp.cols();
  std::vector<int> int_cols;
  for (int j = 0; j < n; ++j)
    if (ip.is_int[size_t(j)]) int_cols.push_back(j);

  auto apply = [&](const Node& node) {
    LpProblem lp = ip.lp;
    for (const auto& [c, l, h] : node.changes) {
      lp.lo[c] = std::max(lp.lo[c], l);
      lp.hi[c] = std::min(lp.hi[c], h);
    }
    return lp;
  };

  auto is_integral = [&](const VectorXd& x) {
    for (int j : int_cols)
      if (std::abs(x[j] - std::round(x[j])) > cfg.int_tol) return false;
    return true;
  };

  double incumbent_obj = kInf;
  VectorXd incumbent_x;
  bool have_incumbent = false;

  // Rounding heuristic: pin every integer column at the rounded relaxation
  // value and complete the continuous part.  Cheap incumbents drive pruning
  // and give the early-termination rule something to work with.
  auto try_rounding = [&](const VectorXd& frac) {
    LpProblem lp = ip.lp;
    for (int j : int_cols) {
      const double v = std::clamp(std::round(frac[j]), lp.lo[j], lp.hi[j]);
      lp.lo[j] = lp.hi[j] = v;
    }
    auto r = solve_lp(lp, sopt);
    res.stats.continuous_solves++;
    res.stats.simplex_iters += r.iterations;
    res.stats.det_time += r.det_time;
    if (r.status == LpStatus::Optimal && r.objective < incumbent_obj) {
      incumbent_obj = r.objective;
      incumbent_x = r.x;
      have_incumbent = true;
    }
  };

  // Warm start: validate integrality, then solve the continuous subproblem
  // with those integers pinned.
  if (warm_start) {
    if (int(warm_start->size()) != n) {
      res.note = "warm start rejected: wrong dimension";
    } else {
      bool integral = true;
      for (int j : int_cols)
        if (std::abs((*warm_start)[j] - std::round((*warm_start)[j])) > cfg.int_tol) {
          integral = false;
          break;
        }
      if (!integral) {
        res.note = "warm start rejected: fractional integer column";
      } else {
        LpProblem lp = ip.lp;
        for (int j : int_cols) {
          const double v = std::round((*warm_start)[j]);
          if (v < lp.lo[j] - cfg.int_tol || v > lp.hi[j] + cfg.int_tol) {
            integral = false;
            break;
          }
          lp.lo[j] = lp.hi[j] = v;
        }
        if (!integral) {
          res.note = "warm start rejected: integer value outside bounds";
        } else {
          auto r = solve_lp(lp, sopt);
          res.stats.continuous_solves++;
          res.stats.simplex_iters += r.iterations;
          res.stats.det_time += r.det_time;
          if (r.status == LpStatus::Optimal) {
            incumbent_obj = r.objective;
            incumbent_x = r.x;
            have_incumbent = true;
          } else {
            res.note = "warm start rejected: continuous completion infeasible";
          }
        }
      }
    }
  }

  std::priority_queue<std::shared_ptr<Node>, std::vector<std::shared_ptr<Node>>, NodeOrder> open;
  long next_id = 0;
  {
    auto root = std::make_shared<Node>();
    root->bound = -kInf;
    root->id = next_id++;
    open.push(root);
  }

  double global_bound = -kInf;
  bool pruned_by_limit = false;
  // Early-termination samples: (det_time, gap).
  std::deque<std::pair<double, double>> gap_trace;

  auto current_bound = [&](double top_bound) {
    return have_incumbent ? std::min(top_bound, incumbent_obj) : top_bound;
  };

  while (!open.empty()) {
    if (res.stats.det_time >= cfg.time_limit_s || res.stats.nodes >= cfg.max_nodes) {
      pruned_by_limit = true;
      break;
    }
    auto node = open.top();
    global_bound = current_bound(node->bound);
    if (have_incumbent) {
      const double g = rel_gap(incumbent_obj, global_bound);
      gap_trace.emplace_back(res.stats.det_time, g);
      while (gap_trace.size() > 1 &&
             gap_trace.front().first < res.stats.det_time - cfg.early_term_window_s - 1e-9)
        gap_trace.pop_front();
      if (g <= cfg.gap_tol) break;
      if (res.stats.det_time >= cfg.early_term_window_s &&
          gap_trace.front().first <= res.stats.det_time - cfg.early_term_window_s + 1e-9 &&
          gap_trace.front().second - g < cfg.early_term_min_drop) {
        pruned_by_limit = true;
        break;
      }
    }
    open.pop();
    if (have_incumbent &&
        node->bound >= incumbent_obj - cfg.gap_tol * std::max(1.0, std::abs(incumbent_obj)))
      continue;

    LpProblem lp = apply(*node);
    auto r = solve_lp(lp, sopt, node->basis.empty() ? nullptr : &node->basis);
    res.stats.nodes++;
    res.stats.continuous_solves++;
    res.stats.simplex_iters += r.iterations;
    res.stats.det_time += r.det_time;
    if (r.status == LpStatus::Infeasible) continue;
    if (r.status == LpStatus::Unbounded) {
      // A bounded-variable model cannot be unbounded unless the root is.
      res.status = SolveStatus::Unbounded;
      return res;
    }
    if (r.status != LpStatus::Optimal) {
      if (const char* dbg = std::getenv("RAILSCHED_DEBUG_MILP")) {
        (void)dbg;
        std::fprintf(stderr, "node %ld lp status=%d iters=%ld\n", res.stats.nodes, int(r.status),
                     r.iterations);
      }
      res.status = SolveStatus::Error;
      res.note = "node LP failed";
      return res;
    }
    if (have_incumbent &&
        r.objective >= incumbent_obj - cfg.gap_tol * std::max(1.0, std::abs(incumbent_obj)))
      continue;

    if (is_integral(r.x)) {
      incumbent_obj = r.objective;
      incumbent_x = r.x;
      have_incumbent = true;
      continue;
    }
    if (res.stats.nodes == 1 || res.stats.nodes % 64 == 0) try_rounding(r.x);
    if (have_incumbent &&
        r.objective >= incumbent_obj - cfg.gap_tol * std::max(1.0, std::abs(incumbent_obj)))
      continue;

    // Most fractional integer column, ties by lowest index.
    int branch_col = -1;
    double best_frac = -1;
    for (int j : int_cols) {
      const double f = std::abs(r.x[j] - std::round(r.x[j]));
      if (f <= cfg.int_tol) continue;
      const double dist = std::min(r.x[j] - std::floor(r.x[j]), std::ceil(r.x[j]) - r.x[j]);
      if (dist > best_frac + 1e-12) {
        best_frac = dist;
        branch_col = j;
      }
    }
    if (branch_col < 0) {
      incumbent_obj = r.objective;
      incumbent_x = r.x;
      have_incumbent = true;
      continue;
    }
    const double v = r.x[branch_col];
    auto down = std::make_shared<Node>();
    down->changes = node->changes;
    down->changes.emplace_back(branch_col, -kInf, std::floor(v));
    down->bound = r.objective;
    down->basis = r.basis;
    down->id = next_id++;
    auto up = std::make_shared<Node>();
    up->changes = node->changes;
    up->changes.emplace_back(branch_col, std::ceil(v), kInf);
    up->bound = r.objective;
    up->basis = r.basis;
    up->id = next_id++;
    open.push(down);
    open.push(up);
  }

  res.stats.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (have_incumbent) {
    res.x = incumbent_x;
    res.objective = incumbent_obj;
    if (open.empty() || !pruned_by_limit) {
      // Exhausted (or closed by gap): proven within tolerance.
      res.bound = open.empty() ? incumbent_obj : current_bound(open.top()->bound);
      res.gap = rel_gap(incumbent_obj, res.bound);
      res.status = SolveStatus::Optimal;
      if (res.gap < 0) res.gap = 0;
    } else {
      res.bound = current_bound(open.top()->bound);
      res.gap = rel_gap(incumbent_obj, res.bound);
      res.status = SolveStatus::FeasibleTimeLimit;
    }
    return res;
  }
  res.status = pruned_by_limit ? SolveStatus::InfeasibleUnproven : SolveStatus::Infeasible;
  return res;
}

}  // namespace railsched::mip
