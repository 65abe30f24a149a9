#include "railsched/presolve.hpp"

#include <cmath>
#include <sstream>

namespace railsched::presolve {

using model::OrderPair;
using model::Slot;

PresolveMask apply_presolve(const model::StandardFormProblem& sp, TimeSec t_now,
                            const model::InitialCondition& past) {
  PresolveMask mask;
  const auto& net = *sp.network;
  const auto& tt = net.timetable;

  // 5.1: departure order already decided by the departure windows.
  for (const auto& [pr, col] : sp.col_xi) {
    const auto& [a, b] = pr;
    const double t_roll = net.platform(b.p).t_roll;
    if (double(tt.d_pre(a.p, a.k)) >= double(tt.d_pre(b.p, b.k + 1)) + t_roll) {
      mask.fixed_xi[pr] = 1;
      mask.fixed_values[col] = 1;
      mask.fixed_rule[col] = Rule::OrderWindow;
    } else if (double(tt.d_pre(a.p, a.k + 1)) <= double(tt.d_pre(b.p, b.k)) + t_roll) {
      mask.fixed_xi[pr] = 0;
      mask.fixed_values[col] = 0;
      mask.fixed_rule[col] = Rule::OrderWindow;
    }
  }

  // 5.2: propagate fixings through the order-monotonicity chain
  // xi(k+1) >= xi(k) for the same opposite slot.
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& [pr, col] : sp.col_xi) {
      if (mask.fixed_xi.count(pr)) continue;
      const OrderPair below{{pr.first.p, pr.first.k - 1}, pr.second};
      const OrderPair above{{pr.first.p, pr.first.k + 1}, pr.second};
      auto fb = mask.fixed_xi.find(below);
      auto fa = mask.fixed_xi.find(above);
      int v = -1;
      if (fb != mask.fixed_xi.end() && fb->second == 1 && sp.col_xi.count(below)) v = 1;
      if (fa != mask.fixed_xi.end() && fa->second == 0 && sp.col_xi.count(above)) v = 0;
      if (v >= 0) {
        mask.fixed_xi[pr] = v;
        mask.fixed_values[col] = v;
        mask.fixed_rule[col] = Rule::OrderMonotone;
        changed = true;
      }
    }
  }

  // 5.3: no depot link, no composition change.
  for (const auto& [s, col] : sp.col_y) {
    if (net.platform(s.p).sigma) continue;
    mask.fixed_y[s] = 0;
    mask.fixed_values[col] = 0;
    mask.fixed_rule[col] = Rule::NoDepot;
  }

  // 5.4: services that already departed keep their applied exchange.
  for (const auto& [s, col] : sp.col_y) {
    if (mask.fixed_y.count(s)) continue;
    auto it = past.history.find(s);
    if (it == past.history.end()) continue;
    if (it->second.d > double(t_now) + 1e-9) continue;
    const double v = double(it->second.y);
    if (v < sp.lp.lo[col] - 1e-9 || v > sp.lp.hi[col] + 1e-9)
      throw model::InfeasibleInputError("presolve 5.4: applied exchange conflicts with bounds");
    mask.fixed_y[s] = it->second.y;
    mask.fixed_values[col] = v;
    mask.fixed_rule[col] = Rule::AlreadyDeparted;
    // Auxiliaries follow the frozen value.
    mask.fixed_values[sp.col_o.at(s)] = std::abs(v);
    mask.fixed_values[sp.col_gamma.at(s)] = v >= 0 ? 1 : 0;
    mask.fixed_values[sp.col_eta.at(s)] = v != 0 ? 1 : 0;
  }

  for (int j = 0; j < sp.lp.cols(); ++j) {
    if (!sp.is_int[size_t(j)]) continue;
    if (mask.fixed_values.count(j)) continue;
    if (sp.lp.lo[j] == sp.lp.hi[j]) continue;  // pinned at build time
    mask.free_integer_cols.push_back(j);
  }
  return mask;
}

void apply_mask(model::StandardFormProblem& sp, const PresolveMask& mask) {
  for (const auto& [c, v] : mask.fixed_values) {
    if (v < sp.lp.lo[c] - 1e-9 || v > sp.lp.hi[c] + 1e-9)
      throw model::InfeasibleInputError("presolve mask conflicts with column bounds");
    sp.lp.lo[c] = v;
    sp.lp.hi[c] = v;
  }
}

std::string dump_mask(const PresolveMask& mask, const model::StandardFormProblem& sp) {
  std::map<int, std::string> names;
  for (const auto& [name, info] : sp.var_index) names[info.col] = name;
  std::ostringstream out;
  for (const auto& [c, v] : mask.fixed_values) {
    auto rule = mask.fixed_rule.find(c);
    auto nm = names.find(c);
    out << (nm != names.end() ? nm->second : "col" + std::to_string(c)) << " = " << v;
    if (rule != mask.fixed_rule.end()) out << "  # rule 5." << (int(rule->second) - 50);
    out << "\n";
  }
  return out.str();
}

std::map<OrderPair, int> residual_xi_policy(const model::StandardFormProblem& sp,
                                            const PresolveMask& mask) {
  std::map<OrderPair, int> xi;
  const auto& net = *sp.network;
  const auto& tt = net.timetable;
  for (const auto& [pr, col] : sp.col_xi) {
    (void)col;
    auto it = mask.fixed_xi.find(pr);
    if (it != mask.fixed_xi.end()) {
      xi[pr] = it->second;
      continue;
    }
    const double lhs = double(tt.d_pre(pr.first.p, pr.first.k));
    const double rhs = double(tt.d_pre(pr.second.p, pr.second.k)) + net.platform(pr.second.p).t_roll;
    xi[pr] = lhs >= rhs ? 1 : 0;
  }
  return xi;
}

std::vector<OrderPair> xi_violations(const model::StandardFormProblem& sp,
                                     const std::map<OrderPair, int>& xi, const VectorXd& x) {
  std::vector<OrderPair> out;
  const auto& net = *sp.network;
  for (const auto& [pr, v] : xi) {
    const double d_a = x[sp.col_d.at(pr.first)];
    const double d_b = x[sp.col_d.at(pr.second)];
    const int want = d_a >= d_b + net.platform(pr.second.p).t_roll ? 1 : 0;
    if (want != v) out.push_back(pr);
  }
  return out;
}

}  // namespace railsched::presolve
