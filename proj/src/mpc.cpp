#include "railsched/mpc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "railsched/nlp.hpp"

namespace railsched::mpc {

using model::AppliedSlot;
using model::IntegerAssignment;
using model::Slot;
using model::StandardFormProblem;

StrategyKind parse_strategy(const std::string& name) {
  if (name == "benchmark") return StrategyKind::Benchmark;
  if (name == "minlp") return StrategyKind::Minlp;
  if (name == "warmstart_minlp") return StrategyKind::WarmstartMinlp;
  if (name == "milp") return StrategyKind::Milp;
  if (name == "learning_nlp") return StrategyKind::LearningNlp;
  if (name == "learning_lp") return StrategyKind::LearningLp;
  if (name == "fallback_only") return StrategyKind::FallbackOnly;
  throw ConfigError("unknown strategy: " + name);
}

const char* to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::Benchmark:
      return "benchmark";
    case StrategyKind::Minlp:
      return "minlp";
    case StrategyKind::WarmstartMinlp:
      return "warmstart_minlp";
    case StrategyKind::Milp:
      return "milp";
    case StrategyKind::LearningNlp:
      return "learning_nlp";
    case StrategyKind::LearningLp:
      return "learning_lp";
    case StrategyKind::FallbackOnly:
      return "fallback_only";
  }
  return "?";
}

namespace {

// Circulation delay (in control steps) of the wrap into direction-start q.
int wrap_delta(const net::Network& net, PlatformId q) { return net.link_delta(q); }

int history_depth(const net::Network& net) {
  int d = 2;
  for (const auto& p : net.platforms)
    if (net.is_direction_start(p.id)) d = std::max(d, net.link_delta(p.id));
  return d + 6;
}

}  // namespace

MpcState initial_state(const net::Network& net, SlotIdx start_kappa) {
  MpcState st;
  st.kappa = start_kappa;
  for (const auto& p : net.platforms) st.waiting[p.id] = 0;
  for (const auto& d : net.depots) st.depot_stock[d.id] = d.n_train;
  for (const auto& line : net.lines) {
    auto& dq = st.in_flight[line.id];
    for (PlatformId pid : line.platforms)
      if (net.is_direction_start(pid))
        for (int i = 0; i < wrap_delta(net, pid); ++i) dq.push_back(net.fleet.l_regular);
  }
  st.fleet_baseline = fleet_units(st, net);
  return st;
}

std::int64_t fleet_units(const MpcState& state, const net::Network& net) {
  std::int64_t total = 0;
  for (const auto& [line, dq] : state.in_flight) {
    (void)line;
    for (int l : dq) total += l;
  }
  for (const auto& [z, s] : state.depot_stock) {
    (void)z;
    total += s;
  }
  return total;
}

std::int64_t conservation_residual(const MpcState& state, PlatformId p) {
  auto get = [&](const std::map<PlatformId, std::int64_t>& m) {
    auto it = m.find(p);
    return it == m.end() ? std::int64_t(0) : it->second;
  };
  return get(state.cum_arrivals) + get(state.cum_trans_in) - get(state.cum_departed) -
         get(state.waiting);
}

StageOutcome plant_advance(MpcState& state, const net::Network& net,
                           const demand::DemandScenario& sc,
                           const std::map<PlatformId, AppliedSlot>& stage) {
  const auto& tt = net.timetable;
  const SlotIdx k = state.kappa;
  StageOutcome out;

  std::vector<PlatformId> order;
  for (const auto& p : net.platforms) order.push_back(p.id);
  std::sort(order.begin(), order.end(), [&](PlatformId a, PlatformId b) {
    return std::tie(tt.first_dep.at(a), a) < std::tie(tt.first_dep.at(b), b);
  });

  for (PlatformId p : order) {
    const auto& pl = net.platform(p);
    const auto& ap = stage.at(p);
    const Slot s{p, k};
    const double d_pre = double(tt.d_pre(p, k));
    const double d_next = double(tt.d_pre(p, k + 1));

    const std::int64_t count_next = sc.count(p, k + 1);
    TimeSec dt = TimeSec(std::floor(ap.d - d_pre));
    dt = std::clamp<TimeSec>(dt, 0, tt.t_ctrl - 1);
    const std::int64_t early = count_next * dt / tt.t_ctrl;

    std::int64_t bucket = 0;
    if (auto it = state.trans_bucket.find(s); it != state.trans_bucket.end()) {
      bucket = it->second;
      state.trans_bucket.erase(it);
    }
    const std::int64_t n_before = state.waiting.at(p) + early + bucket;
    const std::int64_t cap = std::int64_t(ap.l) * net.fleet.c_max;
    const std::int64_t depart = std::min(n_before, cap);
    const std::int64_t n_after = n_before - depart;

    out.j_pass += double(state.waiting.at(p)) * (ap.d - d_pre) + double(n_after) * (d_next - ap.d);
    out.j_cost += double(ap.l) * pl.e_energy + (ap.y != 0 ? pl.e_add : 0.0);
    out.boarded += depart;

    state.waiting[p] = n_after + (count_next - early);
    state.cum_arrivals[p] += count_next;
    state.cum_trans_in[p] += bucket;
    state.cum_departed[p] += depart;

    // Riders alight at the next platform; a share walks to its transfer
    // targets, booked on the connection the predetermined timetable implies.
    const PlatformId q = net.succ(p);
    const SlotIdx k_q = net.is_direction_start(q) ? k + net.link_delta(q) : k;
    for (const auto& tr : tt.transfers) {
      if (tr.from != q || tr.beta <= 0) continue;
      if (k_q >= tt.horizon_len) continue;
      auto tgt = net::chi_target(net, q, k_q, tr.to);
      if (!tgt) continue;
      const std::int64_t moved = std::int64_t(std::floor(tr.beta * double(depart) + 1e-9));
      if (moved > 0) state.trans_bucket[{tr.to, *tgt}] += moved;
    }

    if (pl.sigma) state.depot_stock[*pl.depot_id] -= ap.y;

    AppliedSlot rec = ap;
    rec.n_depart = double(depart);
    state.applied[s] = rec;
  }

  // Rotate the circulating stock through the turnaround queues.
  for (const auto& line : net.lines) {
    auto& dq = state.in_flight[line.id];
    for (PlatformId pid : line.platforms) {
      if (!net.is_direction_start(pid) || wrap_delta(net, pid) == 0) continue;
      dq.push_back(stage.at(net.pred(pid)).l);
      dq.pop_front();
    }
  }

  // Trim old history.
  const SlotIdx keep_from = k - history_depth(net);
  for (auto it = state.applied.begin(); it != state.applied.end();)
    it = it->first.k < keep_from ? state.applied.erase(it) : std::next(it);

  state.kappa = k + 1;
  return out;
}

IntegerAssignment lemma1_fallback(const StandardFormProblem& sp,
                                  const presolve::PresolveMask& mask) {
  IntegerAssignment ia;
  for (const auto& [s, c] : sp.col_y)
    ia.y[s] = sp.lp.lo[c] == sp.lp.hi[c] ? int(llround(sp.lp.lo[c])) : 0;
  ia.xi = presolve::residual_xi_policy(sp, mask);
  return ia;
}

double EpisodeLog::total_objective() const {
  double s = 0;
  for (const auto& r : steps) s += r.objective;
  return s;
}

bool EpisodeLog::all_feasible() const {
  for (const auto& r : steps)
    if (!r.feasible) return false;
  return true;
}

Controller::Controller(const net::Network& net, const demand::DemandScenario& sc,
                       StrategyConfig strategy, mip::SolverConfig solver, IntegerOracle* oracle)
    : net_(net), sc_(sc), strat_(strategy), solver_(solver), oracle_(oracle) {
  if ((strat_.kind == StrategyKind::LearningLp || strat_.kind == StrategyKind::LearningNlp) &&
      oracle_ == nullptr)
    throw std::invalid_argument("learning strategy needs an integer oracle");
  state_ = initial_state(net_, 0);
}

void Controller::reset(SlotIdx start_kappa) {
  state_ = initial_state(net_, start_kappa);
  log_ = EpisodeLog{};
  log_.strategy = to_string(strat_.kind);
  log_.scenario_seed = sc_.seed;
  log_.start_kappa = start_kappa;
  prev_tail_.reset();
  if (oracle_) oracle_->episode_reset();
}

model::InitialCondition Controller::condition() const {
  model::InitialCondition init;
  for (const auto& [p, w] : state_.waiting) init.waiting[p] = double(w);
  init.history = state_.applied;
  init.depot_stock = state_.depot_stock;
  return init;
}

StandardFormProblem Controller::build_window() const {
  model::BuildInputs in;
  in.network = &net_;
  in.scenario = &sc_;
  in.k0 = state_.kappa;
  in.n_steps = strat_.horizon;
  in.weights = strat_.weights;
  in.mode = model::ObjectiveMode::Linearized;
  auto init = condition();
  in.init = &init;
  return model::build_problem(in);
}

std::optional<std::pair<VectorXd, double>> Controller::complete(const StandardFormProblem& sp,
                                                                const IntegerAssignment& ia,
                                                                bool relax_order_rows,
                                                                mip::SolveStats& stats) const {
  mip::SimplexOptions sopt;
  sopt.feas_tol = solver_.feas_tol;
  mip::LpProblem lp;
  try {
    lp = model::continuous_restriction(sp, ia, relax_order_rows);
  } catch (const std::invalid_argument&) {
    return std::nullopt;
  }
  lp.c = sp.linearized_objective.linear;
  auto r = mip::solve_lp(lp, sopt);
  stats.continuous_solves++;
  stats.simplex_iters += r.iterations;
  stats.det_time += r.det_time;
  if (r.status != mip::LpStatus::Optimal) return std::nullopt;

  // Lexicographic second stage: punctual departures among cost-optimal plans.
  const int n = lp.cols();
  const int m = lp.rows();
  mip::LpProblem lex;
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(size_t(lp.A.nonZeros()) + size_t(n));
  for (int j = 0; j < n; ++j)
    for (Eigen::SparseMatrix<double>::InnerIterator it(lp.A, j); it; ++it)
      trips.emplace_back(int(it.row()), j, it.value());
  for (int j = 0; j < n; ++j)
    if (lp.c[j] != 0) trips.emplace_back(m, j, lp.c[j]);
  lex.A.resize(m + 1, n);
  lex.A.setFromTriplets(trips.begin(), trips.end());
  lex.lo = lp.lo;
  lex.hi = lp.hi;
  lex.row_lo = VectorXd::Constant(m + 1, -kInf);
  lex.row_lo.head(m) = lp.row_lo;
  lex.row_hi = VectorXd::Constant(m + 1, r.objective + 1e-9 * std::max(1.0, std::abs(r.objective)));
  lex.row_hi.head(m) = lp.row_hi;
  lex.c = VectorXd::Zero(n);
  for (const auto& [s, c] : sp.col_d) {
    (void)s;
    if (lp.lo[c] != lp.hi[c]) lex.c[c] = 1.0;
  }
  mip::Basis warm = r.basis;
  warm.basic.push_back(n + m);  // slack of the appended cost row
  warm.at_upper.push_back(0);
  auto r2 = mip::solve_lp(lex, sopt, &warm);
  stats.continuous_solves++;
  stats.simplex_iters += r2.iterations;
  stats.det_time += r2.det_time;
  if (r2.status == mip::LpStatus::Optimal) return std::make_pair(r2.x, lp.c.dot(r2.x));
  return std::make_pair(r.x, r.objective);
}

Controller::Plan Controller::solve_window(StandardFormProblem& sp,
                                          const presolve::PresolveMask& mask,
                                          mip::SolveStats& stats) {
  Plan plan;
  const auto kind = strat_.kind;
  const bool nlp_kind = kind == StrategyKind::Minlp || kind == StrategyKind::WarmstartMinlp ||
                        kind == StrategyKind::Benchmark || kind == StrategyKind::LearningNlp;

  // Continuous completion of one assignment: punctual LP, then (for the
  // nonlinear strategies) the trust-region polish.
  auto pipeline = [&](const IntegerAssignment& ia)
      -> std::optional<std::pair<VectorXd, double>> {
    auto c = complete(sp, ia, true, stats);
    if (!c) return std::nullopt;
    if (nlp_kind) {
      mip::SolverConfig pc = solver_;
      pc.time_limit_s = std::max(0.01, strat_.time_limit_s - stats.det_time);
      auto lp = model::continuous_restriction(sp, ia, true);
      auto r = mip::polish_nlp(lp, sp.nonlinear_objective, sp.time_cols, c->first, pc, {});
      stats.continuous_solves += r.stats.continuous_solves;
      stats.simplex_iters += r.stats.simplex_iters;
      stats.det_time += r.stats.det_time;
      if (r.status == mip::SolveStatus::Optimal &&
          sp.nonlinear_objective.eval(r.x) <= sp.nonlinear_objective.eval(c->first) + 1e-12)
        return std::make_pair(r.x, c->second);
    }
    return c;
  };

  // Order-rule consistency: flip disagreeing flags once and re-solve; report
  // failure when the disagreement persists.
  auto with_consistency = [&](IntegerAssignment ia, int& flips)
      -> std::optional<std::pair<IntegerAssignment, std::pair<VectorXd, double>>> {
    auto c = pipeline(ia);
    if (!c) return std::nullopt;
    auto viols = presolve::xi_violations(sp, ia.xi, c->first);
    if (viols.empty()) return std::make_pair(ia, *c);
    flips += int(viols.size());
    for (const auto& pr : viols) ia.xi[pr] = 1 - ia.xi[pr];
    auto c2 = pipeline(ia);
    if (!c2) return std::nullopt;
    if (!presolve::xi_violations(sp, ia.xi, c2->first).empty()) return std::nullopt;
    return std::make_pair(ia, *c2);
  };

  auto run_fallback = [&]() {
    plan.fallback = true;
    plan.ia = lemma1_fallback(sp, mask);
    auto done = with_consistency(plan.ia, plan.xi_flips);
    if (!done) {
      // Keep the feasible completion even if a flag disagreement persists;
      // feasibility is what Lemma 1 guarantees.
      auto c = pipeline(plan.ia);
      if (!c) {
        plan.feasible = false;  // a reachable state must never get here
        return;
      }
      done = std::make_pair(plan.ia, *c);
    }
    plan.ia = done->first;
    plan.x = done->second.first;
    plan.surrogate = done->second.second;
    plan.feasible = true;
  };

  switch (kind) {
    case StrategyKind::FallbackOnly: {
      run_fallback();
      return plan;
    }
    case StrategyKind::Milp:
    case StrategyKind::Minlp:
    case StrategyKind::WarmstartMinlp:
    case StrategyKind::Benchmark: {
      auto ip = mip::relaxation_of(sp);
      mip::SolverConfig cfg = solver_;
      cfg.time_limit_s = strat_.time_limit_s;
      cfg.early_term_window_s = strat_.early_term_window_s;
      cfg.early_term_min_drop = strat_.early_term_min_drop;

      VectorXd warm_x;
      bool have_warm = false;
      const bool wants_warm =
          kind == StrategyKind::WarmstartMinlp || kind == StrategyKind::Benchmark;
      if (wants_warm && prev_tail_) {
        IntegerAssignment ia_w;
        auto policy = presolve::residual_xi_policy(sp, mask);
        for (auto& [pr, v] : policy) {
          auto it = prev_tail_->xi.find(pr);
          if (it != prev_tail_->xi.end()) v = it->second;
        }
        ia_w.xi = policy;
        warm_x = VectorXd::Zero(sp.lp.cols());
        for (const auto& [s, c] : sp.col_y) {
          int v = 0;
          if (sp.lp.lo[c] == sp.lp.hi[c])
            v = int(llround(sp.lp.lo[c]));
          else if (auto it = prev_tail_->y.find(s); it != prev_tail_->y.end())
            v = it->second;
          warm_x[c] = v;
          warm_x[sp.col_o.at(s)] = std::abs(double(v));
          warm_x[sp.col_gamma.at(s)] = v >= 0 ? 1 : 0;
          warm_x[sp.col_eta.at(s)] = v != 0 ? 1 : 0;
        }
        for (const auto& [pr, c] : sp.col_xi) {
          const int v = sp.lp.lo[c] == sp.lp.hi[c] ? int(llround(sp.lp.lo[c])) : ia_w.xi.at(pr);
          warm_x[c] = v;
          warm_x[sp.col_v.at(pr)] = double(v) * warm_x[sp.col_y.at(pr.second)];
        }
        have_warm = true;
      }

      auto r = mip::solve_milp(ip, cfg, have_warm ? &warm_x : nullptr);
      stats.nodes += r.stats.nodes;
      stats.continuous_solves += r.stats.continuous_solves;
      stats.simplex_iters += r.stats.simplex_iters;
      stats.det_time += r.stats.det_time;
      plan.gap = r.gap;
      plan.nodes = r.stats.nodes;
      if (r.status != mip::SolveStatus::Optimal &&
          r.status != mip::SolveStatus::FeasibleTimeLimit) {
        run_fallback();
        return plan;
      }
      plan.ia = model::extract_assignment(sp, r.x);

      // Integer neighborhood: flip each free exchange by one unit, keep the
      // best true-cost completion.
      if (nlp_kind && strat_.one_opt) {
        auto best = pipeline(plan.ia);
        if (best) {
          double best_val = sp.nonlinear_objective.eval(best->first);
          for (const auto& [s, cy] : sp.col_y) {
            if (sp.lp.lo[cy] == sp.lp.hi[cy]) continue;
            if (stats.det_time >= strat_.time_limit_s) break;
            for (int delta : {-1, +1}) {
              IntegerAssignment ia2 = plan.ia;
              const int v = ia2.y.at(s) + delta;
              if (v < sp.lp.lo[cy] - 0.5 || v > sp.lp.hi[cy] + 0.5) continue;
              ia2.y[s] = v;
              auto c2 = pipeline(ia2);
              if (!c2) continue;
              const double val = sp.nonlinear_objective.eval(c2->first);
              if (val < best_val - 1e-12) {
                best_val = val;
                plan.ia = ia2;
              }
            }
          }
        }
      }

      auto done = with_consistency(plan.ia, plan.xi_flips);
      if (done) {
        plan.ia = done->first;
        plan.x = done->second.first;
        plan.surrogate = done->second.second;
      } else {
        // The raw solver point satisfies the retained order rows; keep it.
        plan.ia = model::extract_assignment(sp, r.x);
        plan.x = r.x;
        plan.surrogate = ip.lp.c.dot(r.x);
      }
      plan.feasible = true;
      return plan;
    }
    case StrategyKind::LearningLp:
    case StrategyKind::LearningNlp: {
      auto screen = [&](const IntegerAssignment& ia) {
        auto c = complete(sp, ia, true, stats);
        return c.has_value();
      };
      auto proposal = oracle_->propose(sp, state_, screen);
      plan.prefallback_feasible = proposal.has_value();
      if (!proposal) {
        run_fallback();
        return plan;
      }
      auto done = with_consistency(*proposal, plan.xi_flips);
      if (!done) {
        run_fallback();
        return plan;
      }
      plan.ia = done->first;
      plan.x = done->second.first;
      plan.surrogate = done->second.second;
      plan.feasible = true;
      return plan;
    }
  }
  run_fallback();
  return plan;
}

StepRecord Controller::step() {
  const auto t0 = std::chrono::steady_clock::now();
  StepRecord rec;
  rec.kappa = state_.kappa;

  TimeSec t_now = std::numeric_limits<TimeSec>::max();
  for (const auto& p : net_.platforms)
    t_now = std::min(t_now, net_.timetable.d_pre(p.id, state_.kappa));

  auto sp = build_window();
  auto init = condition();
  auto mask = presolve::apply_presolve(sp, t_now, init);
  presolve::apply_mask(sp, mask);

  if (observer_) observer_(sp, state_);

  mip::SolveStats stats;
  Plan plan = solve_window(sp, mask, stats);
  rec.solve_det_s = stats.det_time;
  rec.nodes = plan.nodes;
  rec.gap = plan.gap;
  rec.fallback_used = plan.fallback;
  rec.prefallback_feasible = plan.prefallback_feasible;
  rec.xi_flips = plan.xi_flips;
  rec.feasible = plan.feasible;

  std::map<PlatformId, AppliedSlot> stage;
  if (plan.feasible) {
    rec.incumbent_obj = sp.nonlinear_objective.eval(plan.x);
    for (const auto& p : net_.platforms) {
      const Slot s{p.id, state_.kappa};
      AppliedSlot ap;
      ap.d = plan.x[sp.col_d.at(s)];
      ap.a = plan.x[sp.col_a.at(s)];
      ap.l = int(llround(sp.ell.at(s).eval(plan.x)));
      ap.y = sp.col_y.count(s) ? int(llround(plan.x[sp.col_y.at(s)])) : 0;
      stage[p.id] = ap;
    }
    prev_tail_ = plan.ia;
  } else {
    // Defect path: keep the plant alive on the nominal schedule.
    for (const auto& p : net_.platforms) {
      const Slot s{p.id, state_.kappa};
      stage[p.id] = init.at(net_, s);
    }
    prev_tail_.reset();
  }

  auto outcome = plant_advance(state_, net_, sc_, stage);
  rec.objective = strat_.weights.w1 * outcome.j_pass + strat_.weights.w2 * outcome.j_cost;
  for (const auto& [p, ap] : stage) log_.schedule[{p, rec.kappa}] = state_.applied.at({p, rec.kappa});
  (void)outcome;
  rec.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  log_.steps.push_back(rec);
  return rec;
}

EpisodeLog Controller::run(SlotIdx start_kappa, int steps) {
  if (steps < 1) throw std::invalid_argument("run_episode: steps must be >= 1");
  reset(start_kappa);
  for (int i = 0; i < steps; ++i) step();
  return log_;
}

}  // namespace railsched::mpc
