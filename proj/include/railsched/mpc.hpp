#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "railsched/demand.hpp"
#include "railsched/milp.hpp"
#include "railsched/model.hpp"
#include "railsched/network.hpp"
#include "railsched/presolve.hpp"

namespace railsched::mpc {

enum class StrategyKind {
  Benchmark,
  Minlp,
  WarmstartMinlp,
  Milp,
  LearningNlp,
  LearningLp,
  FallbackOnly,
};

StrategyKind parse_strategy(const std::string& name);
const char* to_string(StrategyKind k);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::Milp;
  int horizon = 10;
  double time_limit_s = 240;  // deterministic seconds per step
  double early_term_window_s = 10;
  double early_term_min_drop = 0.005;
  int top_k = 3;              // feasibility screens per network
  bool one_opt = true;        // integer neighborhood after polishing
  model::ObjectiveWeights weights;
};

// Plant state: integer passenger ledgers, committed decisions, rolling stock.
struct MpcState {
  SlotIdx kappa = 0;
  std::map<PlatformId, std::int64_t> waiting;
  std::map<model::Slot, model::AppliedSlot> applied;
  std::map<DepotId, int> depot_stock;
  std::map<model::Slot, std::int64_t> trans_bucket;  // transfer-ins per target slot
  std::map<PlatformId, std::int64_t> cum_arrivals, cum_trans_in, cum_departed;
  std::map<int, std::deque<int>> in_flight;  // per line: circulating compositions
  std::int64_t fleet_baseline = 0;
};

MpcState initial_state(const net::Network& net, SlotIdx start_kappa);

// Total units on the line plus depot stock; constant over an episode.
std::int64_t fleet_units(const MpcState& state, const net::Network& net);
// arrivals + transfer-ins - departures - waiting; zero when conserved.
std::int64_t conservation_residual(const MpcState& state, PlatformId p);

struct StageOutcome {
  double j_pass = 0;
  double j_cost = 0;
  std::int64_t boarded = 0;
};

// Commit stage `state.kappa` decisions to the plant: realized integer
// boarding, transfer buckets, depot draws, fleet rotation.
StageOutcome plant_advance(MpcState& state, const net::Network& net,
                           const demand::DemandScenario& sc,
                           const std::map<PlatformId, model::AppliedSlot>& stage);

// Keep-composition recovery: zero exchanges everywhere, order flags at their
// nominal-timetable values.  Feasible from every reachable state.
model::IntegerAssignment lemma1_fallback(const model::StandardFormProblem& sp,
                                         const presolve::PresolveMask& mask);

// Integer proposal source for the learning strategies.  propose() returns the
// first assignment that passes the caller-supplied feasibility screen.
struct IntegerOracle {
  virtual ~IntegerOracle() = default;
  virtual std::optional<model::IntegerAssignment> propose(
      const model::StandardFormProblem& sp, const MpcState& state,
      const std::function<bool(const model::IntegerAssignment&)>& feasible) = 0;
  virtual void episode_reset() {}
};

struct StepRecord {
  SlotIdx kappa = 0;
  double objective = 0;      // realized stage cost, nonlinear weights applied
  double solve_det_s = 0;
  double wall_s = 0;
  bool feasible = true;
  bool fallback_used = false;
  bool prefallback_feasible = true;
  int xi_flips = 0;
  double incumbent_obj = 0;  // solver-side objective of the applied plan
  double gap = 0;            // solver-reported relative gap
  long nodes = 0;
};

struct EpisodeLog {
  std::string strategy;
  std::uint64_t scenario_seed = 0;
  SlotIdx start_kappa = 0;
  std::vector<StepRecord> steps;
  std::map<model::Slot, model::AppliedSlot> schedule;
  double total_objective() const;
  bool all_feasible() const;
};

class Controller {
 public:
  Controller(const net::Network& net, const demand::DemandScenario& sc, StrategyConfig strategy,
             mip::SolverConfig solver, IntegerOracle* oracle = nullptr);

  MpcState& state() { return state_; }
  const MpcState& state() const { return state_; }

  void reset(SlotIdx start_kappa);
  StepRecord step();
  EpisodeLog run(SlotIdx start_kappa, int steps);

  // Invoked each step after presolve, before the strategy solve; used by the
  // dataset generator to label candidate actions against the live window.
  using Observer = std::function<void(const model::StandardFormProblem&, const MpcState&)>;
  void set_observer(Observer obs) { observer_ = std::move(obs); }

 private:
  const net::Network& net_;
  const demand::DemandScenario& sc_;
  StrategyConfig strat_;
  mip::SolverConfig solver_;
  IntegerOracle* oracle_;
  MpcState state_;
  EpisodeLog log_;
  Observer observer_;
  std::optional<model::IntegerAssignment> prev_tail_;  // warm-start memory

  model::InitialCondition condition() const;
  model::StandardFormProblem build_window() const;

  struct Plan {
    model::IntegerAssignment ia;
    VectorXd x;
    double surrogate = 0;
    bool feasible = false;
    bool fallback = false;
    bool prefallback_feasible = true;
    int xi_flips = 0;
    double gap = 0;
    long nodes = 0;
  };
  Plan solve_window(model::StandardFormProblem& sp, const presolve::PresolveMask& mask,
                    mip::SolveStats& stats);
  // Continuous completion of a fixed assignment, with the lexicographic
  // punctuality pass; empty on infeasibility.
  std::optional<std::pair<VectorXd, double>> complete(const model::StandardFormProblem& sp,
                                                      const model::IntegerAssignment& ia,
                                                      bool relax_order_rows,
                                                      mip::SolveStats& stats) const;
};

}  // namespace railsched::mpc
