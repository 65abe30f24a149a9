#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "railsched/milp.hpp"
#include "railsched/oracle.hpp"
#include "railsched/presolve.hpp"

using namespace railsched;
using namespace railsched::presolve;
using model::OrderPair;
using model::Slot;
using testutil::Toy;

namespace {

model::StandardFormProblem build_free(const Toy& toy, int n_steps) {
  auto in = toy.inputs(n_steps);
  in.inline_order_fixing = false;
  return model::build_problem(in);
}

}  // namespace

TEST_CASE("rule 5.1 fixes exactly the window-determined flags") {
  Toy toy;
  auto sp = build_free(toy, 2);
  REQUIRE(!sp.col_xi.empty());
  auto mask = apply_presolve(sp, TimeSec(toy.k0) * toy.netw.timetable.t_ctrl, toy.init);

  const auto& tt = toy.netw.timetable;
  for (const auto& [pr, col] : sp.col_xi) {
    (void)col;
    const double t_roll = toy.netw.platform(pr.second.p).t_roll;
    const bool force1 =
        double(tt.d_pre(pr.first.p, pr.first.k)) >=
        double(tt.d_pre(pr.second.p, pr.second.k + 1)) + t_roll;
    const bool force0 =
        double(tt.d_pre(pr.first.p, pr.first.k + 1)) <=
        double(tt.d_pre(pr.second.p, pr.second.k)) + t_roll;
    auto it = mask.fixed_xi.find(pr);
    if (force1) {
      REQUIRE(it != mask.fixed_xi.end());
      CHECK(it->second == 1);
    } else if (force0) {
      REQUIRE(it != mask.fixed_xi.end());
      CHECK(it->second == 0);
    }
  }

  // Spec arithmetic spot checks on synthetic numbers.
  CHECK(1000.0 >= 700.0 + 240.0);   // rule shape: fixes to 1
  CHECK(800.0 <= 700.0 + 240.0);    // rule shape: fixes to 0
}

TEST_CASE("rule 5.3 pins exchanges at platforms without depots") {
  // Hand-built problem shell: one y column attached to a sigma=0 platform.
  Toy toy;
  model::StandardFormProblem sp;
  sp.network = &toy.netw;
  sp.k0 = 0;
  sp.n_steps = 1;
  sp.lp.A.resize(0, 1);
  sp.lp.c = VectorXd::Zero(1);
  sp.lp.lo = VectorXd::Constant(1, -3);
  sp.lp.hi = VectorXd::Constant(1, 3);
  sp.lp.row_lo.resize(0);
  sp.lp.row_hi.resize(0);
  sp.is_int = {1};
  sp.col_y[{2, 0}] = 0;  // platform 2 has no depot link
  auto mask = apply_presolve(sp, 0, toy.init);
  REQUIRE(mask.fixed_y.count({2, 0}) == 1);
  CHECK(mask.fixed_y.at({2, 0}) == 0);
  CHECK(mask.free_integer_cols.empty());
  CHECK(mask.fixed_rule.at(0) == Rule::NoDepot);
}

TEST_CASE("rule 5.4 freezes departed exchanges") {
  Toy toy;
  auto in = toy.inputs(3);
  model::InitialCondition init = toy.init;
  const Slot s1{1, toy.k0};
  model::AppliedSlot ap;
  ap.d = double(toy.netw.timetable.d_pre(1, toy.k0)) + 10;
  ap.a = ap.d - 120;
  ap.l = 3;
  ap.y = 1;
  init.history[s1] = ap;
  // consistent chain for the committed stage
  for (PlatformId p : {2, 3, 4}) {
    model::AppliedSlot a2;
    a2.d = double(toy.netw.timetable.d_pre(p, toy.k0));
    a2.a = a2.d - 120;
    a2.l = 3;
    a2.y = 0;
    init.history[{p, toy.k0}] = a2;
  }
  in.init = &init;
  in.committed_before = toy.k0 + 1;
  auto sp = model::build_problem(in);

  const TimeSec t_now = TimeSec(llround(ap.d)) + 1;
  auto mask = apply_presolve(sp, t_now, init);
  REQUIRE(mask.fixed_y.count(s1) == 1);
  CHECK(mask.fixed_y.at(s1) == 1);
  CHECK(mask.fixed_rule.at(sp.col_y.at(s1)) == Rule::AlreadyDeparted);

  // Not-yet-departed slots stay free.
  CHECK(mask.fixed_y.count({1, toy.k0 + 1}) == 0);
}

TEST_CASE("presolve soundness and shrinkage on oracle-capped toys") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    Toy::Options o;
    o.seed = seed;
    o.rate = 0.05 + 0.08 * double(seed % 4);
    o.single_sigma = seed % 2 == 0;
    Toy toy(o);
    auto sp_free = build_free(toy, o.single_sigma ? 2 : 1);
    auto ip_free = mip::relaxation_of(sp_free);

    int free_ints = 0;
    for (int j = 0; j < ip_free.lp.cols(); ++j)
      if (ip_free.is_int[size_t(j)] && ip_free.lp.lo[j] != ip_free.lp.hi[j]) ++free_ints;
    if (free_ints > 12) continue;  // keep the oracle applicable

    mip::SolverConfig cfg;
    auto before = mip::brute_force_oracle(ip_free, cfg);

    auto sp_masked = sp_free;
    auto mask = apply_presolve(sp_masked, TimeSec(toy.k0) * toy.netw.timetable.t_ctrl, toy.init);
    apply_mask(sp_masked, mask);
    auto after = mip::brute_force_oracle(mip::relaxation_of(sp_masked), cfg);

    REQUIRE(before.status == mip::SolveStatus::Optimal);
    REQUIRE(after.status == mip::SolveStatus::Optimal);
    CHECK(std::abs(before.objective - after.objective) <=
          1e-6 * std::max(1.0, std::abs(before.objective)));
    CHECK(int(mask.free_integer_cols.size()) <= free_ints);

    // Idempotent: re-applying fixes nothing new.
    auto mask2 = apply_presolve(sp_masked, TimeSec(toy.k0) * toy.netw.timetable.t_ctrl, toy.init);
    CHECK(mask2.free_integer_cols == mask.free_integer_cols);
    CHECK(mask2.fixed_xi == mask.fixed_xi);
  }
}

TEST_CASE("residual policy: nominal order, boundary inclusive") {
  Toy toy;
  auto sp = build_free(toy, 2);
  auto mask = apply_presolve(sp, TimeSec(toy.k0) * toy.netw.timetable.t_ctrl, toy.init);
  auto xi = residual_xi_policy(sp, mask);
  CHECK(xi.size() == sp.col_xi.size());
  const auto& tt = toy.netw.timetable;
  for (const auto& [pr, v] : xi) {
    auto fixed = mask.fixed_xi.find(pr);
    if (fixed != mask.fixed_xi.end()) {
      CHECK(v == fixed->second);
      continue;
    }
    const double lhs = double(tt.d_pre(pr.first.p, pr.first.k));
    const double rhs =
        double(tt.d_pre(pr.second.p, pr.second.k)) + toy.netw.platform(pr.second.p).t_roll;
    CHECK(v == (lhs >= rhs ? 1 : 0));  // inclusive at equality
  }

  // Consistency check runs on actual departures.
  auto x = model::forward_vector(sp, {}, {});
  auto viol = xi_violations(sp, xi, x);
  for (const auto& pr : viol) {
    // flips restore the rule
    auto flipped = xi;
    flipped[pr] = 1 - flipped[pr];
    auto v2 = xi_violations(sp, flipped, x);
    CHECK(std::find(v2.begin(), v2.end(), pr) == v2.end());
  }
}

TEST_CASE("mask dump names columns and rules") {
  Toy toy;
  auto sp = build_free(toy, 1);
  auto mask = apply_presolve(sp, 0, toy.init);
  const std::string dump = dump_mask(mask, sp);
  if (!mask.fixed_values.empty()) {
    CHECK(dump.find("xi_") != std::string::npos);
    CHECK(dump.find("# rule 5.") != std::string::npos);
  }
}
