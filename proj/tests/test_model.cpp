#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "railsched/demand.hpp"
#include "railsched/model.hpp"
#include "railsched/network.hpp"

using namespace railsched;
using namespace railsched::model;

namespace {

struct Fixture {
  net::Network netw;
  demand::DemandScenario sc;
  InitialCondition init;
  SlotIdx k0;

  explicit Fixture(int stations = 2, double rate = 0.3, std::uint64_t seed = 7) {
    net::LineNetworkSpec spec;
    spec.stations = stations;
    spec.n_train = 8;
    netw = net::make_line_network(spec);
    REQUIRE(net::validate_network(netw).ok());
    auto prof = demand::make_peak_profile(netw, rate, rate, 10, 5.0);
    sc = demand::sample_scenario(prof, seed);
    init = InitialCondition::nominal(netw);
    k0 = netw.link_delta(1) + 1;
  }

  BuildInputs inputs(int n_steps, ObjectiveMode mode = ObjectiveMode::Linearized) const {
    BuildInputs in;
    in.network = &netw;
    in.scenario = &sc;
    in.k0 = k0;
    in.n_steps = n_steps;
    in.mode = mode;
    in.init = &init;
    return in;
  }
};

int count_prefix(const StandardFormProblem& sp, const std::string& prefix) {
  int c = 0;
  for (const auto& [name, info] : sp.var_index) {
    (void)info;
    if (name.rfind(prefix, 0) == 0) ++c;
  }
  return c;
}

bool rows_hold(const mip::LpProblem& lp, const VectorXd& x, double tol = 1e-6) {
  return mip::lp_violation(lp, x) <= tol;
}

}  // namespace

TEST_CASE("toy window: column tally matches a manual enumeration") {
  Fixture f(2, 0.3);
  auto in = f.inputs(2);
  in.inline_order_fixing = false;
  auto sp = build_problem(in);

  // 4 platforms x 2 slots: departure and arrival everywhere.
  CHECK(count_prefix(sp, "d_") == 8);
  CHECK(count_prefix(sp, "a_") == 8);
  // Boarding columns only where passengers can appear (terminal platforms of
  // each direction carry no demand).
  CHECK(count_prefix(sp, "ndep_") == 4);
  // Composition machinery at the two depot-linked platforms.
  CHECK(count_prefix(sp, "y_") == 4);
  CHECK(count_prefix(sp, "o_") == 4);
  CHECK(count_prefix(sp, "gam_") == 4);
  CHECK(count_prefix(sp, "eta_") == 4);
  // Order flags: ordered platform pairs (1,4) and (4,1), 2x2 slots each.
  CHECK(count_prefix(sp, "xi_") == 8);
  CHECK(count_prefix(sp, "v_") == 8);
  CHECK(sp.lp.cols() == 8 + 8 + 4 + 16 + 16);

  // Every derived symbol is recorded as an affine combination of columns.
  for (const char* base : {"tau", "h", "l", "n", "nbefore", "nafter", "cap"}) {
    int c = 0;
    for (const auto& [name, e] : sp.derived) {
      (void)e;
      if (name.rfind(std::string(base) + "_", 0) == 0) ++c;
    }
    CHECK(c > 0);
  }

  // sigma = 0 everywhere: no composition or order machinery at all.
  net::LineNetworkSpec nodep;
  nodep.stations = 2;
  nodep.depot_station = 0;
  nodep.n_train = 0;
  Fixture f2(2, 0.3);
  f2.netw = net::make_line_network(nodep);
  f2.init = InitialCondition::nominal(f2.netw);
  auto prof = demand::make_peak_profile(f2.netw, 0.3, 0.3, 10, 5.0);
  f2.sc = demand::sample_scenario(prof, 7);
  f2.k0 = f2.netw.link_delta(1) + 1;
  auto sp2 = build_problem(f2.inputs(2));
  CHECK(count_prefix(sp2, "y_") == 0);
  CHECK(count_prefix(sp2, "o_") == 0);
  CHECK(count_prefix(sp2, "gam_") == 0);
  CHECK(count_prefix(sp2, "eta_") == 0);
  CHECK(count_prefix(sp2, "xi_") == 0);
}

TEST_CASE("window and demand coverage errors") {
  Fixture f(2);
  auto in = f.inputs(2);
  in.k0 = f.netw.timetable.horizon_len - 1;
  CHECK_THROWS_AS(build_problem(in), std::out_of_range);

  auto in2 = f.inputs(2);
  demand::DemandScenario short_sc = f.sc;
  for (auto& [p, v] : short_sc.sampled.cells) v.resize(size_t(f.k0 + 1));
  in2.scenario = &short_sc;
  CHECK_THROWS_AS(build_problem(in2), std::out_of_range);
}

TEST_CASE("abs encoding: substitution checks") {
  auto rows = encode_abs(0, 1, 2, 3.0);
  auto ok = [&](double y, double o, double g) {
    for (const auto& r : rows) {
      double act = 0;
      for (auto [c, w] : r.terms) act += w * (c == 0 ? y : c == 1 ? o : g);
      if (act < r.lo - 1e-12 || act > r.hi + 1e-12) return false;
    }
    return true;
  };
  CHECK(ok(3, 3, 1));
  CHECK(ok(-2, 2, 0));
  CHECK(!ok(-2, 1, 0));  // o + y >= 0 fails
  CHECK(ok(0, 0, 0));
  CHECK(ok(0, 0, 1));
  CHECK_THROWS_AS(encode_abs(0, 1, 2, 0.0), EncodingError);
}

TEST_CASE("indicator encoding: threshold semantics") {
  const double eps = 1e-6;
  auto rows = encode_indicator(0, 1, 0.0, 3.0, eps);
  auto ok = [&](double o, double e) {
    for (const auto& r : rows) {
      double act = 0;
      for (auto [c, w] : r.terms) act += w * (c == 0 ? o : e);
      if (act < r.lo - 1e-15 || act > r.hi + 1e-15) return false;
    }
    return true;
  };
  CHECK(ok(0, 0));
  CHECK(!ok(0, 1));       // eta=1 demands o >= eps
  CHECK(ok(1, 1));
  CHECK(!ok(1, 0));       // o <= eta Omax forces eta
  CHECK(ok(eps, 1));      // boundary: exactly eps
  CHECK(!ok(eps, 0));
  CHECK_THROWS_AS(encode_indicator(0, 1, 0.0, 3.0, 0.0), EncodingError);
}

TEST_CASE("order encoding reproduces the rule") {
  const double eps = 1e-6;
  auto check_rule = [&](double dp, double dq, double t_roll) {
    const double m_f = -5000, M_f = 5000;
    auto rows = encode_order(0, 1, 2, t_roll, m_f, M_f, eps);
    auto ok = [&](double xi) {
      for (const auto& r : rows) {
        double act = 0;
        for (auto [c, w] : r.terms) act += w * (c == 0 ? dp : c == 1 ? dq : xi);
        if (act < r.lo - 1e-9 || act > r.hi + 1e-9) return false;
      }
      return true;
    };
    const bool want = dp >= dq + t_roll;
    CHECK(ok(want ? 1 : 0));
    CHECK(!ok(want ? 0 : 1));
  };
  check_rule(1000, 700, 240);  // forced on
  check_rule(900, 700, 240);   // forced off
  check_rule(700, 700, 0);     // inclusive boundary: on
  // 100-point grid.
  std::uint64_t st = 5;
  for (int i = 0; i < 100; ++i) {
    auto u = [&] {
      st = splitmix64(st);
      return double(st >> 11) * 0x1.0p-53;
    };
    check_rule(std::floor(u() * 2000), std::floor(u() * 2000), std::floor(u() * 400));
  }
}

TEST_CASE("product encoding is exact at binary flags") {
  auto rows = encode_product(0, 1, 2, 3.0);
  auto ok = [&](double xi, double y, double v) {
    for (const auto& r : rows) {
      double act = 0;
      for (auto [c, w] : r.terms) act += w * (c == 0 ? xi : c == 1 ? y : v);
      if (act < r.lo - 1e-12 || act > r.hi + 1e-12) return false;
    }
    return true;
  };
  for (int y = -3; y <= 3; ++y)
    for (int xi = 0; xi <= 1; ++xi)
      for (int v = -3; v <= 3; ++v) CHECK(ok(xi, y, v) == (v == xi * y));
}

TEST_CASE("w3 from history") {
  CHECK(compute_w3({{660, 600, 840}}) == doctest::Approx(1.0 / 3));
  CHECK(compute_w3({{600, 600, 840}, {840, 840, 1080}}) == doctest::Approx(0.0));
  CHECK(compute_w3({{720, 600, 840}, {660, 600, 840}}) == doctest::Approx(2.0 / 3));
  CHECK_THROWS_AS(compute_w3({}), std::invalid_argument);
  CHECK_THROWS_AS(compute_w3({{840, 600, 840}}), std::invalid_argument);
}

TEST_CASE("stage cost terms") {
  CHECK(j_pass_term(100, 30, 0, 20, 240) == doctest::Approx(100 * 30 + 20 * 210));
  CHECK(j_cost_term(2, 1.0, true, 5.0) == doctest::Approx(7.0));
  CHECK(j_pass_term(0, 77, 0, 0, 240) == doctest::Approx(0.0));
}

TEST_CASE("forward vector satisfies every row") {
  Fixture f(3, 0.4);
  for (auto mode : {ObjectiveMode::Linearized, ObjectiveMode::Nonlinear}) {
    auto sp = build_problem(f.inputs(4, mode));
    auto x = forward_vector(sp, {}, {});
    CHECK(rows_hold(sp.lp, x));

    // Nominal schedule, zero exchanges: composition stays regular, passenger
    // ledgers match the saturated-boarding recursion.
    for (const auto& s : sp.slots) {
      CHECK(sp.ell.at(s).eval(x) == doctest::Approx(2.0));
      const auto nb = sp.n_before.find(s);
      if (nb != sp.n_before.end()) {
        CHECK(nb->second.eval(x) >= -1e-9);
        if (sp.col_ndep.at(s) >= 0)
          CHECK(x[sp.col_ndep.at(s)] <=
                nb->second.eval(x) + 1e-9);
      }
    }

    // A composition exchange extends the dwell, so the departure must move
    // late enough inside its window for the turnaround arrival to fit.
    std::map<Slot, int> y;
    const Slot s1{1, f.k0 + 1};
    y[s1] = 1;
    std::map<Slot, double> d;
    d[s1] = double(f.netw.timetable.d_pre(1, f.k0 + 1)) + 90;
    auto x2 = forward_vector(sp, d, y);
    CHECK(rows_hold(sp.lp, x2));
    CHECK(sp.ell.at(s1).eval(x2) == doctest::Approx(3.0));
  }
}

TEST_CASE("objective descriptors agree with per-slot terms") {
  Fixture f(3, 0.5);
  auto sp = build_problem(f.inputs(3, ObjectiveMode::Nonlinear));
  auto x = forward_vector(sp, {}, {});

  double want = 0;
  ObjectiveWeights w;
  for (const auto& s : sp.slots) {
    const auto& pl = f.netw.platform(s.p);
    const double n_k = sp.waiting_at.at(s).eval(x);
    const double na = sp.n_after.count(s) ? sp.n_after.at(s).eval(x) : 0.0;
    const double d = x[sp.col_d.at(s)];
    const double dpre = double(f.netw.timetable.d_pre(s.p, s.k));
    const double dnext = double(f.netw.timetable.d_pre(s.p, s.k + 1));
    const int ell = int(llround(sp.ell.at(s).eval(x)));
    const bool eta = sp.col_eta.count(s) && x[sp.col_eta.at(s)] > 0.5;
    want += w.w1 * j_pass_term(n_k, d, dpre, na, dnext);
    want += w.w2 * j_cost_term(ell, pl.e_energy, eta, pl.e_add);
  }
  CHECK(sp.nonlinear_objective.eval(x) == doctest::Approx(want).epsilon(1e-9));

  // Zero demand: the passenger part vanishes, only energy remains.
  Fixture z(3, 0.0);
  auto spz = build_problem(z.inputs(3, ObjectiveMode::Nonlinear));
  auto xz = forward_vector(spz, {}, {});
  double energy = 0;
  for (const auto& s : spz.slots)
    energy += w.w2 * 2.0 * z.netw.platform(s.p).e_energy;
  CHECK(spz.nonlinear_objective.eval(xz) == doctest::Approx(energy).epsilon(1e-9));
  // And the linearized surrogate agrees when no one is waiting.
  CHECK(spz.linearized_objective.eval(xz) == doctest::Approx(energy).epsilon(1e-9));
}

TEST_CASE("committed overlap pins applied decisions") {
  Fixture f(2, 0.3);
  // Commit the whole stage k0: the train picked up one extra unit at the
  // depot platform and carried three units around the loop.
  InitialCondition init = f.init;
  for (PlatformId p : {1, 2, 3, 4}) {
    AppliedSlot ap;
    ap.d = double(f.netw.timetable.d_pre(p, f.k0)) + (p == 1 ? 30 : 0);
    ap.a = ap.d - 120;
    ap.l = 3;
    ap.y = (p == 1) ? 1 : 0;
    ap.n_depart = 0;
    init.history[{p, f.k0}] = ap;
  }
  init.depot_stock[1] = 8;  // stock at the window start, before the committed draw

  auto in = f.inputs(4);
  in.init = &init;
  in.committed_before = f.k0 + 1;
  auto sp = build_problem(in);

  const Slot s1{1, f.k0};
  const int cd = sp.col_d.at(s1);
  CHECK(sp.lp.lo[cd] == sp.lp.hi[cd]);
  CHECK(sp.lp.lo[cd] == doctest::Approx(double(f.netw.timetable.d_pre(1, f.k0)) + 30));
  const int cy = sp.col_y.at(s1);
  CHECK(sp.lp.lo[cy] == 1.0);
  CHECK(sp.lp.hi[cy] == 1.0);

  // The committed chain wraps back to platform 1 after link_delta stages and
  // hands over the three-unit composition.
  const Slot reuse{1, f.k0 + f.netw.link_delta(1)};
  REQUIRE(reuse.k < f.k0 + 4);
  const auto& e = sp.ell.at(reuse);
  CHECK(e.constant == doctest::Approx(3.0));
  auto x = forward_vector(sp, {}, {});
  CHECK(e.eval(x) == doctest::Approx(3.0));
}
