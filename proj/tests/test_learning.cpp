#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "railsched/learning.hpp"

using namespace railsched;
using namespace railsched::learn;
using model::Slot;
using testutil::Toy;

namespace {

Dataset synthetic_dataset(const StateLayout& layout, int candidates, int episodes, int steps,
                          std::uint64_t seed) {
  Dataset ds;
  ds.layout = layout;
  ds.candidate_count = candidates;
  std::uint64_t st = seed;
  auto u = [&] {
    st = splitmix64(st);
    return double(st >> 11) * 0x1.0p-53;
  };
  for (int e = 0; e < episodes; ++e)
    for (int t = 0; t < steps; ++t) {
      LabeledSample s;
      s.state = VectorXd::Zero(layout.dim());
      for (int i = 0; i < layout.dim(); ++i) s.state[i] = 40.0 * u();
      s.objectives = VectorXd::Zero(candidates);
      s.feasible.assign(size_t(candidates), 0);
      double best = kInf;
      for (int c = 0; c < candidates; ++c) {
        const bool feas = u() > 0.25;
        s.feasible[size_t(c)] = feas;
        s.objectives[c] = feas ? u() * 10 : kInf;
        if (feas && s.objectives[c] < best) {
          best = s.objectives[c];
          s.optimal_index = c;
        }
      }
      if (s.optimal_index < 0) {
        s.feasible[0] = 1;
        s.objectives[0] = 1.0;
        s.optimal_index = 0;
      }
      s.episode_id = e;
      s.step_id = t;
      ds.samples.push_back(std::move(s));
    }
  return ds;
}

}  // namespace

TEST_CASE("state encoding: layout, zero state, canonical order") {
  Toy toy;  // 4 platforms, 1 depot
  auto layout = layout_of(toy.netw, 3);
  CHECK(layout.dim() == 4 + 4 * 3 + 1);

  auto st = mpc::initial_state(toy.netw, toy.k0);
  auto x = encode_state(layout, toy.netw, toy.sc, st);
  CHECK(x.size() == 17);
  CHECK(x.tail(1)[0] == 8.0);  // depot stock

  // Zero state encodes to the zero vector (scale-only normalization).
  demand::DemandProfile zero = toy.sc.base;
  for (auto& [p, v] : zero.cells) std::fill(v.begin(), v.end(), 0);
  auto zsc = demand::sample_scenario(zero, 1);
  auto zstate = mpc::initial_state(toy.netw, toy.k0);
  zstate.depot_stock[1] = 0;
  auto xz = encode_state(layout, toy.netw, zsc, zstate);
  CHECK(xz.norm() == 0.0);

  // Platform file order must not matter.
  net::Network shuffled = toy.netw;
  std::reverse(shuffled.platforms.begin(), shuffled.platforms.end());
  net::Network reparsed = net::parse_network(net::serialize_network(shuffled));
  auto x2 = encode_state(layout_of(reparsed, 3), reparsed, toy.sc, st);
  CHECK((x - x2).norm() == 0.0);
}

TEST_CASE("candidate enumeration is lexicographic and invertible") {
  Toy toy;
  auto cs = candidate_set(toy.netw);
  CHECK(cs.slots == std::vector<PlatformId>{1, 4});
  CHECK(cs.y_max == 3);
  CHECK(cs.count() == 49);
  CHECK(cs.decode(0) == std::vector<int>{-3, -3});
  CHECK(cs.decode(cs.count() - 1) == std::vector<int>{3, 3});
  CHECK(cs.decode(cs.zero_index()) == std::vector<int>{0, 0});
  for (int i = 0; i < cs.count(); ++i) CHECK(cs.encode(cs.decode(i)) == i);

  // Bound screening against the inherited composition (regular = 2).
  auto sp = model::build_problem(toy.inputs(2));
  CHECK(bounds_feasible(cs, {0, 0}, sp));
  CHECK(bounds_feasible(cs, {-1, 1}, sp));
  CHECK(!bounds_feasible(cs, {-2, 0}, sp));  // would drop below one unit
  CHECK(!bounds_feasible(cs, {3, 0}, sp));   // would exceed four units
}

TEST_CASE("scorer: finite scores, mode flag, io round-trip") {
  Toy toy;
  auto layout = layout_of(toy.netw, 3);
  ScorerConfig cfg;
  cfg.hidden = 16;
  cfg.seed = 5;
  auto sc = make_scorer(layout, 49, cfg);
  auto hid = sc.initial_hidden();
  VectorXd x = VectorXd::Constant(layout.dim(), 3.0);
  auto s = sc.score(x, hid);
  CHECK(s.size() == 49);
  CHECK(s.allFinite());
  // Recurrent state advances.
  auto s2 = sc.score(x, hid);
  CHECK((s - s2).norm() > 0);

  sc.training_mode = true;
  CHECK_THROWS_AS(sc.score(x, hid), std::logic_error);
  sc.training_mode = false;

  save_weights(sc, "/tmp/railsched_w.bin");
  auto back = load_weights("/tmp/railsched_w.bin");
  CHECK(back.cfg.hidden == 16);
  CHECK(back.layout == sc.layout);
  auto h1 = sc.initial_hidden();
  auto h2 = back.initial_hidden();
  CHECK((sc.score(x, h1) - back.score(x, h2)).norm() == 0.0);
  std::remove("/tmp/railsched_w.bin");
}

TEST_CASE("memorization and training determinism") {
  Toy toy;
  auto layout = layout_of(toy.netw, 2);
  auto ds = synthetic_dataset(layout, 9, 1, 1, 3);  // one repeated sample
  ScorerConfig cfg;
  cfg.hidden = 24;
  cfg.seed = 11;
  TrainOptions topt;
  topt.iterations = 2000;
  topt.unroll = 1;
  topt.seed = 21;

  auto sc = make_scorer(layout, 9, cfg);
  auto res = train_scorer(sc, ds, topt);
  CHECK(res.loss_history.size() == 2000);
  CHECK(res.loss_history.back() < 1e-3);
  CHECK(res.moving_average(100).back() < 1e-2);

  auto sc2 = make_scorer(layout, 9, cfg);
  train_scorer(sc2, ds, topt);
  CHECK((sc.flatten() - sc2.flatten()).norm() == 0.0);  // bitwise
}

TEST_CASE("gradients match central finite differences") {
  Toy toy;
  auto layout = layout_of(toy.netw, 2);
  auto ds = synthetic_dataset(layout, 7, 2, 6, 9);

  for (int variant = 0; variant < 3; ++variant) {
    ScorerConfig cfg;
    cfg.hidden = 10;
    cfg.seed = 100 + std::uint64_t(variant);
    cfg.output_mask = variant != 1;
    cfg.dropout = variant == 2 ? 0.5 : 0.0;
    auto sc = make_scorer(layout, 7, cfg);
    std::uint64_t rng = 77;
    auto mb = draw_minibatch(ds, sc, 4, rng);

    VectorXd g;
    const double loss0 = minibatch_grad(sc, ds, mb, g);
    CHECK(std::isfinite(loss0));

    VectorXd theta = sc.flatten();
    std::uint64_t pick = 1234 + std::uint64_t(variant);
    int checked = 0;
    double worst = 0;
    while (checked < 50) {
      pick = splitmix64(pick);
      const long i = long(pick % std::uint64_t(theta.size()));
      if (std::abs(g[i]) < 1e-5) continue;  // below finite-difference resolution
      const double h = 6e-6 * std::max(1.0, std::abs(theta[i]));
      VectorXd tp = theta, tm = theta;
      tp[i] += h;
      tm[i] -= h;
      RecurrentScorer s2 = sc;
      s2.unflatten(tp);
      const double fp = minibatch_loss(s2, ds, mb);
      s2.unflatten(tm);
      const double fm = minibatch_loss(s2, ds, mb);
      const double fd = (fp - fm) / (2 * h);
      const double rel = std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-6});
      worst = std::max(worst, rel);
      ++checked;
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("masked slots receive no gradient") {
  Toy toy;
  auto layout = layout_of(toy.netw, 2);
  auto ds = synthetic_dataset(layout, 7, 1, 4, 13);
  ScorerConfig cfg;
  cfg.hidden = 8;
  cfg.seed = 3;
  cfg.output_mask = true;
  auto sc = make_scorer(layout, 7, cfg);
  std::uint64_t rng = 5;
  auto mb = draw_minibatch(ds, sc, 4, rng);

  VectorXd g;
  minibatch_grad(sc, ds, mb, g);
  RecurrentScorer view = sc;
  view.unflatten(g);  // reinterpret the flat gradient as parameter blocks
  for (int c = 0; c < sc.candidates; ++c) {
    bool always_masked = true;
    for (int t = 0; t < mb.length; ++t)
      if (ds.samples[size_t(mb.first + t)].feasible[size_t(c)]) always_masked = false;
    if (always_masked) {
      CHECK(view.w2.row(c).norm() == 0.0);
      CHECK(view.b2[c] == 0.0);
    }
  }
}

TEST_CASE("dataset generation: budgets, dimensions, enumeration counts") {
  Toy::Options o;
  o.stations = 2;
  o.rate = 0.25;
  o.single_sigma = true;
  Toy toy(o);
  // One adjustable platform with unit range: exactly three candidates.
  toy.netw.fleet = {400, 1, 2, 1};
  GenOptions gopt;
  gopt.episodes = 2;
  gopt.steps = 4;
  gopt.start_kappa = toy.k0;
  gopt.budget = 5;
  gopt.driver.kind = mpc::StrategyKind::FallbackOnly;
  gopt.driver.horizon = 2;
  gopt.seed = 42;
  auto ds = generate_dataset(toy.netw, toy.sc.base, gopt);
  CHECK(ds.candidate_count == 3);
  CHECK(long(ds.samples.size()) == 5);
  for (const auto& s : ds.samples) {
    CHECK(s.state.size() == ds.layout.dim());
    CHECK(s.optimal_index >= 0);
    CHECK(s.feasible[size_t(s.optimal_index)] == 1);
    for (int c = 0; c < 3; ++c)
      if (s.feasible[size_t(c)])
        CHECK(s.objectives[s.optimal_index] <= s.objectives[c] + 1e-12);
  }

  save_dataset(ds, "/tmp/railsched_ds.csv");
  auto back = load_dataset("/tmp/railsched_ds.csv");
  CHECK(back.samples.size() == ds.samples.size());
  CHECK(back.candidate_count == ds.candidate_count);
  CHECK((back.samples[0].state - ds.samples[0].state).norm() == 0.0);
  CHECK(back.samples[0].optimal_index == ds.samples[0].optimal_index);
  std::remove("/tmp/railsched_ds.csv");
}

TEST_CASE("sequential ensemble defers to later networks") {
  Toy::Options o;
  o.stations = 2;
  o.n_train = 0;  // empty depot: any positive exchange is infeasible
  Toy toy(o);
  auto sp = model::build_problem(toy.inputs(2));
  auto cs = candidate_set(toy.netw);
  auto layout = layout_of(toy.netw, 2);

  Ensemble two;
  for (int i = 0; i < 2; ++i) {
    ScorerConfig cfg;
    cfg.hidden = 8;
    cfg.seed = std::uint64_t(i);
    two.nets.push_back(make_scorer(layout, cs.count(), cfg));
  }
  // First network loves depot draws; second prefers the zero action.
  for (int c = 0; c < cs.count(); ++c) {
    const auto ys = cs.decode(c);
    const int total = ys[0] + ys[1];
    two.nets[0].w2.setZero();
    two.nets[1].w2.setZero();
    two.nets[0].b2[c] = total > 0 ? -10.0 - total : 10.0;
  }
  two.nets[1].b2.setConstant(5.0);
  two.nets[1].b2[cs.zero_index()] = -5.0;

  EnsembleOracle oracle(toy.netw, two, 3);
  auto st = mpc::initial_state(toy.netw, toy.k0);
  int solves = 0;
  auto screen = [&](const model::IntegerAssignment& ia) {
    ++solves;
    auto lp = model::continuous_restriction(sp, ia, true);
    lp.c = sp.linearized_objective.linear;
    return mip::solve_lp(lp).status == mip::LpStatus::Optimal;
  };
  auto got = oracle.propose(sp, st, screen);
  REQUIRE(got.has_value());
  // The first net's top picks draw from the empty depot and fail the screen;
  // the second net's zero action goes through.
  for (const auto& [s, y] : got->y) {
    (void)s;
    CHECK(y == 0);
  }
  CHECK(solves >= 2);

  // A perfectly-informed single net returns its first pick in one solve.
  Ensemble one;
  one.nets.push_back(two.nets[1]);
  EnsembleOracle oracle2(toy.netw, one, 3);
  solves = 0;
  auto got2 = oracle2.propose(sp, st, screen);
  REQUIRE(got2.has_value());
  CHECK(solves == 1);
}
