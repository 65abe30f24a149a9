#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>

#include "helpers.hpp"
#include "railsched/harness.hpp"
#include "railsched/mps.hpp"

using namespace railsched;
using namespace railsched::harness;
using testutil::Toy;

TEST_CASE("config parsing, strict keys, hashing") {
  const std::string text =
      "network = a.net\n"
      "demand = a.csv\n"
      "strategies = benchmark, milp, learning_lp\n"
      "master_seed = 99\n"
      "episodes = 7\n"
      "horizon = 4\n"
      "w1 = 0.0001\n"
      "# comment\n"
      "threads = 2\n";
  auto cfg = parse_config(text);
  CHECK(cfg.network_file == "a.net");
  CHECK(cfg.strategies == std::vector<std::string>{"benchmark", "milp", "learning_lp"});
  CHECK(cfg.master_seed == 99);
  CHECK(cfg.episodes == 7);
  CHECK(cfg.horizon == 4);
  CHECK(config_hash(text) == config_hash(text));
  CHECK(config_hash(text) != config_hash(text + " "));
  CHECK_THROWS_AS(parse_config("bogus_key = 1\n"), ConfigError);

  CHECK(effective_threads(cfg, 5) == 5);
  CHECK(effective_threads(cfg, 0) == 2);
}

TEST_CASE("matched runs pair scenarios and metrics close the loop") {
  Toy::Options o;
  o.stations = 2;
  o.rate = 0.2;
  o.peak_rate = 0.8;
  Toy toy(o);
  ExperimentConfig cfg;
  cfg.master_seed = 5;
  cfg.horizon = 3;
  cfg.step_cap_s = 8;
  cfg.benchmark_cap_s = 12;
  cfg.early_term_window_s = 2;

  auto batch = run_matched(toy.netw, toy.sc.base, cfg, {"benchmark", "milp", "fallback_only"}, 3,
                           4, nullptr, 2);
  REQUIRE(batch.by_strategy.size() == 3);
  for (const auto& [name, logs] : batch.by_strategy) {
    (void)name;
    REQUIRE(logs.size() == 3);
    for (const auto& log : logs) CHECK(log.all_feasible());
  }
  // Identical scenario stream across strategies.
  for (int e = 0; e < 3; ++e)
    CHECK(batch.by_strategy.at("milp")[size_t(e)].scenario_seed ==
          batch.by_strategy.at("benchmark")[size_t(e)].scenario_seed);

  auto metrics = compute_metrics(batch.by_strategy, batch.by_strategy.at("benchmark"));
  REQUIRE(metrics.rows.size() == 3);
  for (const auto& m : metrics.rows) {
    if (m.strategy == "benchmark") {
      CHECK(m.gap_max == doctest::Approx(0.0));
      CHECK(m.gap_mean == doctest::Approx(0.0));
      CHECK(m.gap_min == doctest::Approx(0.0));
    }
    CHECK(m.feas_rate_closedloop == doctest::Approx(1.0));
    CHECK(m.instances == 3);
  }

  // Aggregates ignore instance order.
  auto shuffled = batch.by_strategy;
  for (auto& [name, logs] : shuffled) {
    (void)name;
    std::reverse(logs.begin(), logs.end());
  }
  auto bench2 = shuffled.at("benchmark");
  auto metrics2 = compute_metrics(shuffled, bench2);
  for (size_t i = 0; i < metrics.rows.size(); ++i) {
    CHECK(metrics.rows[i].gap_mean == doctest::Approx(metrics2.rows[i].gap_mean));
    CHECK(metrics.rows[i].gap_max == doctest::Approx(metrics2.rows[i].gap_max));
    CHECK(metrics.rows[i].time_mean == doctest::Approx(metrics2.rows[i].time_mean));
  }

  // Gap arithmetic: definition (J - J_bench) / J_bench, exactly.
  auto inflated = batch.by_strategy;
  for (auto& r : inflated.at("milp"))
    for (auto& s : r.steps) s.objective *= 1.2;
  auto m3 = compute_metrics(inflated, batch.by_strategy.at("benchmark"));
  double want_mean = 0;
  for (size_t i = 0; i < inflated.at("milp").size(); ++i) {
    const double jb = batch.by_strategy.at("benchmark")[i].total_objective();
    want_mean += (inflated.at("milp")[i].total_objective() - jb) / jb;
  }
  want_mean /= double(inflated.at("milp").size());
  for (const auto& m : m3.rows)
    if (m.strategy == "milp") CHECK(m.gap_mean == doctest::Approx(want_mean).epsilon(1e-12));

  // Unmatched pairing is rejected.
  auto broken = batch.by_strategy;
  broken.at("milp").pop_back();
  CHECK_THROWS_AS(compute_metrics(broken, batch.by_strategy.at("benchmark")),
                  std::invalid_argument);

  // Episode and schedule serialization round-trips.
  const auto& log = batch.by_strategy.at("milp")[0];
  const std::string csv = episode_csv(log, &batch.by_strategy.at("benchmark")[0]);
  CHECK(csv.find("kappa,strategy,objective,solve_time_s,gap_vs_benchmark,fallback_used,feasible") ==
        0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == long(log.steps.size()) + 1);

  write_file("/tmp/railsched_sched.csv", schedule_csv(log));
  auto sched = load_schedule_csv("/tmp/railsched_sched.csv");
  CHECK(sched.size() == log.schedule.size());
  CHECK(sched.begin()->second.l == log.schedule.begin()->second.l);
  std::remove("/tmp/railsched_sched.csv");
}

TEST_CASE("thread count does not change results") {
  Toy::Options o;
  o.stations = 2;
  Toy toy(o);
  ExperimentConfig cfg;
  cfg.master_seed = 11;
  cfg.horizon = 3;
  cfg.step_cap_s = 6;
  auto a = run_matched(toy.netw, toy.sc.base, cfg, {"milp"}, 4, 3, nullptr, 1);
  auto b = run_matched(toy.netw, toy.sc.base, cfg, {"milp"}, 4, 3, nullptr, 2);
  for (int e = 0; e < 4; ++e) {
    const auto& la = a.by_strategy.at("milp")[size_t(e)];
    const auto& lb = b.by_strategy.at("milp")[size_t(e)];
    REQUIRE(la.steps.size() == lb.steps.size());
    for (size_t i = 0; i < la.steps.size(); ++i) {
      CHECK(la.steps[i].objective == lb.steps[i].objective);  // bitwise
      CHECK(la.steps[i].solve_det_s == lb.steps[i].solve_det_s);
    }
  }
}

TEST_CASE("diagram export: vertices in time order, widths encode composition") {
  Toy::Options o;
  o.stations = 3;
  o.rate = 0.3;
  Toy toy(o);
  ExperimentConfig cfg;
  cfg.master_seed = 3;
  cfg.horizon = 3;
  cfg.step_cap_s = 6;
  auto batch = run_matched(toy.netw, toy.sc.base, cfg, {"fallback_only"}, 1, 4, nullptr, 1);
  const auto& log = batch.by_strategy.at("fallback_only")[0];
  auto files = export_diagram(toy.netw, log.schedule, 1);
  CHECK(files.csv.find("service,seq,platform_id,station,arrival_s,departure_s,composition") == 0);
  CHECK(files.svg.find("<svg") == 0);
  CHECK(files.svg.find("stroke-width") != std::string::npos);
  CHECK_THROWS_AS(export_diagram(toy.netw, log.schedule, 9), std::out_of_range);

  // One up-direction service: three platforms in time order.
  std::istringstream in(files.csv);
  std::string line;
  std::getline(in, line);
  double prev_dep = -1;
  std::string want = "up_" + std::to_string(default_start(toy.netw, cfg));
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.rfind(want + ",", 0) != 0) continue;
    std::vector<std::string> f;
    std::istringstream row(line);
    std::string c;
    while (std::getline(row, c, ',')) f.push_back(c);
    REQUIRE(f.size() == 7);
    const double arr = std::stod(f[4]);
    const double dep = std::stod(f[5]);
    CHECK(arr <= dep);
    CHECK(dep > prev_dep);
    prev_dep = dep;
    ++rows;
  }
  CHECK(rows == 3);

  // Width ratio 4:1 between compositions 4 and 1.
  mpc::EpisodeLog fake;
  for (int i = 0; i < 2; ++i) {
    model::AppliedSlot ap;
    ap.a = 100.0 + i * 200;
    ap.d = 160.0 + i * 200;
    ap.l = i == 0 ? 4 : 1;
    fake.schedule[{i == 0 ? 1 : 2, toy.k0}] = ap;
  }
  auto f2 = export_diagram(toy.netw, fake.schedule, 1);
  CHECK(f2.svg.find("stroke-width=\"4.8\"") != std::string::npos);
  CHECK(f2.svg.find("stroke-width=\"1.2\"") != std::string::npos);
}

TEST_CASE("mps export structure") {
  Toy toy;
  auto in = toy.inputs(2);
  in.inline_order_fixing = false;
  auto sp = model::build_problem(in);
  const std::string text = mps::write_mps(sp);
  CHECK(text.find("NAME RAILSCHED") != std::string::npos);
  for (const char* section : {"ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS", "ENDATA"})
    CHECK(text.find(section) != std::string::npos);
  CHECK(text.find("'INTORG'") != std::string::npos);
  CHECK(text.find("'INTEND'") != std::string::npos);
  CHECK(text.find("d_p1_k") != std::string::npos);
  CHECK(text.find("xi_p1_k") != std::string::npos);
  CHECK(text.find(" UI BND y_p1_k") != std::string::npos);

  auto spn = model::build_problem(toy.inputs(2, model::ObjectiveMode::Nonlinear));
  CHECK_THROWS_AS(mps::write_mps(spn), std::invalid_argument);
}

TEST_CASE("manifest carries the reproduction data") {
  ExperimentConfig cfg;
  cfg.master_seed = 77;
  const std::string text = "master_seed = 77\n";
  auto m = manifest_text(cfg, text, "railsched eval compare --config x.cfg");
  CHECK(m.find("config_hash = ") != std::string::npos);
  CHECK(m.find("master_seed = 77") != std::string::npos);
  CHECK(m.find("seed_scheme") != std::string::npos);
  CHECK(m.find("eval compare") != std::string::npos);
}
