#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "railsched/network.hpp"

using namespace railsched;
using namespace railsched::net;

TEST_CASE("segment running time, trapezoidal profile") {
  const double v = 70.0 / 3.6;
  const double t = segment_running_time(1500, 0.75, 0.70, v);
  CHECK(t == doctest::Approx(104.0).epsilon(1e-3));

  // Ramp-only distance: triangular boundary.
  const double ramp = v * v / (2 * 0.75) + v * v / (2 * 0.70);
  const double tb = segment_running_time(ramp, 0.75, 0.70, v);
  CHECK(tb == doctest::Approx(v / 0.75 + v / 0.70).epsilon(1e-9));
  CHECK(tb == doctest::Approx(53.7).epsilon(1e-2));

  // Time never increases with cruise speed for fixed length.
  for (double L : {200.0, 800.0, 1500.0, 4000.0}) {
    double prev = segment_running_time(L, 0.75, 0.70, 5.0);
    for (double vc = 6.0; vc < 40.0; vc += 1.7) {
      double cur = segment_running_time(L, 0.75, 0.70, vc);
      CHECK(cur <= prev + 1e-9);
      prev = cur;
    }
  }

  CHECK_THROWS_AS(segment_running_time(-1, 0.75, 0.7, 10), std::invalid_argument);
  CHECK_THROWS_AS(segment_running_time(100, 0, 0.7, 10), std::invalid_argument);
}

TEST_CASE("line network builder produces a valid network") {
  Network net = make_line_network({});
  auto rep = validate_network(net);
  for (const auto& v : rep.violations) MESSAGE(v.what);
  CHECK(rep.ok());
  CHECK(net.platforms.size() == 10);

  // succ(pred(p)) == p around the loop.
  for (const auto& p : net.platforms) CHECK(net.succ(net.pred(p.id)) == p.id);

  // Direction starts are exactly the two wrap targets, with nonnegative shifts.
  int starts = 0;
  for (const auto& p : net.platforms)
    if (net.is_direction_start(p.id)) {
      ++starts;
      CHECK(net.link_delta(p.id) >= 0);
    }
  CHECK(starts == 2);
  CHECK(net.link_delta(1) > 0);  // loop wrap consumes whole control steps
  CHECK(net.link_delta(6) == 0);

  // Equal-interval timetable by construction.
  CHECK(net.timetable.d_pre(1, 3) - net.timetable.d_pre(1, 2) == net.timetable.t_ctrl);

  // Depot at station 1 covers both its platforms.
  CHECK(net.depots.size() == 1);
  CHECK(net.depots[0].platform_ids == std::vector<PlatformId>{1, 10});
}

TEST_CASE("validator reports broken invariants") {
  Network net = make_line_network({});

  SUBCASE("sigma without depot") {
    for (auto& p : net.platforms)
      if (p.id == 3) p.sigma = true;
    auto rep = validate_network(net);
    REQUIRE(!rep.ok());
    bool named = false;
    for (const auto& v : rep.violations)
      if (v.what.find("platform 3") != std::string::npos) named = true;
    CHECK(named);
  }

  SUBCASE("line skipping a platform breaks the succ chain") {
    auto& ps = net.lines[0].platforms;
    ps.erase(std::find(ps.begin(), ps.end(), 4));
    Network rebuilt = parse_network(serialize_network(net));
    auto rep = validate_network(rebuilt);
    REQUIRE(!rep.ok());
    bool conn = false;
    for (const auto& v : rep.violations)
      if (v.what.find("not reachable") != std::string::npos) conn = true;
    CHECK(conn);
  }

  SUBCASE("beta sum above one") {
    net.timetable.transfers.push_back({3, 8, 0.95});
    auto rep = validate_network(net);
    CHECK(!rep.ok());
  }
}

TEST_CASE("transfer connection rule") {
  Network net = make_line_network({});
  auto& tt = net.timetable;
  // Force a hand-checkable layout: d_pre[p] = [600, 840, ...], q slot 3 at 500.
  tt.first_dep[3] = 600;
  tt.first_dep[8] = 500 - 3 * tt.t_ctrl;
  for (auto& p : net.platforms)
    if (p.id == 8) p.t_trans = 200;
  auto k = chi_target(net, 8, 3, 3);  // arrives 500 + 200 = 700; 600 < 700 <= 840
  REQUIRE(k.has_value());
  CHECK(*k == 1);

  // Zero walk time, identical grids: left-open right-closed window keeps slot k.
  tt.first_dep[8] = 600;
  for (auto& p : net.platforms)
    if (p.id == 8) p.t_trans = 0;
  auto k2 = chi_target(net, 8, 5, 3);
  REQUIRE(k2.has_value());
  CHECK(*k2 == 5);

  // Walk past the horizon end: no connection.
  auto k3 = chi_target(net, 8, tt.horizon_len - 1, 3);
  for (auto& p : net.platforms)
    if (p.id == 8) p.t_trans = 10.0 * double(tt.t_ctrl);
  auto k4 = chi_target(net, 8, tt.horizon_len - 1, 3);
  CHECK(k3.has_value());
  CHECK(!k4.has_value());
}

TEST_CASE("chi recomputation is idempotent") {
  Network net = make_line_network({});
  for (const auto& tr : net.timetable.transfers) {
    for (SlotIdx k = 0; k + 12 < net.timetable.horizon_len; k += 5) {
      auto a = chi_target(net, tr.from, k, tr.to);
      auto b = chi_target(net, tr.from, k, tr.to);
      CHECK(a == b);
    }
  }
}

TEST_CASE("network file round-trip and strict loader") {
  Network net = make_line_network({});
  const std::string text = serialize_network(net);
  Network back = parse_network(text);
  CHECK(serialize_network(back) == text);
  CHECK(validate_network(back).ok());
  CHECK(back.link_delta(1) == net.link_delta(1));

  CHECK_THROWS_AS(parse_network(text + "\n[platform]\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_network("[nope]\nid = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_network("[fleet]\nc_max = abc\n"), ConfigError);
}

TEST_CASE("two-station loop is buildable and valid") {
  LineNetworkSpec spec;
  spec.stations = 2;
  spec.middle_transfer = false;
  Network net = make_line_network(spec);
  auto rep = validate_network(net);
  for (const auto& v : rep.violations) MESSAGE(v.what);
  CHECK(rep.ok());
  CHECK(net.platforms.size() == 4);
}
