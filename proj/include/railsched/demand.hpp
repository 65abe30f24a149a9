#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "railsched/network.hpp"
#include "railsched/types.hpp"

namespace railsched::demand {

// Piecewise-constant arrival-rate profile on the predetermined-timetable
// partition.  Interval k at platform p covers (d_pre(p,k-1), d_pre(p,k)].
// Cells store expected passengers per interval in micropax (1e-6 pax), so
// accumulation over intervals is exact; per-second rates are derived views.
struct DemandProfile {
  TimeSec t_ctrl = 0;
  int horizon_len = 0;
  std::map<PlatformId, TimeSec> first_dep;
  std::map<PlatformId, std::vector<std::int64_t>> cells;  // micropax per interval

  std::int64_t micropax(PlatformId p, SlotIdx k) const;
  double rate(PlatformId p, SlotIdx k) const;  // passengers per second
  bool covers(PlatformId p, SlotIdx k) const;
  void set_rate(PlatformId p, SlotIdx k, double pax_per_s);
};

struct DemandScenario {
  DemandProfile base;     // expected rates
  DemandProfile sampled;  // realized rates: count / t_ctrl
  std::uint64_t seed = 0;

  // Realized integer arrival count for interval k at platform p.
  std::int64_t count(PlatformId p, SlotIdx k) const;
};

// Deterministic Poisson draw: inversion below mean 30, rounded normal
// approximation above.
std::int64_t poisson_draw(double mean, std::uint64_t& state);

DemandScenario sample_scenario(const DemandProfile& base, std::uint64_t seed);

// Integral of the piecewise-constant rate over [t1, t2).  Additive over
// adjacent intervals; throws std::out_of_range outside the horizon.
double arrivals_between(const DemandProfile& profile, PlatformId p, double t1, double t2);

// Realized arrivals within (d_pre(p,k), d_pre(p,k) + dt] for integer dt,
// under the uniform in-interval placement rule floor(count * dt / t_ctrl).
std::int64_t realized_arrivals_before(const DemandScenario& sc, PlatformId p, SlotIdx k,
                                      TimeSec dt);

// CSV io.  Demand files carry columns platform_id, interval_index,
// rate_pax_per_s; scenario files append realized_count and a seed header.
DemandProfile load_demand(const std::string& path, const net::TimetableTemplate& tt);
void save_demand(const DemandProfile& profile, const std::string& path);
DemandScenario load_scenario(const std::string& path, const net::TimetableTemplate& tt);
void save_scenario(const DemandScenario& sc, const std::string& path);

// Off-peak/peak profile generator for line networks: zero demand at terminal
// platforms, a smooth peak centered at peak_slot elsewhere.
DemandProfile make_peak_profile(const net::Network& net, double base_rate, double peak_rate,
                                int peak_slot, double peak_width);

}  // namespace railsched::demand
