#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "railsched/types.hpp"

namespace railsched::net {

enum class Direction { Up, Down };

struct Platform {
  PlatformId id = 0;
  int station_id = 0;
  int line_id = 0;
  Direction direction = Direction::Up;
  bool sigma = false;                 // composition adjustable here
  std::optional<DepotId> depot_id;    // present iff sigma
  double h_min = 0;                   // departure-arrival headway floor, s
  double tau_min = 0;                 // dwell floor, s
  double t_cons = 0;                  // composition-change time, s
  double t_roll = 0;                  // depot transfer time to sibling platforms, s
  double t_trans = 0;                 // transfer walk time, s
  double r_min = 0, r_max = 0, r_avg = 0;        // running time to successor, s
  double r_turn_min = 0, r_turn_max = 0;         // turnaround bounds, terminals only
  double e_energy = 0;                // per-unit segment energy cost
  double e_add = 0;                   // composition-change cost
};

struct Depot {
  DepotId id = 0;
  std::vector<PlatformId> platform_ids;
  int n_train = 0;
};

struct Line {
  int id = 0;
  std::vector<PlatformId> platforms;  // loop order; succ/pred derived
};

struct FleetLimits {
  int c_max = 0;      // per-unit capacity, passengers
  int l_min = 1;
  int l_max = 1;
  int l_regular = 1;
};

struct TransferRate {
  PlatformId from = 0;
  PlatformId to = 0;
  double beta = 0;
};

// Predetermined timetable: equal-length control intervals, one departure per
// platform per interval.  d_pre(p,k) = first_dep[p] + k*t_ctrl.
struct TimetableTemplate {
  TimeSec t_ctrl = 0;
  int horizon_len = 0;  // slots per platform
  std::map<PlatformId, TimeSec> first_dep;
  std::vector<TransferRate> transfers;

  TimeSec d_pre(PlatformId p, SlotIdx k) const { return first_dep.at(p) + TimeSec(k) * t_ctrl; }
};

struct Network {
  std::vector<Line> lines;
  std::vector<Platform> platforms;  // stored in line (loop) order
  std::vector<Depot> depots;
  FleetLimits fleet;
  TimetableTemplate timetable;

  const Platform& platform(PlatformId id) const;
  const Depot& depot(DepotId id) const;

  // Loop links, derived from line order.  succ wraps terminal -> start.
  PlatformId succ(PlatformId p) const;
  PlatformId pred(PlatformId p) const;
  // A link p -> succ(p) is a turnaround when the direction changes.
  bool is_turn_link(PlatformId p) const;
  // Direction-start platforms (targets of a turnaround link).
  bool is_direction_start(PlatformId p) const;

  // Remark-1 style service linkage: the slot at direction-start platform q
  // inherits units from slot (k - link_delta(q)) at pred(q).
  int link_delta(PlatformId q) const;

  // Platforms at the same station (excluding p itself).
  std::vector<PlatformId> station_siblings(PlatformId p) const;

 private:
  friend Network load_network(const std::string&);
  friend Network parse_network(const std::string&);
  friend void finalize_links(Network&);
  std::map<PlatformId, int> index_;        // platform id -> position
  std::map<PlatformId, PlatformId> succ_;  // loop successor
  std::map<PlatformId, int> link_delta_;   // direction-start -> slot shift
};

struct Violation {
  std::string what;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

// Lists every violated invariant; an empty report means the network is usable
// by every downstream module (including the recursive-feasibility margins the
// controller relies on).
ValidationReport validate_network(const Network& net);

// chi rule: service k_q at platform q feeds the unique slot k_p at platform p
// with d_pre(p,k_p-1) < d_pre(q,k_q) + t_trans(q) <= d_pre(p,k_p).
// Returns nothing when the walk lands past the horizon.
std::optional<SlotIdx> chi_target(const Network& net, PlatformId q, SlotIdx k_q, PlatformId p);

// Trapezoidal (or triangular) speed-profile running time over a segment.
double segment_running_time(double length_m, double a_acc, double a_dec, double v_cruise);

// Structured-text network file io.
Network load_network(const std::string& path);
Network parse_network(const std::string& text);
std::string serialize_network(const Network& net);
void save_network(const Network& net, const std::string& path);

// Builder for single-line loop networks (tests, bundled data files).
struct LineNetworkSpec {
  int stations = 5;
  std::vector<double> segment_m;   // station-to-station lengths; size stations-1
  double a_acc = 0.75, a_dec = 0.70, v_cruise = 70.0 / 3.6;
  double h_min = 120, tau_min = 30, tau_regular = 60;
  double t_cons = 60, t_roll = 240, t_trans = 180;
  double r_turn_avg = 52.9;
  double e_energy_per_km = 1.0;
  double e_add = 5.0;
  int depot_station = 1;           // depot at this station, both its platforms
  int n_train = 12;
  FleetLimits fleet{400, 1, 4, 2};
  TimeSec t_ctrl = 240;
  int horizon_len = 64;
  TimeSec line_start = 0;          // first departure at platform 1
  bool middle_transfer = true;     // transfer links at the middle station
  double beta = 0.10;
};
Network make_line_network(const LineNetworkSpec& spec);

}  // namespace railsched::net
