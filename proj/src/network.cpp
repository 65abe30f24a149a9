#include "railsched/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace railsched::net {

const Platform& Network::platform(PlatformId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw std::out_of_range("unknown platform id " + std::to_string(id));
  return platforms[it->second];
}

const Depot& Network::depot(DepotId id) const {
  for (const auto& d : depots)
    if (d.id == id) return d;
  throw std::out_of_range("unknown depot id " + std::to_string(id));
}

PlatformId Network::succ(PlatformId p) const { return succ_.at(p); }

PlatformId Network::pred(PlatformId p) const {
  for (const auto& [a, b] : succ_)
    if (b == p) return a;
  throw std::out_of_range("no predecessor for platform " + std::to_string(p));
}

bool Network::is_turn_link(PlatformId p) const {
  return platform(p).direction != platform(succ(p)).direction;
}

bool Network::is_direction_start(PlatformId p) const {
  return platform(pred(p)).direction != platform(p).direction;
}

int Network::link_delta(PlatformId q) const {
  auto it = link_delta_.find(q);
  if (it == link_delta_.end())
    throw std::out_of_range("platform " + std::to_string(q) + " is not a direction start");
  return it->second;
}

std::vector<PlatformId> Network::station_siblings(PlatformId p) const {
  std::vector<PlatformId> out;
  const int sid = platform(p).station_id;
  for (const auto& q : platforms)
    if (q.station_id == sid && q.id != p) out.push_back(q.id);
  return out;
}

// Derive loop successor links and turnaround slot shifts once the platform
// list and timetable are in place.
void finalize_links(Network& net) {
  net.index_.clear();
  net.succ_.clear();
  net.link_delta_.clear();
  for (size_t i = 0; i < net.platforms.size(); ++i) net.index_[net.platforms[i].id] = int(i);
  for (const auto& line : net.lines) {
    const auto& ps = line.platforms;
    for (size_t i = 0; i < ps.size(); ++i) net.succ_[ps[i]] = ps[(i + 1) % ps.size()];
  }
  if (net.timetable.t_ctrl <= 0) return;
  const double T = double(net.timetable.t_ctrl);
  for (const auto& pl : net.platforms) {
    PlatformId q = pl.id;
    if (net.succ_.count(q) == 0 || !net.is_direction_start(q)) continue;
    PlatformId e = net.pred(q);
    const auto& pe = net.platform(e);
    if (!net.timetable.first_dep.count(q) || !net.timetable.first_dep.count(e)) continue;
    double need = double(net.timetable.first_dep.at(e)) + pe.r_turn_min + net.platform(q).tau_min -
                  double(net.timetable.first_dep.at(q));
    net.link_delta_[q] = int(std::ceil(need / T - 1e-9));
  }
}

std::optional<SlotIdx> chi_target(const Network& net, PlatformId q, SlotIdx k_q, PlatformId p) {
  const auto& tt = net.timetable;
  const double t_arr = double(tt.d_pre(q, k_q)) + net.platform(q).t_trans;
  const double ratio = (t_arr - double(tt.first_dep.at(p))) / double(tt.t_ctrl);
  SlotIdx k = SlotIdx(std::ceil(ratio - 1e-9));
  if (k < 0) k = 0;
  if (k >= tt.horizon_len) return std::nullopt;
  return k;
}

double segment_running_time(double length_m, double a_acc, double a_dec, double v_cruise) {
  if (length_m <= 0 || a_acc <= 0 || a_dec <= 0 || v_cruise <= 0)
    throw std::invalid_argument("segment_running_time: all inputs must be positive");
  const double ramp = v_cruise * v_cruise * (1.0 / (2 * a_acc) + 1.0 / (2 * a_dec));
  if (length_m >= ramp)
    return v_cruise / a_acc + v_cruise / a_dec + (length_m - ramp) / v_cruise;
  const double v_peak = std::sqrt(2 * length_m * a_acc * a_dec / (a_acc + a_dec));
  return v_peak / a_acc + v_peak / a_dec;
}

namespace {

void check(bool cond, std::vector<Violation>& out, const std::string& msg) {
  if (!cond) out.push_back({msg});
}

}  // namespace

ValidationReport validate_network(const Network& net) {
  ValidationReport rep;
  auto& v = rep.violations;

  std::set<PlatformId> all_ids;
  for (const auto& p : net.platforms) {
    const std::string tag = "platform " + std::to_string(p.id);
    check(all_ids.insert(p.id).second, v, tag + ": duplicate id");
    check(p.sigma == p.depot_id.has_value(), v,
          tag + ": sigma and depot_id must be present together");
    check(p.tau_min > 0, v, tag + ": tau_min must be > 0");
    check(p.h_min > 0, v, tag + ": h_min must be > 0");
  }

  for (const auto& line : net.lines) {
    const std::string tag = "line " + std::to_string(line.id);
    std::set<PlatformId> listed(line.platforms.begin(), line.platforms.end());
    check(listed.size() == line.platforms.size(), v, tag + ": duplicate platform in loop");
    check(line.platforms.size() >= 2, v, tag + ": needs at least two platforms");
    for (PlatformId pid : line.platforms)
      check(all_ids.count(pid) > 0, v, tag + ": references unknown platform " + std::to_string(pid));
    for (const auto& p : net.platforms) {
      if (p.line_id != line.id) continue;
      check(listed.count(p.id) > 0, v,
            tag + ": platform " + std::to_string(p.id) + " not reachable on succ chain");
    }
  }
  if (!rep.ok()) return rep;  // structural breakage; later checks need the links

  // Running / turnaround bound sanity per loop link.
  for (const auto& p : net.platforms) {
    const std::string tag = "platform " + std::to_string(p.id);
    if (net.is_turn_link(p.id)) {
      check(p.r_turn_min > 0 && p.r_turn_min <= p.r_turn_max, v,
            tag + ": needs 0 < r_turn_min <= r_turn_max");
    } else {
      check(p.r_min > 0 && p.r_min <= p.r_avg && p.r_avg <= p.r_max, v,
            tag + ": needs 0 < r_min <= r_avg <= r_max");
    }
  }

  std::set<PlatformId> depot_listed;
  for (const auto& d : net.depots) {
    const std::string tag = "depot " + std::to_string(d.id);
    check(d.n_train >= 0, v, tag + ": n_train must be >= 0");
    for (PlatformId pid : d.platform_ids) {
      depot_listed.insert(pid);
      if (!all_ids.count(pid)) {
        check(false, v, tag + ": unknown platform " + std::to_string(pid));
        continue;
      }
      const auto& p = net.platform(pid);
      check(p.sigma, v, tag + ": platform " + std::to_string(pid) + " has sigma=0");
      check(p.depot_id && *p.depot_id == d.id, v,
            tag + ": platform " + std::to_string(pid) + " does not point back to depot");
    }
  }
  for (const auto& p : net.platforms)
    if (p.sigma)
      check(depot_listed.count(p.id) > 0, v,
            "platform " + std::to_string(p.id) + ": sigma=1 but listed in no depot");

  const auto& tt = net.timetable;
  check(tt.t_ctrl > 0, v, "timetable: t_ctrl must be > 0");
  check(tt.horizon_len >= 2, v, "timetable: horizon_len must be >= 2");
  for (const auto& p : net.platforms)
    check(tt.first_dep.count(p.id) > 0, v,
          "timetable: missing first_dep for platform " + std::to_string(p.id));
  for (const auto& [pid, fd] : tt.first_dep) {
    (void)fd;
    check(all_ids.count(pid) > 0, v,
          "timetable: first_dep for unknown platform " + std::to_string(pid));
  }

  std::map<PlatformId, double> beta_sum;
  for (const auto& tr : tt.transfers) {
    std::ostringstream tag;
    tag << "transfer " << tr.from << "->" << tr.to;
    check(tr.beta >= 0 && tr.beta <= 1, v, tag.str() + ": beta outside [0,1]");
    check(tr.from != tr.to, v, tag.str() + ": self transfer");
    if (all_ids.count(tr.from) && all_ids.count(tr.to)) {
      check(net.platform(tr.from).station_id == net.platform(tr.to).station_id, v,
            tag.str() + ": platforms are not at the same station");
    } else {
      check(false, v, tag.str() + ": unknown platform");
    }
    beta_sum[tr.from] += tr.beta;
  }
  for (const auto& [pid, s] : beta_sum)
    check(s <= 1.0 + 1e-12, v,
          "platform " + std::to_string(pid) + ": outgoing transfer rates sum to > 1");

  if (!rep.ok() || tt.t_ctrl <= 0) return rep;

  // Slack margins the rolling controller relies on: every delayed departure
  // must admit a feasible successor schedule inside the next window.
  const double T = double(tt.t_ctrl);
  for (const auto& p : net.platforms) {
    const std::string tag = "platform " + std::to_string(p.id);
    check(p.h_min + p.tau_min <= T, v, tag + ": h_min + tau_min exceeds t_ctrl");
    if (!tt.first_dep.count(p.id)) continue;
    PlatformId s = net.succ(p.id);
    if (!tt.first_dep.count(s)) continue;
    const auto& ps = net.platform(s);
    if (net.is_turn_link(p.id)) {
      const int delta = net.link_delta(s);
      check(delta >= 0, v, tag + ": turnaround slot shift is negative");
      const double gap =
          double(tt.first_dep.at(s)) + double(delta) * T - double(tt.first_dep.at(p.id));
      check(gap >= p.r_turn_min + ps.tau_min, v, tag + ": turnaround gap below nominal slack");
      check(gap <= T + p.r_turn_max - ps.h_min, v, tag + ": turnaround gap above recovery margin");
    } else {
      const double gap = double(tt.first_dep.at(s)) - double(tt.first_dep.at(p.id));
      check(gap >= p.r_min + ps.tau_min, v, tag + ": run gap below nominal slack");
      check(gap <= T + p.r_max - ps.h_min, v, tag + ": run gap above recovery margin");
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Structured-text file format

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> tokens(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

double to_num(const std::string& s, const std::string& ctx) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("network file: bad number '" + s + "' in " + ctx);
  }
}

long long to_int(const std::string& s, const std::string& ctx) {
  double v = to_num(s, ctx);
  long long i = llround(v);
  if (std::abs(v - double(i)) > 1e-9) throw ConfigError("network file: expected integer in " + ctx);
  return i;
}

const char* kPlatformColumns =
    "id station_id line_id direction sigma depot_id h_min tau_min t_cons t_roll t_trans "
    "r_min r_max r_avg r_turn_min r_turn_max E_energy E_add";

}  // namespace

Network parse_network(const std::string& text) {
  Network net;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  Line* cur_line = nullptr;
  Depot* cur_depot = nullptr;
  bool have_platform_columns = false;

  while (std::getline(in, raw)) {
    std::string line = raw;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("network file: malformed section '" + line + "'");
      section = line.substr(1, line.size() - 2);
      if (section == "line") {
        net.lines.emplace_back();
        cur_line = &net.lines.back();
      } else if (section == "depot") {
        net.depots.emplace_back();
        cur_depot = &net.depots.back();
      } else if (section != "platform" && section != "timetable" && section != "fleet") {
        throw ConfigError("network file: unknown section [" + section + "]");
      }
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("network file: expected key = value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    const auto vals = tokens(val);

    if (section == "line") {
      if (key == "id")
        cur_line->id = int(to_int(val, "[line] id"));
      else if (key == "platforms") {
        for (const auto& t : vals) cur_line->platforms.push_back(int(to_int(t, "[line] platforms")));
      } else
        throw ConfigError("network file: unknown key '" + key + "' in [line]");
    } else if (section == "platform") {
      if (key == "columns") {
        if (val != kPlatformColumns)
          throw ConfigError("network file: [platform] columns must be exactly '" +
                            std::string(kPlatformColumns) + "'");
        have_platform_columns = true;
      } else if (key == "row") {
        if (!have_platform_columns)
          throw ConfigError("network file: [platform] row before columns header");
        if (vals.size() != 18)
          throw ConfigError("network file: [platform] row needs 18 fields, got " +
                            std::to_string(vals.size()));
        Platform p;
        p.id = int(to_int(vals[0], "platform id"));
        p.station_id = int(to_int(vals[1], "station_id"));
        p.line_id = int(to_int(vals[2], "line_id"));
        if (vals[3] == "up")
          p.direction = Direction::Up;
        else if (vals[3] == "down")
          p.direction = Direction::Down;
        else
          throw ConfigError("network file: direction must be up|down");
        p.sigma = to_int(vals[4], "sigma") != 0;
        if (vals[5] != "-") p.depot_id = int(to_int(vals[5], "depot_id"));
        p.h_min = to_num(vals[6], "h_min");
        p.tau_min = to_num(vals[7], "tau_min");
        p.t_cons = to_num(vals[8], "t_cons");
        p.t_roll = to_num(vals[9], "t_roll");
        p.t_trans = to_num(vals[10], "t_trans");
        p.r_min = to_num(vals[11], "r_min");
        p.r_max = to_num(vals[12], "r_max");
        p.r_avg = to_num(vals[13], "r_avg");
        p.r_turn_min = to_num(vals[14], "r_turn_min");
        p.r_turn_max = to_num(vals[15], "r_turn_max");
        p.e_energy = to_num(vals[16], "E_energy");
        p.e_add = to_num(vals[17], "E_add");
        net.platforms.push_back(p);
      } else
        throw ConfigError("network file: unknown key '" + key + "' in [platform]");
    } else if (section == "depot") {
      if (key == "id")
        cur_depot->id = int(to_int(val, "[depot] id"));
      else if (key == "platform_ids") {
        for (const auto& t : vals) cur_depot->platform_ids.push_back(int(to_int(t, "platform_ids")));
      } else if (key == "n_train")
        cur_depot->n_train = int(to_int(val, "n_train"));
      else
        throw ConfigError("network file: unknown key '" + key + "' in [depot]");
    } else if (section == "timetable") {
      if (key == "t_ctrl")
        net.timetable.t_ctrl = TimeSec(to_int(val, "t_ctrl"));
      else if (key == "horizon_len")
        net.timetable.horizon_len = int(to_int(val, "horizon_len"));
      else if (key == "first_dep") {
        if (vals.size() != 2) throw ConfigError("network file: first_dep wants 'platform time'");
        net.timetable.first_dep[int(to_int(vals[0], "first_dep"))] =
            TimeSec(to_int(vals[1], "first_dep"));
      } else if (key == "beta") {
        if (vals.size() != 3) throw ConfigError("network file: beta wants 'from to rate'");
        net.timetable.transfers.push_back(
            {int(to_int(vals[0], "beta")), int(to_int(vals[1], "beta")), to_num(vals[2], "beta")});
      } else
        throw ConfigError("network file: unknown key '" + key + "' in [timetable]");
    } else if (section == "fleet") {
      if (key == "c_max")
        net.fleet.c_max = int(to_int(val, "c_max"));
      else if (key == "l_min")
        net.fleet.l_min = int(to_int(val, "l_min"));
      else if (key == "l_max")
        net.fleet.l_max = int(to_int(val, "l_max"));
      else if (key == "l_regular")
        net.fleet.l_regular = int(to_int(val, "l_regular"));
      else
        throw ConfigError("network file: unknown key '" + key + "' in [fleet]");
    } else {
      throw ConfigError("network file: key outside any section: '" + line + "'");
    }
  }
  finalize_links(net);
  return net;
}

Network load_network(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open network file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_network(ss.str());
}

std::string serialize_network(const Network& net) {
  std::ostringstream out;
  for (const auto& line : net.lines) {
    out << "[line]\nid = " << line.id << "\nplatforms =";
    for (PlatformId p : line.platforms) out << ' ' << p;
    out << "\n\n";
  }
  out << "[platform]\ncolumns = " << kPlatformColumns << "\n";
  for (const auto& p : net.platforms) {
    out << "row = " << p.id << ' ' << p.station_id << ' ' << p.line_id << ' '
        << (p.direction == Direction::Up ? "up" : "down") << ' ' << (p.sigma ? 1 : 0) << ' ';
    if (p.depot_id)
      out << *p.depot_id;
    else
      out << '-';
    out << ' ' << fmt(p.h_min) << ' ' << fmt(p.tau_min) << ' ' << fmt(p.t_cons) << ' '
        << fmt(p.t_roll) << ' ' << fmt(p.t_trans) << ' ' << fmt(p.r_min) << ' ' << fmt(p.r_max)
        << ' ' << fmt(p.r_avg) << ' ' << fmt(p.r_turn_min) << ' ' << fmt(p.r_turn_max) << ' '
        << fmt(p.e_energy) << ' ' << fmt(p.e_add) << "\n";
  }
  out << "\n";
  for (const auto& d : net.depots) {
    out << "[depot]\nid = " << d.id << "\nplatform_ids =";
    for (PlatformId p : d.platform_ids) out << ' ' << p;
    out << "\nn_train = " << d.n_train << "\n\n";
  }
  out << "[timetable]\nt_ctrl = " << net.timetable.t_ctrl
      << "\nhorizon_len = " << net.timetable.horizon_len << "\n";
  for (const auto& [pid, fd] : net.timetable.first_dep)
    out << "first_dep = " << pid << ' ' << fd << "\n";
  for (const auto& tr : net.timetable.transfers)
    out << "beta = " << tr.from << ' ' << tr.to << ' ' << fmt(tr.beta) << "\n";
  out << "\n[fleet]\nc_max = " << net.fleet.c_max << "\nl_min = " << net.fleet.l_min
      << "\nl_max = " << net.fleet.l_max << "\nl_regular = " << net.fleet.l_regular << "\n";
  return out.str();
}

void save_network(const Network& net, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write network file: " + path);
  f << serialize_network(net);
}

// ---------------------------------------------------------------------------
// Single-line loop builder

Network make_line_network(const LineNetworkSpec& spec) {
  if (spec.stations < 2) throw std::invalid_argument("make_line_network: needs >= 2 stations");
  const int S = spec.stations;
  std::vector<double> seg = spec.segment_m;
  if (seg.empty()) seg.assign(size_t(S - 1), 1500.0);
  if (int(seg.size()) != S - 1)
    throw std::invalid_argument("make_line_network: segment_m must have stations-1 entries");

  Network net;
  net.fleet = spec.fleet;
  Line line;
  line.id = 1;

  auto base_platform = [&](PlatformId id, int station, Direction dir) {
    Platform p;
    p.id = id;
    p.station_id = station;
    p.line_id = 1;
    p.direction = dir;
    p.h_min = spec.h_min;
    p.tau_min = spec.tau_min;
    p.t_cons = spec.t_cons;
    p.t_roll = spec.t_roll;
    p.t_trans = spec.t_trans;
    return p;
  };

  // Up platforms 1..S at stations 1..S, down platforms S+1..2S at stations S..1.
  for (int i = 1; i <= 2 * S; ++i) {
    const bool up = i <= S;
    const int station = up ? i : 2 * S + 1 - i;
    Platform p = base_platform(i, station, up ? Direction::Up : Direction::Down);
    const bool terminal = (i == S) || (i == 2 * S);
    if (terminal) {
      p.r_turn_min = 0.5 * spec.r_turn_avg;
      p.r_turn_max = 2.0 * spec.r_turn_avg;
      p.e_energy = spec.e_energy_per_km * 0.5;
    } else {
      const int seg_idx = up ? (i - 1) : (2 * S - 1 - i);  // station-to-station segment
      const double len = seg[size_t(seg_idx)];
      p.r_avg = segment_running_time(len, spec.a_acc, spec.a_dec, spec.v_cruise);
      p.r_min = 0.8 * p.r_avg;
      p.r_max = 1.2 * p.r_avg;
      p.e_energy = spec.e_energy_per_km * len / 1000.0;
    }
    net.platforms.push_back(p);
    line.platforms.push_back(i);
  }
  net.lines.push_back(line);

  // Depot at both platforms of the depot station.
  Depot depot;
  depot.id = 1;
  depot.n_train = spec.n_train;
  for (auto& p : net.platforms) {
    if (p.station_id == spec.depot_station) {
      p.sigma = true;
      p.depot_id = 1;
      depot.platform_ids.push_back(p.id);
    }
  }
  net.depots.push_back(depot);

  if (spec.middle_transfer && S >= 3) {
    const int mid = (S + 1) / 2;
    PlatformId up_p = mid, down_p = 2 * S + 1 - mid;
    net.timetable.transfers.push_back({up_p, down_p, spec.beta});
    net.timetable.transfers.push_back({down_p, up_p, spec.beta});
  }

  // Nominal loop gaps: run links use r_avg + tau_regular, turn links use
  // r_turn_avg + tau_regular.  The loop is then padded so that total loop
  // time is an exact multiple of t_ctrl, keeping every padded gap inside its
  // recovery margin.
  const double T = double(spec.t_ctrl);
  const int n = 2 * S;
  std::vector<double> gap(size_t(n), 0.0);  // gap[i]: platform order[i] -> order[i+1 mod n]
  std::vector<double> slack(size_t(n), 0.0);
  for (int i = 0; i < n; ++i) {
    const auto& p = net.platforms[size_t(i)];
    const auto& s = net.platforms[size_t((i + 1) % n)];
    const bool turn = p.direction != s.direction;
    const double run_nom = turn ? spec.r_turn_avg : p.r_avg;
    const double run_max = turn ? p.r_turn_max : p.r_max;
    gap[size_t(i)] = std::round(run_nom + spec.tau_regular);
    slack[size_t(i)] = std::floor(T + run_max - s.h_min - gap[size_t(i)]) - 10.0;
    if (slack[size_t(i)] < 0) slack[size_t(i)] = 0;
  }
  double loop = 0;
  for (double g : gap) loop += g;
  double pad = std::fmod(T - std::fmod(loop, T), T);
  for (int i = 0; i < n && pad > 0; ++i) {
    const double take = std::min(pad, slack[size_t(i)]);
    gap[size_t(i)] += take;
    pad -= take;
  }
  if (pad > 1e-9)
    throw std::invalid_argument("make_line_network: cannot close the loop within recovery margins");

  net.timetable.t_ctrl = spec.t_ctrl;
  net.timetable.horizon_len = spec.horizon_len;
  TimeSec t = spec.line_start;
  for (int i = 0; i < n; ++i) {
    net.timetable.first_dep[net.platforms[size_t(i)].id] = t;
    t += TimeSec(llround(gap[size_t(i)]));
  }
  finalize_links(net);
  return net;
}

}  // namespace railsched::net
