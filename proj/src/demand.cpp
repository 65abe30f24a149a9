#include "railsched/demand.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace railsched::demand {

namespace {
constexpr std::int64_t kMicro = 1000000;

double next_u01(std::uint64_t& state) {
  state = splitmix64(state);
  return double(state >> 11) * 0x1.0p-53;
}
}  // namespace

std::int64_t DemandProfile::micropax(PlatformId p, SlotIdx k) const {
  auto it = cells.find(p);
  if (it == cells.end() || k < 0 || k >= int(it->second.size()))
    throw std::out_of_range("demand cell (" + std::to_string(p) + "," + std::to_string(k) +
                            ") outside profile");
  return it->second[size_t(k)];
}

double DemandProfile::rate(PlatformId p, SlotIdx k) const {
  return double(micropax(p, k)) / double(kMicro) / double(t_ctrl);
}

bool DemandProfile::covers(PlatformId p, SlotIdx k) const {
  auto it = cells.find(p);
  return it != cells.end() && k >= 0 && k < int(it->second.size());
}

void DemandProfile::set_rate(PlatformId p, SlotIdx k, double pax_per_s) {
  auto& v = cells[p];
  if (int(v.size()) < horizon_len) v.resize(size_t(horizon_len), 0);
  if (k < 0 || k >= horizon_len) throw std::out_of_range("set_rate: interval outside horizon");
  v[size_t(k)] = llround(pax_per_s * double(t_ctrl) * double(kMicro));
}

std::int64_t DemandScenario::count(PlatformId p, SlotIdx k) const {
  return sampled.micropax(p, k) / kMicro;
}

std::int64_t poisson_draw(double mean, std::uint64_t& state) {
  if (mean <= 0) return 0;
  if (mean < 30.0) {
    const double limit = std::exp(-mean);
    std::int64_t n = 0;
    double prod = next_u01(state);
    while (prod > limit) {
      ++n;
      prod *= next_u01(state);
    }
    return n;
  }
  // Box-Muller normal approximation, rounded and clamped.
  const double u1 = std::max(next_u01(state), 1e-300);
  const double u2 = next_u01(state);
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  const double v = mean + std::sqrt(mean) * z;
  return v <= 0 ? 0 : llround(v);
}

DemandScenario sample_scenario(const DemandProfile& base, std::uint64_t seed) {
  DemandScenario sc;
  sc.base = base;
  sc.seed = seed;
  sc.sampled = base;
  for (auto& [p, v] : sc.sampled.cells) {
    for (size_t k = 0; k < v.size(); ++k) {
      // Per-cell stream: independent of map iteration order.
      std::uint64_t state =
          derive_seed(seed, "demand.cell", std::uint64_t(p) * 1000003ull + std::uint64_t(k));
      const double mean = double(base.cells.at(p)[k]) / double(kMicro);
      v[k] = poisson_draw(mean, state) * kMicro;
    }
  }
  return sc;
}

double arrivals_between(const DemandProfile& profile, PlatformId p, double t1, double t2) {
  if (t1 > t2) throw std::out_of_range("arrivals_between: t1 > t2");
  auto it = profile.cells.find(p);
  if (it == profile.cells.end()) throw std::out_of_range("arrivals_between: unknown platform");
  const double T = double(profile.t_ctrl);
  const double fd = double(profile.first_dep.at(p));
  const double lo = fd - T;  // start of interval 0
  const double hi = fd + double(profile.horizon_len - 1) * T;
  if (t1 < lo - 1e-9 || t2 > hi + 1e-9)
    throw std::out_of_range("arrivals_between: time outside horizon");
  double total = 0;
  for (int k = 0; k < profile.horizon_len; ++k) {
    const double a = fd + double(k - 1) * T;
    const double b = a + T;
    const double ov = std::min(t2, b) - std::max(t1, a);
    if (ov > 0) total += ov * double(it->second[size_t(k)]) / double(kMicro) / T;
  }
  return total;
}

std::int64_t realized_arrivals_before(const DemandScenario& sc, PlatformId p, SlotIdx k,
                                      TimeSec dt) {
  if (dt < 0) throw std::out_of_range("realized_arrivals_before: negative dt");
  const std::int64_t c = sc.count(p, k + 1);
  return c * dt / sc.sampled.t_ctrl;  // floor for nonnegative values
}

namespace {
std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace

DemandProfile load_demand(const std::string& path, const net::TimetableTemplate& tt) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open demand file: " + path);
  DemandProfile prof;
  prof.t_ctrl = tt.t_ctrl;
  prof.horizon_len = tt.horizon_len;
  prof.first_dep = tt.first_dep;
  for (const auto& [pid, fd] : tt.first_dep) {
    (void)fd;
    prof.cells[pid].assign(size_t(tt.horizon_len), 0);
  }
  std::string line;
  bool header = true;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      if (line.find("platform_id") == std::string::npos)
        throw ConfigError("demand file: missing header row");
      header = false;
      continue;
    }
    std::istringstream in(line);
    std::string a, b, c;
    if (!std::getline(in, a, ',') || !std::getline(in, b, ',') || !std::getline(in, c, ','))
      throw ConfigError("demand file: bad row '" + line + "'");
    prof.set_rate(std::stoi(a), std::stoi(b), std::stod(c));
  }
  return prof;
}

void save_demand(const DemandProfile& profile, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write demand file: " + path);
  f << "platform_id,interval_index,rate_pax_per_s\n";
  for (const auto& [p, v] : profile.cells)
    for (size_t k = 0; k < v.size(); ++k)
      f << p << ',' << k << ',' << fmt(double(v[k]) / double(kMicro) / double(profile.t_ctrl))
        << "\n";
}

DemandScenario load_scenario(const std::string& path, const net::TimetableTemplate& tt) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open scenario file: " + path);
  DemandScenario sc;
  sc.base.t_ctrl = sc.sampled.t_ctrl = tt.t_ctrl;
  sc.base.horizon_len = sc.sampled.horizon_len = tt.horizon_len;
  sc.base.first_dep = sc.sampled.first_dep = tt.first_dep;
  for (const auto& [pid, fd] : tt.first_dep) {
    (void)fd;
    sc.base.cells[pid].assign(size_t(tt.horizon_len), 0);
    sc.sampled.cells[pid].assign(size_t(tt.horizon_len), 0);
  }
  std::string line;
  bool header = true;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (line.rfind("# seed=", 0) == 0) {
      sc.seed = std::stoull(line.substr(7));
      continue;
    }
    if (line[0] == '#') continue;
    if (header) {
      if (line.find("realized_count") == std::string::npos)
        throw ConfigError("scenario file: missing header row");
      header = false;
      continue;
    }
    std::istringstream in(line);
    std::string a, b, c, d;
    if (!std::getline(in, a, ',') || !std::getline(in, b, ',') || !std::getline(in, c, ',') ||
        !std::getline(in, d, ','))
      throw ConfigError("scenario file: bad row '" + line + "'");
    const PlatformId p = std::stoi(a);
    const SlotIdx k = std::stoi(b);
    sc.base.set_rate(p, k, std::stod(c));
    sc.sampled.cells[p][size_t(k)] = std::stoll(d) * kMicro;
  }
  return sc;
}

void save_scenario(const DemandScenario& sc, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write scenario file: " + path);
  f << "# seed=" << sc.seed << "\n";
  f << "platform_id,interval_index,rate_pax_per_s,realized_count\n";
  for (const auto& [p, v] : sc.base.cells)
    for (size_t k = 0; k < v.size(); ++k)
      f << p << ',' << k << ',' << fmt(double(v[k]) / double(kMicro) / double(sc.base.t_ctrl))
        << ',' << sc.sampled.cells.at(p)[k] / kMicro << "\n";
}

DemandProfile make_peak_profile(const net::Network& net, double base_rate, double peak_rate,
                                int peak_slot, double peak_width) {
  DemandProfile prof;
  prof.t_ctrl = net.timetable.t_ctrl;
  prof.horizon_len = net.timetable.horizon_len;
  prof.first_dep = net.timetable.first_dep;
  for (const auto& p : net.platforms) {
    auto& v = prof.cells[p.id];
    v.assign(size_t(prof.horizon_len), 0);
    if (net.is_turn_link(p.id)) continue;  // nobody rides through a turnaround
    for (int k = 0; k < prof.horizon_len; ++k) {
      const double x = (double(k) - double(peak_slot)) / peak_width;
      const double rate = base_rate + (peak_rate - base_rate) * std::exp(-0.5 * x * x);
      v[size_t(k)] = llround(rate * double(prof.t_ctrl) * double(kMicro));
    }
  }
  return prof;
}

}  // namespace railsched::demand
