#include "railsched/harness.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

namespace railsched::harness {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string raw;
  while (std::getline(in, raw)) {
    std::string line = raw;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config: expected key = value: '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "network")
      cfg.network_file = val;
    else if (key == "demand")
      cfg.demand_file = val;
    else if (key == "strategies") {
      cfg.strategies.clear();
      std::istringstream ss(val);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) cfg.strategies.push_back(tok);
      }
    } else if (key == "master_seed")
      cfg.master_seed = std::stoull(val);
    else if (key == "episodes")
      cfg.episodes = std::stoi(val);
    else if (key == "steps")
      cfg.steps = std::stoi(val);
    else if (key == "horizon")
      cfg.horizon = std::stoi(val);
    else if (key == "w1")
      cfg.w1 = std::stod(val);
    else if (key == "w2")
      cfg.w2 = std::stod(val);
    else if (key == "w3")
      cfg.w3 = std::stod(val);
    else if (key == "output_dir")
      cfg.output_dir = val;
    else if (key == "benchmark_cap_s")
      cfg.benchmark_cap_s = std::stod(val);
    else if (key == "step_cap_s")
      cfg.step_cap_s = std::stod(val);
    else if (key == "early_term_window_s")
      cfg.early_term_window_s = std::stod(val);
    else if (key == "early_term_min_drop")
      cfg.early_term_min_drop = std::stod(val);
    else if (key == "threads")
      cfg.threads = std::stoi(val);
    else if (key == "start_kappa")
      cfg.start_kappa = std::stoi(val);
    else if (key == "top_k")
      cfg.top_k = std::stoi(val);
    else if (key == "train_iterations")
      cfg.train_iterations = std::stol(val);
    else if (key == "dataset_budget")
      cfg.dataset_budget = std::stol(val);
    else if (key == "dataset_episodes")
      cfg.dataset_episodes = std::stoi(val);
    else if (key == "dataset_steps")
      cfg.dataset_steps = std::stoi(val);
    else if (key == "weights_dir")
      cfg.weights_dir = val;
    else if (key == "dataset_file")
      cfg.dataset_file = val;
    else
      throw ConfigError("config: unknown key '" + key + "'");
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

std::uint64_t config_hash(const std::string& text) { return fnv1a(text); }

int effective_threads(const ExperimentConfig& cfg, int flag_override) {
  if (flag_override > 0) return flag_override;
  if (cfg.threads > 0) return cfg.threads;
  if (const char* env = std::getenv("RAILSCHED_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

SlotIdx default_start(const net::Network& net, const ExperimentConfig& cfg) {
  if (cfg.start_kappa >= 0) return cfg.start_kappa;
  int d = 0;
  for (const auto& p : net.platforms)
    if (net.is_direction_start(p.id)) d = std::max(d, net.link_delta(p.id));
  return d + 2;
}

mpc::StrategyConfig strategy_config(const ExperimentConfig& cfg, mpc::StrategyKind kind) {
  mpc::StrategyConfig s;
  s.kind = kind;
  s.horizon = cfg.horizon;
  s.time_limit_s = kind == mpc::StrategyKind::Benchmark ? cfg.benchmark_cap_s : cfg.step_cap_s;
  s.early_term_window_s = cfg.early_term_window_s;
  s.early_term_min_drop = cfg.early_term_min_drop;
  s.top_k = cfg.top_k;
  s.weights = {cfg.w1, cfg.w2, cfg.w3};
  return s;
}

mip::SolverConfig solver_config(const ExperimentConfig& cfg) {
  mip::SolverConfig c;
  c.seed = cfg.master_seed;
  return c;
}

BatchResult run_matched(const net::Network& net, const demand::DemandProfile& base,
                        const ExperimentConfig& cfg, const std::vector<std::string>& strategies,
                        int episodes, int steps, const learn::Ensemble* ensemble, int threads) {
  BatchResult out;
  const SlotIdx start = default_start(net, cfg);

  // Scenario stream shared across strategies: paired comparisons by instance.
  std::vector<demand::DemandScenario> scenarios;
  for (int e = 0; e < episodes; ++e)
    scenarios.push_back(
        demand::sample_scenario(base, derive_seed(cfg.master_seed, "scenario", std::uint64_t(e))));

  struct Job {
    size_t strat = 0;
    int episode = 0;
  };
  std::vector<Job> jobs;
  for (size_t s = 0; s < strategies.size(); ++s) {
    out.by_strategy[strategies[s]].resize(size_t(episodes));
    for (int e = 0; e < episodes; ++e) jobs.push_back({s, e});
  }

  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      const Job job = jobs[j];
      const auto kind = mpc::parse_strategy(strategies[job.strat]);
      auto strat = strategy_config(cfg, kind);
      auto solver = solver_config(cfg);
      std::unique_ptr<learn::EnsembleOracle> oracle;
      if (kind == mpc::StrategyKind::LearningLp || kind == mpc::StrategyKind::LearningNlp) {
        if (!ensemble) throw ConfigError("learning strategy requested without trained weights");
        oracle = std::make_unique<learn::EnsembleOracle>(net, *ensemble, cfg.top_k);
      }
      mpc::Controller ctl(net, scenarios[size_t(job.episode)], strat, solver, oracle.get());
      out.by_strategy[strategies[job.strat]][size_t(job.episode)] = ctl.run(start, steps);
    }
  };

  const int nthreads = std::max(1, std::min<int>(threads, int(jobs.size())));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return out;
}

MetricsTable compute_metrics(const std::map<std::string, std::vector<mpc::EpisodeLog>>& logs,
                             const std::vector<mpc::EpisodeLog>& benchmark) {
  MetricsTable table;
  for (const auto& [name, runs] : logs) {
    if (runs.size() != benchmark.size())
      throw std::invalid_argument("compute_metrics: unmatched instance pairing for " + name);
    StrategyMetrics m;
    m.strategy = name;
    m.instances = int(runs.size());
    m.gap_max = -kInf;
    m.gap_min = kInf;
    m.time_max = -kInf;
    m.time_min = kInf;
    double gap_acc = 0, time_acc = 0;
    long steps = 0, prefeas = 0, feas = 0;
    for (size_t i = 0; i < runs.size(); ++i) {
      if (runs[i].scenario_seed != benchmark[i].scenario_seed)
        throw std::invalid_argument("compute_metrics: scenario mismatch at instance " +
                                    std::to_string(i));
      const double jb = benchmark[i].total_objective();
      const double gap = (runs[i].total_objective() - jb) / std::max(std::abs(jb), 1e-9);
      gap_acc += gap;
      m.gap_max = std::max(m.gap_max, gap);
      m.gap_min = std::min(m.gap_min, gap);
      for (const auto& r : runs[i].steps) {
        time_acc += r.solve_det_s;
        m.time_max = std::max(m.time_max, r.solve_det_s);
        m.time_min = std::min(m.time_min, r.solve_det_s);
        ++steps;
        if (r.prefallback_feasible) ++prefeas;
        if (r.feasible) ++feas;
      }
    }
    m.gap_mean = runs.empty() ? 0 : gap_acc / double(runs.size());
    m.time_mean = steps == 0 ? 0 : time_acc / double(steps);
    m.feas_rate_prefallback = steps == 0 ? 1 : double(prefeas) / double(steps);
    m.feas_rate_closedloop = steps == 0 ? 1 : double(feas) / double(steps);
    table.rows.push_back(m);
  }
  return table;
}

std::string metrics_csv(const MetricsTable& table) {
  std::ostringstream out;
  out << "strategy,gap_max,gap_mean,gap_min,time_max_s,time_mean_s,time_min_s,"
         "feasibility_prefallback,feasibility_closedloop,instances\n";
  for (const auto& m : table.rows)
    out << m.strategy << ',' << fmt(m.gap_max) << ',' << fmt(m.gap_mean) << ',' << fmt(m.gap_min)
        << ',' << fmt(m.time_max) << ',' << fmt(m.time_mean) << ',' << fmt(m.time_min) << ','
        << fmt(m.feas_rate_prefallback) << ',' << fmt(m.feas_rate_closedloop) << ','
        << m.instances << "\n";
  return out.str();
}

std::string metrics_summary(const MetricsTable& table) {
  std::ostringstream out;
  out << "strategy            gap[max/mean/min]%            time[max/mean/min]s        "
         "feas[pre/closed]%\n";
  for (const auto& m : table.rows) {
    char line[256];
    std::snprintf(line, sizeof line, "%-18s %8.2f %8.2f %8.2f   %8.2f %8.2f %8.2f   %6.2f %6.2f\n",
                  m.strategy.c_str(), 100 * m.gap_max, 100 * m.gap_mean, 100 * m.gap_min,
                  m.time_max, m.time_mean, m.time_min, 100 * m.feas_rate_prefallback,
                  100 * m.feas_rate_closedloop);
    out << line;
  }
  return out.str();
}

std::string episode_csv(const mpc::EpisodeLog& log, const mpc::EpisodeLog* benchmark) {
  std::ostringstream out;
  out << "kappa,strategy,objective,solve_time_s,gap_vs_benchmark,fallback_used,feasible\n";
  for (size_t i = 0; i < log.steps.size(); ++i) {
    const auto& r = log.steps[i];
    out << r.kappa << ',' << log.strategy << ',' << fmt(r.objective) << ','
        << fmt(r.solve_det_s) << ',';
    if (benchmark && i < benchmark->steps.size()) {
      const double jb = benchmark->steps[i].objective;
      out << fmt((r.objective - jb) / std::max(std::abs(jb), 1e-9));
    }
    out << ',' << (r.fallback_used ? 1 : 0) << ',' << (r.feasible ? 1 : 0) << "\n";
  }
  return out.str();
}

std::string schedule_csv(const mpc::EpisodeLog& log) {
  std::ostringstream out;
  out << "platform_id,slot,departure_s,arrival_s,composition,exchange\n";
  for (const auto& [s, ap] : log.schedule)
    out << s.p << ',' << s.k << ',' << fmt(ap.d) << ',' << fmt(ap.a) << ',' << ap.l << ','
        << ap.y << "\n";
  return out.str();
}

std::map<model::Slot, model::AppliedSlot> load_schedule_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open schedule file: " + path);
  std::map<model::Slot, model::AppliedSlot> out;
  std::string line;
  std::getline(f, line);  // header
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream in(line);
    std::string cell;
    model::Slot s;
    model::AppliedSlot ap;
    std::getline(in, cell, ',');
    s.p = std::stoi(cell);
    std::getline(in, cell, ',');
    s.k = std::stoi(cell);
    std::getline(in, cell, ',');
    ap.d = std::stod(cell);
    std::getline(in, cell, ',');
    ap.a = std::stod(cell);
    std::getline(in, cell, ',');
    ap.l = std::stoi(cell);
    std::getline(in, cell, ',');
    ap.y = std::stoi(cell);
    out[s] = ap;
  }
  return out;
}

DiagramFiles export_diagram(const net::Network& net,
                            const std::map<model::Slot, model::AppliedSlot>& schedule,
                            int line_id) {
  const net::Line* line = nullptr;
  for (const auto& l : net.lines)
    if (l.id == line_id) line = &l;
  if (!line) throw std::out_of_range("export_diagram: unknown line " + std::to_string(line_id));

  // Direction runs: maximal same-direction stretches of the loop.
  std::vector<std::vector<PlatformId>> runs;
  for (PlatformId p : line->platforms) {
    if (runs.empty() || net.platform(runs.back().back()).direction != net.platform(p).direction)
      runs.push_back({});
    runs.back().push_back(p);
  }

  struct Point {
    std::string service;
    int seq;
    PlatformId platform;
    int station;
    double arr, dep;
    int composition;
  };
  std::vector<Point> points;
  for (const auto& run : runs) {
    const bool up = net.platform(run.front()).direction == net::Direction::Up;
    // Collect slot indices present at the run's first platform.
    for (const auto& [slot, ap] : schedule) {
      (void)ap;
      if (slot.p != run.front()) continue;
      const SlotIdx k = slot.k;
      std::string sid = std::string(up ? "up_" : "down_") + std::to_string(k);
      int seq = 0;
      for (PlatformId p : run) {
        auto it = schedule.find({p, k});
        if (it == schedule.end()) break;
        points.push_back({sid, seq++, p, net.platform(p).station_id, it->second.a, it->second.d,
                          it->second.l});
      }
    }
  }

  std::ostringstream csv;
  csv << "service,seq,platform_id,station,arrival_s,departure_s,composition\n";
  for (const auto& pt : points)
    csv << pt.service << ',' << pt.seq << ',' << pt.platform << ',' << pt.station << ','
        << fmt(pt.arr) << ',' << fmt(pt.dep) << ',' << pt.composition << "\n";

  // SVG rendering: x time, y station, stroke width = composition.
  double tmin = kInf, tmax = -kInf;
  int smin = 1 << 30, smax = -(1 << 30);
  for (const auto& pt : points) {
    tmin = std::min(tmin, pt.arr);
    tmax = std::max(tmax, pt.dep);
    smin = std::min(smin, pt.station);
    smax = std::max(smax, pt.station);
  }
  if (points.empty()) {
    tmin = 0;
    tmax = 1;
    smin = 0;
    smax = 1;
  }
  const double W = 1000, H = 420, M = 40;
  auto X = [&](double t) { return M + (t - tmin) / std::max(1.0, tmax - tmin) * W; };
  auto Y = [&](int s) {
    return M + double(smax - s) / std::max(1, smax - smin) * H;
  };
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W + 2 * M << "\" height=\""
      << H + 2 * M << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int s = smin; s <= smax; ++s)
    svg << "<line x1=\"" << M << "\" y1=\"" << Y(s) << "\" x2=\"" << M + W << "\" y2=\"" << Y(s)
        << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
  // Per-service polylines: dwell at a platform, then the run to the next one.
  std::string cur;
  for (size_t i = 0; i < points.size(); ++i) {
    const auto& pt = points[i];
    const double wpx = 1.2 * pt.composition;
    svg << "<line x1=\"" << X(pt.arr) << "\" y1=\"" << Y(pt.station) << "\" x2=\"" << X(pt.dep)
        << "\" y2=\"" << Y(pt.station) << "\" stroke=\"black\" stroke-width=\"" << wpx
        << "\"/>\n";
    if (i + 1 < points.size() && points[i + 1].service == pt.service &&
        points[i + 1].seq == pt.seq + 1) {
      svg << "<line x1=\"" << X(pt.dep) << "\" y1=\"" << Y(pt.station) << "\" x2=\""
          << X(points[i + 1].arr) << "\" y2=\"" << Y(points[i + 1].station)
          << "\" stroke=\"black\" stroke-width=\"" << wpx << "\"/>\n";
    }
    cur = pt.service;
  }
  svg << "</svg>\n";
  return {csv.str(), svg.str()};
}

std::string manifest_text(const ExperimentConfig& cfg, const std::string& config_text,
                          const std::string& command) {
  std::ostringstream out;
  out << "railsched 0.1.0\n";
  out << "command = " << command << "\n";
  out << "config_hash = " << config_hash(config_text) << "\n";
  out << "master_seed = " << cfg.master_seed << "\n";
  out << "seed_scheme = splitmix64(master ^ fnv1a(component) ^ golden*(index+1))\n";
  out << "scenario_seed[i] = derive_seed(master, \"scenario\", i)\n";
  out << "net_seed[i] = derive_seed(master, \"net\", i)\n";
  return out.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write file: " + path);
  f << content;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace railsched::harness
