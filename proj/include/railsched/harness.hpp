#pragma once

#include <map>
#include <string>
#include <vector>

#include "railsched/learning.hpp"
#include "railsched/mpc.hpp"

namespace railsched::harness {

struct ExperimentConfig {
  std::string network_file;
  std::string demand_file;
  std::vector<std::string> strategies{"benchmark", "milp"};
  std::uint64_t master_seed = 1;
  int episodes = 10;
  int steps = 30;
  int horizon = 10;
  double w1 = 1e-4, w2 = 1e-1, w3 = 1e-1;
  std::string output_dir = "out";
  double benchmark_cap_s = 60;
  double step_cap_s = 240;
  double early_term_window_s = 10;
  double early_term_min_drop = 0.005;
  int threads = 0;  // 0: RAILSCHED_THREADS, else 1
  SlotIdx start_kappa = -1;  // -1: earliest slot with full history
  int top_k = 3;
  long train_iterations = 6000;
  long dataset_budget = 5000;
  int dataset_episodes = 50;
  int dataset_steps = 12;
  std::string weights_dir;
  std::string dataset_file;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::uint64_t config_hash(const std::string& text);

// Effective worker count: --threads flag beats RAILSCHED_THREADS beats 1.
int effective_threads(const ExperimentConfig& cfg, int flag_override);

SlotIdx default_start(const net::Network& net, const ExperimentConfig& cfg);
mpc::StrategyConfig strategy_config(const ExperimentConfig& cfg, mpc::StrategyKind kind);
mip::SolverConfig solver_config(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Matched batch runs: one scenario stream shared by every strategy, episodes
// fanned out over a bounded worker pool, results merged by instance id.

struct BatchResult {
  std::map<std::string, std::vector<mpc::EpisodeLog>> by_strategy;
};

BatchResult run_matched(const net::Network& net, const demand::DemandProfile& base,
                        const ExperimentConfig& cfg, const std::vector<std::string>& strategies,
                        int episodes, int steps, const learn::Ensemble* ensemble,
                        int threads);

// ---------------------------------------------------------------------------
// Metrics (gap vs the benchmark run on identical scenarios)

struct StrategyMetrics {
  std::string strategy;
  double gap_max = 0, gap_mean = 0, gap_min = 0;
  double time_max = 0, time_mean = 0, time_min = 0;
  double feas_rate_prefallback = 1.0;  // before any recovery
  double feas_rate_closedloop = 1.0;   // after recovery
  int instances = 0;
};

struct MetricsTable {
  std::vector<StrategyMetrics> rows;
};

MetricsTable compute_metrics(const std::map<std::string, std::vector<mpc::EpisodeLog>>& logs,
                             const std::vector<mpc::EpisodeLog>& benchmark);

std::string metrics_csv(const MetricsTable& table);
std::string metrics_summary(const MetricsTable& table);

// ---------------------------------------------------------------------------
// Episode / schedule serialization

std::string episode_csv(const mpc::EpisodeLog& log, const mpc::EpisodeLog* benchmark);
std::string schedule_csv(const mpc::EpisodeLog& log);
std::map<model::Slot, model::AppliedSlot> load_schedule_csv(const std::string& path);

// ---------------------------------------------------------------------------
// Time-distance diagrams: polyline points as CSV plus an SVG rendering whose
// stroke width encodes the composition.

struct DiagramFiles {
  std::string csv;
  std::string svg;
};

DiagramFiles export_diagram(const net::Network& net,
                            const std::map<model::Slot, model::AppliedSlot>& schedule,
                            int line_id);

// ---------------------------------------------------------------------------
// Run manifest: enough to reproduce a run bit for bit.

std::string manifest_text(const ExperimentConfig& cfg, const std::string& config_text,
                          const std::string& command);

void write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace railsched::harness
