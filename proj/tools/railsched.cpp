#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "railsched/harness.hpp"
#include "railsched/mps.hpp"

namespace fs = std::filesystem;
using namespace railsched;

namespace {

struct Common {
  std::string config_path;
  int threads_flag = 0;
};

struct Loaded {
  harness::ExperimentConfig cfg;
  std::string cfg_text;
  net::Network network;
  demand::DemandProfile base;
};

Loaded load(const Common& c, bool need_demand = true) {
  Loaded l;
  l.cfg_text = harness::read_file(c.config_path);
  l.cfg = harness::parse_config(l.cfg_text);
  if (l.cfg.network_file.empty()) throw ConfigError("config: network file not set");
  l.network = net::load_network(l.cfg.network_file);
  if (need_demand) {
    if (l.cfg.demand_file.empty()) throw ConfigError("config: demand file not set");
    l.base = demand::load_demand(l.cfg.demand_file, l.network.timetable);
  }
  return l;
}

learn::Ensemble load_ensemble(const harness::ExperimentConfig& cfg) {
  if (cfg.weights_dir.empty()) throw ConfigError("config: weights_dir not set");
  learn::Ensemble e;
  for (int i = 0;; ++i) {
    const fs::path p = fs::path(cfg.weights_dir) / ("ensemble_" + std::to_string(i) + ".bin");
    if (!fs::exists(p)) break;
    e.nets.push_back(learn::load_weights(p.string()));
  }
  if (e.nets.empty()) throw ConfigError("no ensemble weights under " + cfg.weights_dir);
  return e;
}

bool needs_ensemble(const std::vector<std::string>& strategies) {
  for (const auto& s : strategies)
    if (s == "learning_lp" || s == "learning_nlp") return true;
  return false;
}

std::string join_args(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rolling-horizon train rescheduling"};
  app.require_subcommand(1);
  Common common;
  int exit_code = 0;
  const std::string command_line = join_args(argc, argv);

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "experiment config file")->required();
    sub->add_option("--threads", common.threads_flag, "worker pool bound (overrides env)");
  };

  // net validate
  auto* net_cmd = app.add_subcommand("net", "network file tools");
  auto* net_validate = net_cmd->add_subcommand("validate", "check every network invariant");
  std::string net_override;
  add_common(net_validate);
  net_validate->add_option("--network", net_override, "network file (overrides config)");
  net_validate->callback([&] {
    auto cfg_text = harness::read_file(common.config_path);
    auto cfg = harness::parse_config(cfg_text);
    const std::string path = net_override.empty() ? cfg.network_file : net_override;
    auto network = net::load_network(path);
    auto rep = net::validate_network(network);
    for (const auto& v : rep.violations) std::cout << "violation: " << v.what << "\n";
    if (!rep.ok()) {
      exit_code = 1;
      return;
    }
    std::cout << "ok: " << network.platforms.size() << " platforms, "
              << network.depots.size() << " depot(s)\n";
  });

  // demand sample
  auto* demand_cmd = app.add_subcommand("demand", "demand tools");
  auto* demand_sample = demand_cmd->add_subcommand("sample", "draw a scenario from the profile");
  std::uint64_t sample_index = 0;
  std::string sample_out;
  add_common(demand_sample);
  demand_sample->add_option("--seed", sample_index, "scenario index under the master seed");
  demand_sample->add_option("--out", sample_out, "output scenario csv");
  demand_sample->callback([&] {
    auto l = load(common);
    auto sc = demand::sample_scenario(l.base, derive_seed(l.cfg.master_seed, "scenario",
                                                          sample_index));
    const std::string out = sample_out.empty()
                                ? (fs::path(l.cfg.output_dir) / "scenario.csv").string()
                                : sample_out;
    fs::create_directories(fs::path(out).parent_path().empty() ? "." : fs::path(out).parent_path());
    demand::save_scenario(sc, out);
    std::cout << "scenario " << sc.seed << " -> " << out << "\n";
  });

  // solve open
  auto* solve_cmd = app.add_subcommand("solve", "single-window solves");
  auto* solve_open = solve_cmd->add_subcommand("open", "one open-loop window solve");
  std::string open_strategy = "milp";
  std::uint64_t open_index = 0;
  std::string open_mps;
  add_common(solve_open);
  solve_open->add_option("--strategy", open_strategy, "strategy name");
  solve_open->add_option("--seed", open_index, "scenario index under the master seed");
  solve_open->add_option("--mps", open_mps, "also export the window as MPS");
  solve_open->callback([&] {
    auto l = load(common);
    auto sc = demand::sample_scenario(l.base,
                                      derive_seed(l.cfg.master_seed, "scenario", open_index));
    const auto kind = mpc::parse_strategy(open_strategy);
    std::unique_ptr<learn::EnsembleOracle> oracle;
    learn::Ensemble ens;
    if (kind == mpc::StrategyKind::LearningLp || kind == mpc::StrategyKind::LearningNlp) {
      ens = load_ensemble(l.cfg);
      oracle = std::make_unique<learn::EnsembleOracle>(l.network, ens, l.cfg.top_k);
    }
    mpc::Controller ctl(l.network, sc, harness::strategy_config(l.cfg, kind),
                        harness::solver_config(l.cfg), oracle.get());
    const SlotIdx start = harness::default_start(l.network, l.cfg);
    auto log = ctl.run(start, 1);

    fs::create_directories(l.cfg.output_dir);
    const std::string stem =
        "open_" + open_strategy + "_" + std::to_string(open_index);
    std::ostringstream res;
    const auto& r = log.steps[0];
    res << "strategy = " << open_strategy << "\n";
    res << "scenario_seed = " << sc.seed << "\n";
    res << "kappa = " << r.kappa << "\n";
    res << "objective_realized = " << r.objective << "\n";
    res << "objective_plan = " << r.incumbent_obj << "\n";
    res << "solve_time_s = " << r.solve_det_s << "\n";
    res << "gap = " << r.gap << "\n";
    res << "nodes = " << r.nodes << "\n";
    res << "feasible = " << (r.feasible ? 1 : 0) << "\n";
    res << "fallback_used = " << (r.fallback_used ? 1 : 0) << "\n";
    harness::write_file((fs::path(l.cfg.output_dir) / (stem + ".txt")).string(), res.str());
    harness::write_file((fs::path(l.cfg.output_dir) / (stem + "_schedule.csv")).string(),
                        harness::schedule_csv(log));
    if (!open_mps.empty()) {
      model::BuildInputs in;
      in.network = &l.network;
      in.scenario = &sc;
      in.k0 = start;
      in.n_steps = l.cfg.horizon;
      in.weights = {l.cfg.w1, l.cfg.w2, l.cfg.w3};
      auto init = model::InitialCondition::nominal(l.network);
      in.init = &init;
      auto sp = model::build_problem(in);
      mps::save_mps(sp, open_mps);
    }
    std::cout << harness::read_file((fs::path(l.cfg.output_dir) / (stem + ".txt")).string());
  });

  // mpc run
  auto* mpc_cmd = app.add_subcommand("mpc", "closed-loop control");
  auto* mpc_run = mpc_cmd->add_subcommand("run", "run closed-loop episodes for one strategy");
  std::string run_strategy = "milp";
  int run_episodes = -1, run_steps = -1;
  add_common(mpc_run);
  mpc_run->add_option("--strategy", run_strategy, "strategy name");
  mpc_run->add_option("--episodes", run_episodes, "episode count (overrides config)");
  mpc_run->add_option("--steps", run_steps, "steps per episode (overrides config)");
  mpc_run->callback([&] {
    auto l = load(common);
    const int episodes = run_episodes > 0 ? run_episodes : l.cfg.episodes;
    const int steps = run_steps > 0 ? run_steps : l.cfg.steps;
    learn::Ensemble ens;
    const learn::Ensemble* ens_ptr = nullptr;
    if (needs_ensemble({run_strategy})) {
      ens = load_ensemble(l.cfg);
      ens_ptr = &ens;
    }
    auto batch = harness::run_matched(l.network, l.base, l.cfg, {run_strategy}, episodes, steps,
                                      ens_ptr, harness::effective_threads(l.cfg, common.threads_flag));
    fs::create_directories(l.cfg.output_dir);
    const auto& logs = batch.by_strategy.at(run_strategy);
    for (size_t i = 0; i < logs.size(); ++i) {
      const std::string stem = run_strategy + "_ep" + std::to_string(i);
      harness::write_file((fs::path(l.cfg.output_dir) / (stem + ".csv")).string(),
                          harness::episode_csv(logs[i], nullptr));
      harness::write_file((fs::path(l.cfg.output_dir) / (stem + "_schedule.csv")).string(),
                          harness::schedule_csv(logs[i]));
    }
    harness::write_file((fs::path(l.cfg.output_dir) / "manifest.txt").string(),
                        harness::manifest_text(l.cfg, l.cfg_text, command_line));
    double total = 0;
    long infeasible = 0;
    for (const auto& lg : logs) {
      total += lg.total_objective();
      for (const auto& r : lg.steps)
        if (!r.feasible) ++infeasible;
    }
    std::cout << run_strategy << ": " << episodes << " episode(s), total objective " << total
              << ", infeasible steps " << infeasible << "\n";
  });

  // data gen
  auto* data_cmd = app.add_subcommand("data", "training data tools");
  auto* data_gen = data_cmd->add_subcommand("gen", "label candidate actions along episodes");
  long gen_samples = -1;
  std::string gen_out, gen_driver = "benchmark";
  add_common(data_gen);
  data_gen->add_option("--samples", gen_samples, "sample budget (overrides config)");
  data_gen->add_option("--out", gen_out, "output dataset csv");
  data_gen->add_option("--driver", gen_driver, "strategy steering the visited states");
  data_gen->callback([&] {
    auto l = load(common);
    learn::GenOptions gopt;
    gopt.budget = gen_samples > 0 ? gen_samples : l.cfg.dataset_budget;
    gopt.episodes = l.cfg.dataset_episodes;
    gopt.steps = l.cfg.dataset_steps;
    gopt.start_kappa = harness::default_start(l.network, l.cfg);
    gopt.driver = harness::strategy_config(l.cfg, mpc::parse_strategy(gen_driver));
    gopt.solver = harness::solver_config(l.cfg);
    gopt.seed = derive_seed(l.cfg.master_seed, "dataset");
    auto ds = learn::generate_dataset(l.network, l.base, gopt);
    const std::string out =
        gen_out.empty()
            ? (l.cfg.dataset_file.empty() ? (fs::path(l.cfg.output_dir) / "dataset.csv").string()
                                          : l.cfg.dataset_file)
            : gen_out;
    fs::create_directories(fs::path(out).parent_path().empty() ? "." : fs::path(out).parent_path());
    learn::save_dataset(ds, out);
    std::cout << ds.samples.size() << " samples -> " << out << "\n";
  });

  // train
  auto* train_cmd = app.add_subcommand("train", "train the scorer ensemble");
  std::string train_dataset, train_out;
  add_common(train_cmd);
  train_cmd->add_option("--dataset", train_dataset, "dataset csv (overrides config)");
  train_cmd->add_option("--out", train_out, "weights directory (overrides config)");
  train_cmd->callback([&] {
    auto cfg_text = harness::read_file(common.config_path);
    auto cfg = harness::parse_config(cfg_text);
    const std::string ds_path = train_dataset.empty() ? cfg.dataset_file : train_dataset;
    if (ds_path.empty()) throw ConfigError("train: no dataset file configured");
    auto ds = learn::load_dataset(ds_path);
    auto ens = learn::make_ensemble(ds.layout, ds.candidate_count,
                                    derive_seed(cfg.master_seed, "net"));
    const std::string out_dir = train_out.empty() ? cfg.weights_dir : train_out;
    if (out_dir.empty()) throw ConfigError("train: no weights_dir configured");
    fs::create_directories(out_dir);
    for (size_t i = 0; i < ens.nets.size(); ++i) {
      learn::TrainOptions topt;
      topt.iterations = cfg.train_iterations;
      topt.seed = derive_seed(cfg.master_seed, "train", i);
      auto res = learn::train_scorer(ens.nets[i], ds, topt);
      learn::save_weights(ens.nets[i], (fs::path(out_dir) / ("ensemble_" + std::to_string(i) +
                                                             ".bin")).string());
      std::ostringstream curve;
      curve << "iteration,loss,moving_avg_1000\n";
      auto ma = res.moving_average(1000);
      for (size_t t = 0; t < res.loss_history.size(); ++t)
        curve << t + 1 << ',' << res.loss_history[t] << ',' << ma[t] << "\n";
      harness::write_file((fs::path(out_dir) / ("loss_" + std::to_string(i) + ".csv")).string(),
                          curve.str());
      std::cout << "net " << i << ": hidden " << ens.nets[i].cfg.hidden << ", dropout "
                << ens.nets[i].cfg.dropout << ", final moving-average loss " << ma.back() << "\n";
    }
  });

  // eval compare
  auto* eval_cmd = app.add_subcommand("eval", "evaluation tools");
  auto* eval_compare = eval_cmd->add_subcommand("compare", "paired strategy comparison");
  std::string eval_strategies;
  int eval_episodes = -1, eval_steps = -1;
  add_common(eval_compare);
  eval_compare->add_option("--strategies", eval_strategies, "comma list (overrides config)");
  eval_compare->add_option("--episodes", eval_episodes, "episode count (overrides config)");
  eval_compare->add_option("--steps", eval_steps, "steps per episode (overrides config)");
  eval_compare->callback([&] {
    auto l = load(common);
    std::vector<std::string> strategies = l.cfg.strategies;
    if (!eval_strategies.empty()) {
      strategies.clear();
      std::istringstream ss(eval_strategies);
      std::string tok;
      while (std::getline(ss, tok, ',')) strategies.push_back(tok);
    }
    if (std::find(strategies.begin(), strategies.end(), "benchmark") == strategies.end())
      strategies.insert(strategies.begin(), "benchmark");
    const int episodes = eval_episodes > 0 ? eval_episodes : l.cfg.episodes;
    const int steps = eval_steps > 0 ? eval_steps : l.cfg.steps;
    learn::Ensemble ens;
    const learn::Ensemble* ens_ptr = nullptr;
    if (needs_ensemble(strategies)) {
      ens = load_ensemble(l.cfg);
      ens_ptr = &ens;
    }
    auto batch = harness::run_matched(l.network, l.base, l.cfg, strategies, episodes, steps,
                                      ens_ptr, harness::effective_threads(l.cfg, common.threads_flag));
    auto metrics = harness::compute_metrics(batch.by_strategy, batch.by_strategy.at("benchmark"));
    fs::create_directories(l.cfg.output_dir);
    harness::write_file((fs::path(l.cfg.output_dir) / "metrics.csv").string(),
                        harness::metrics_csv(metrics));
    harness::write_file((fs::path(l.cfg.output_dir) / "summary.txt").string(),
                        harness::metrics_summary(metrics));
    for (const auto& [name, logs] : batch.by_strategy)
      for (size_t i = 0; i < logs.size(); ++i)
        harness::write_file(
            (fs::path(l.cfg.output_dir) / (name + "_ep" + std::to_string(i) + ".csv")).string(),
            harness::episode_csv(logs[i], &batch.by_strategy.at("benchmark")[i]));
    harness::write_file((fs::path(l.cfg.output_dir) / "manifest.txt").string(),
                        harness::manifest_text(l.cfg, l.cfg_text, command_line));
    std::cout << harness::metrics_summary(metrics);
  });

  // export diagram
  auto* export_cmd = app.add_subcommand("export", "exports");
  auto* export_diagram = export_cmd->add_subcommand("diagram", "time-distance diagram");
  std::string diagram_schedule, diagram_out = "diagram";
  int diagram_line = 1;
  add_common(export_diagram);
  export_diagram->add_option("--schedule", diagram_schedule, "schedule csv from a run")
      ->required();
  export_diagram->add_option("--line", diagram_line, "line id");
  export_diagram->add_option("--out", diagram_out, "output basename");
  export_diagram->callback([&] {
    auto l = load(common, false);
    auto schedule = harness::load_schedule_csv(diagram_schedule);
    auto files = harness::export_diagram(l.network, schedule, diagram_line);
    harness::write_file(diagram_out + ".csv", files.csv);
    harness::write_file(diagram_out + ".svg", files.svg);
    std::cout << "wrote " << diagram_out << ".csv and " << diagram_out << ".svg\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return exit_code;
}
