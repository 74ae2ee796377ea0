#include <pthread.h>
#include <signal.h>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/cfg/helpers.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "aim/harness/config_file.hpp"
#include "aim/harness/replay.hpp"
#include "aim/harness/report.hpp"
#include "aim/session/server.hpp"

namespace fs = std::filesystem;
using namespace aim;

namespace {

/// Desk defaults for `env`, then the config file, then command-line overrides.
harness::ExperimentConfig base_config(worlds::EnvKind env, const std::string& config_path) {
  harness::ExperimentConfig x;
  x.env = env;
  x.aim = harness::desk_config(env);
  if (!config_path.empty()) harness::apply_config(x, harness::load_config(config_path));
  return x;
}

worlds::EnvKind parse_env(const std::string& name) { return worlds::env_kind_from_string(name); }

struct RunArgs {
  std::vector<std::string> algos{"aim"};
  std::string env = "fourrooms";
  int seeds = -1;
  long first_seed = -1;
  long budget = -1;
  long steps = -1;
  std::string out = "runs";
  std::string config;
};

int cmd_run(const RunArgs& a) {
  std::vector<std::string> methods;
  for (const auto& m : a.algos) {
    if (m == "all") {
      methods = harness::all_methods();
      break;
    }
    if (!harness::is_known_method(m)) throw InvalidArgument("unknown algorithm: " + m);
    methods.push_back(m);
  }
  auto x = base_config(parse_env(a.env), a.config);
  if (a.seeds > 0) x.seeds = a.seeds;
  if (a.first_seed >= 0) x.first_seed = static_cast<std::uint64_t>(a.first_seed);
  if (a.budget >= 0) x.aim.expert_budget = a.budget;
  if (a.steps > 0) x.aim.total_step_cap = a.steps;
  x.aim.validate();

  fs::create_directories(a.out);
  const auto space = worlds::make_environment(x.env)->action_space();
  std::vector<harness::MetricRow> rows;
  int failures = 0;
  // Metrics and summary are rewritten after every run so an interrupted sweep keeps its results.
  auto write_tables = [&] {
    std::ofstream metrics(fs::path(a.out) / "metrics.csv");
    harness::write_metrics_csv(metrics, rows);
    std::ofstream summary(fs::path(a.out) / "summary.csv");
    harness::write_summary_csv(summary, harness::summarize(rows));
  };
  for (const auto& method : methods) {
    x.method = method;
    for (int i = 0; i < x.seeds; ++i) {
      const auto seed = x.first_seed + static_cast<std::uint64_t>(i);
      spdlog::info("run {} on {} seed {}", method, a.env, seed);
      const auto run = harness::run_method(x, seed);
      const auto log_path = harness::save_run_log(run, a.out);
      nn::save(run.policy().net(),
               (fs::path(a.out) / fmt::format("policy_{}_{}_{}.json", method, worlds::to_string(x.env), seed)).string());
      const long novice = method == "bc" ? -1 : static_cast<long>(run.result.novice.size());
      const auto rep = harness::check_run_log(run.result.log, space, static_cast<long>(run.result.human.size()), novice);
      if (!rep.ok()) {
        ++failures;
        for (const auto& v : rep.violations) spdlog::error("{}: {}", log_path.string(), v);
      }
      const auto r = metric_rows(run);
      rows.insert(rows.end(), r.begin(), r.end());
      write_tables();
      const auto& best = harness::best_checkpoint(run.checkpoints);
      spdlog::info("  best success {:.2f} at {} expert / {} total steps", best.eval.success_rate,
                   best.expert_steps, best.total_steps);
    }
  }
  harness::write_summary_csv(std::cout, harness::summarize(rows));
  if (failures) spdlog::error("{} run(s) failed the protocol replay check", failures);
  return failures ? 2 : 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& env_name, int rollouts, const std::string& config) {
  const auto x = base_config(parse_env(env_name), config);
  auto env = worlds::make_environment(x.env, x.env_params);
  auto net = nn::load<Real>(checkpoint);
  if (net.input_size() != env->observation_size()) {
    throw InvalidArgument(fmt::format("checkpoint expects {} inputs, {} observations have {}", net.input_size(),
                                      env_name, env->observation_size()));
  }
  const Policy policy(env->action_space(), std::move(net));
  const auto rep = harness::evaluate(policy, *env, rollouts);
  nlohmann::json out{{"env", worlds::to_string(x.env)},
                     {"rollouts", rep.n_rollouts},
                     {"success_rate", rep.success_rate},
                     {"episodic_return", rep.episodic_return},
                     {"route_completion", rep.route_completion}};
  if (x.env == worlds::EnvKind::CorridorDrive) out["crash_rate"] = rep.crash_rate;
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_offline_bc(const std::string& runlog, const std::vector<std::size_t>& grid, int rollouts, int bc_steps,
                   const std::string& config, const std::string& out_csv) {
  const auto log = RunLog::load(runlog);
  const auto env_kind = parse_env(log.header.at("env").get<std::string>());
  auto x = base_config(env_kind, config);
  if (bc_steps > 0) x.bc_train_steps = bc_steps;
  auto env = worlds::make_environment(x.env, x.env_params);
  const auto buffers = harness::rebuild_buffers(log, *env);
  spdlog::info("{} expert transitions ({} from warm-up)", buffers.human.size(), buffers.warmup_expert_steps);
  const auto curve = harness::offline_quality_curve(buffers.human, buffers.warmup_expert_steps, grid, *env, x.aim,
                                                    x.bc_train_steps, rollouts);
  std::ofstream file;
  if (!out_csv.empty()) file.open(out_csv);
  std::ostream& os = out_csv.empty() ? std::cout : file;
  os << "expert_transitions,success_rate,episodic_return,route_completion\n";
  for (const auto& [T, rep] : curve) {
    os << fmt::format("{},{:.6f},{:.6f},{:.6f}\n", T, rep.success_rate, rep.episodic_return, rep.route_completion);
  }
  return 0;
}

struct ServeArgs {
  std::string address = "127.0.0.1";
  int port = 8765;
  std::string env = "fourrooms";
  std::string algo = "aim";
  std::string config;
  long seed = 1;
  double fps = 10.0;
  bool wait_for_start = false;
  std::string out = "session";
};

int cmd_serve(const ServeArgs& a) {
  session::SessionConfig cfg;
  cfg.experiment = base_config(parse_env(a.env), a.config);
  cfg.experiment.method = a.algo;
  cfg.seed = static_cast<std::uint64_t>(a.seed);
  cfg.frames_per_second = a.fps;
  cfg.autostart = !a.wait_for_start;
  cfg.out_dir = a.out;

  // Signals are taken on their own thread so that the server can be stopped cleanly.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  sigaddset(&signals, SIGUSR1);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  session::Server server(cfg, a.address, static_cast<unsigned short>(a.port));
  server.start();
  std::cout << "listening on " << a.address << ':' << server.port() << std::endl;

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    if (sig == SIGINT || sig == SIGTERM) {
      spdlog::info("signal {}: stopping the session", sig);
      server.stop();
    }
  });
  const auto result = server.wait();
  server.stop();
  // Wake the waiter if no signal arrived.
  pthread_kill(waiter.native_handle(), SIGUSR1);
  waiter.join();
  spdlog::info("session ended after {} steps ({} expert)", result.total_steps, result.expert_steps);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // Tables and reports go to stdout; logging stays on stderr.
  spdlog::set_default_logger(spdlog::stderr_color_mt("aimctl"));
  if (const char* level = std::getenv("AIM_LOG_LEVEL")) spdlog::cfg::helpers::load_levels(level);

  CLI::App app{"Train and evaluate robot-gated interactive imitation learners."};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Train one or more methods over several seeds");
  run_cmd->add_option("--algo", run.algos, "aim, bc, hgdagger, ensemble, thrifty, aim-reward, aim-notd or all")
      ->delimiter(',');
  run_cmd->add_option("--env", run.env, "fourrooms or corridor")->check(CLI::IsMember({"fourrooms", "corridor"}));
  run_cmd->add_option("--seeds", run.seeds, "Number of seeds")->check(CLI::PositiveNumber);
  run_cmd->add_option("--first-seed", run.first_seed, "First seed");
  run_cmd->add_option("--budget", run.budget, "Expert budget (expert-involved steps)")->check(CLI::NonNegativeNumber);
  run_cmd->add_option("--steps", run.steps, "Total environment step cap")->check(CLI::PositiveNumber);
  run_cmd->add_option("--out", run.out, "Output directory");
  run_cmd->add_option("--config", run.config, "Config file")->check(CLI::ExistingFile);

  std::string checkpoint, eval_env = "fourrooms", eval_config;
  int eval_rollouts = 50;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a saved policy");
  eval_cmd->add_option("--checkpoint", checkpoint, "Policy checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--env", eval_env)->check(CLI::IsMember({"fourrooms", "corridor"}));
  eval_cmd->add_option("--rollouts", eval_rollouts)->check(CLI::PositiveNumber);
  eval_cmd->add_option("--config", eval_config)->check(CLI::ExistingFile);

  std::string runlog, bc_config, bc_out;
  std::vector<std::size_t> grid{100, 200, 400, 800};
  int bc_rollouts = 50, bc_steps = -1;
  auto* bc_cmd = app.add_subcommand("offline-bc", "Behavior cloning on growing prefixes of a run's expert data");
  bc_cmd->add_option("--runlog", runlog, "RunLog of an interactive run")->required()->check(CLI::ExistingFile);
  bc_cmd->add_option("--grid", grid, "Expert transition counts")->delimiter(',');
  bc_cmd->add_option("--rollouts", bc_rollouts)->check(CLI::PositiveNumber);
  bc_cmd->add_option("--bc-steps", bc_steps, "Optimiser steps per prefix");
  bc_cmd->add_option("--config", bc_config)->check(CLI::ExistingFile);
  bc_cmd->add_option("--out", bc_out, "CSV output file (default stdout)");

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run one training session for a remote expert console");
  serve_cmd->add_option("--address", serve.address);
  serve_cmd->add_option("--port", serve.port, "TCP port, 0 picks a free one")->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--env", serve.env)->check(CLI::IsMember({"fourrooms", "corridor"}));
  serve_cmd->add_option("--algo", serve.algo)->check(CLI::IsMember({"aim", "hgdagger", "ensemble", "thrifty",
                                                                    "aim-reward", "aim-notd"}));
  serve_cmd->add_option("--config", serve.config)->check(CLI::ExistingFile);
  serve_cmd->add_option("--seed", serve.seed);
  serve_cmd->add_option("--fps", serve.fps, "StateFrames per second while the agent drives, 0 for every step");
  serve_cmd->add_flag("--wait-for-start", serve.wait_for_start, "Wait for a start command from the client");
  serve_cmd->add_option("--out", serve.out, "Directory for the session RunLog and checkpoint");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_cmd) return cmd_run(run);
    if (*eval_cmd) return cmd_eval(checkpoint, eval_env, eval_rollouts, eval_config);
    if (*bc_cmd) return cmd_offline_bc(runlog, grid, bc_rollouts, bc_steps, bc_config, bc_out);
    if (*serve_cmd) return cmd_serve(serve);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
