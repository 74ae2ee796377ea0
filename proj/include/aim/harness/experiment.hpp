#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "aim/algo/aim.hpp"
#include "aim/baselines/learners.hpp"
#include "aim/harness/evaluate.hpp"
#include "aim/worlds/make.hpp"

namespace aim::harness {

inline const std::vector<std::string>& all_methods() {
  static const std::vector<std::string> m{"aim", "bc", "hgdagger", "ensemble", "thrifty", "aim-reward", "aim-notd"};
  return m;
}

inline bool is_known_method(const std::string& m) {
  return std::find(all_methods().begin(), all_methods().end(), m) != all_methods().end();
}

/// Hyperparameters sized for a single CPU. Architecture and step counts are scaled down from
/// the published tables; gamma, delta and the budget are kept.
inline AimConfig desk_config(worlds::EnvKind env) {
  AimConfig c = AimConfig::for_space(env == worlds::EnvKind::FourRooms);
  c.hidden = {64, 64};
  c.lr = 1e-3;
  c.q_init_steps = 500;
  c.beta_sample = 512;
  if (env == worlds::EnvKind::FourRooms) {
    c.batch_size = 200;
    c.bc_batch_size = 200;
    c.grad_steps_per_iter = 4;
    c.bc_steps_per_expert_step = 4;
    c.total_step_cap = 6000;
  } else {
    c.batch_size = 64;
    c.bc_batch_size = 64;
    c.grad_steps_per_iter = 2;
    c.bc_steps_per_expert_step = 16;
    c.total_step_cap = 12000;
  }
  return c;
}

struct ExperimentConfig {
  std::string method = "aim";
  worlds::EnvKind env = worlds::EnvKind::FourRooms;
  worlds::EnvParams env_params;
  AimConfig aim = desk_config(worlds::EnvKind::FourRooms);
  int seeds = 5;
  std::uint64_t first_seed = 1;
  long eval_every = 500;
  int eval_rollouts = 50;
  /// Offline optimiser steps for BC policies (the bc method and the data-quality curve).
  int bc_train_steps = 3000;
  baselines::EnsembleOptions ensemble;
  baselines::ThriftyOptions thrifty;
};

struct CheckpointMetrics {
  long total_steps = 0;
  long expert_steps = 0;
  long expert_involved_steps = 0;
  Phase phase = Phase::Warmup;
  EvalReport eval;
  double deviation_ratio = std::nan("");
  long probes = 0;
};

struct MethodRun {
  std::string method;
  worlds::EnvKind env = worlds::EnvKind::FourRooms;
  std::uint64_t seed = 0;
  RunResult result;
  std::vector<CheckpointMetrics> checkpoints;
  std::unique_ptr<Learner> learner;
  /// Final policy for methods without a learner object (bc).
  std::optional<Policy> offline_policy;

  const Policy& policy() const { return learner ? learner->policy() : *offline_policy; }
};

inline std::unique_ptr<Learner> make_learner(const std::string& method, const worlds::Environment& env,
                                             const AimConfig& cfg, const ExperimentConfig& x = {}) {
  const auto& space = env.action_space();
  const int obs = env.observation_size();
  if (method == "aim") return std::make_unique<AimLearner>(space, obs, cfg, QObjective::Aim);
  if (method == "aim-reward") return std::make_unique<AimLearner>(space, obs, cfg, QObjective::RewardLabel);
  if (method == "aim-notd") return std::make_unique<AimLearner>(space, obs, cfg, QObjective::NoTd);
  if (method == "hgdagger") return std::make_unique<baselines::HgDaggerLearner>(space, obs, cfg);
  if (method == "ensemble") return std::make_unique<baselines::EnsembleDaggerLearner>(space, obs, cfg, x.ensemble);
  if (method == "thrifty") return std::make_unique<baselines::ThriftyLearner>(space, obs, cfg, x.thrifty);
  throw InvalidArgument("no interactive learner for method " + method);
}

/// Evaluation of `policy` at one checkpoint. On the corridor, safety-critical states along the
/// policy's own rollouts are the probes for the deviation ratio (threshold: the warm-up epsilon).
inline CheckpointMetrics measure(const Policy& policy, worlds::Environment& eval_env, const ExperimentConfig& x,
                                 const AimConfig& cfg) {
  CheckpointMetrics m;
  if (eval_env.kind() == worlds::EnvKind::CorridorDrive) {
    std::vector<Probe> probes;
    m.eval = evaluate(policy, eval_env, x.eval_rollouts, 0, &probes);
    m.probes = static_cast<long>(probes.size());
    if (!probes.empty()) m.deviation_ratio = deviation_ratio(policy, probes, cfg.warmup_epsilon);
  } else {
    m.eval = evaluate(policy, eval_env, x.eval_rollouts);
  }
  return m;
}

namespace detail {

/// Offline BC: oracle rollouts on the training seeds up to the budget, retrained from scratch
/// at every checkpoint on the data gathered so far.
inline MethodRun run_bc(const ExperimentConfig& x, const AimConfig& cfg) {
  MethodRun out;
  out.method = "bc";
  out.env = x.env;
  out.seed = cfg.seed;
  auto env = worlds::make_environment(x.env, x.env_params);
  auto eval_env = env->clone();
  RunLog& log = out.result.log;
  log.header = {{"method", "bc"}, {"env", worlds::to_string(x.env)}, {"seed", cfg.seed},
                {"expert_budget", cfg.expert_budget}, {"human_gated", false},
                {"learner", {{"bc_train_steps", x.bc_train_steps}}}};
  Buffer& data = out.result.human;
  long episode = -1;
  auto checkpoint = [&] {
    Policy p = baselines::bc_train(data, env->action_space(), env->observation_size(), cfg, x.bc_train_steps);
    auto m = measure(p, *eval_env, x, cfg);
    m.total_steps = m.expert_steps = m.expert_involved_steps = static_cast<long>(data.size());
    m.phase = Phase::Warmup;
    out.checkpoints.push_back(m);
    out.offline_policy = std::move(p);
  };
  while (static_cast<long>(data.size()) < cfg.expert_budget) {
    ++episode;
    const auto seed = train_seed(cfg.seed, episode);
    Observation s = env->reset(seed);
    while (!env->done() && static_cast<long>(data.size()) < cfg.expert_budget) {
      StepRecord r;
      r.step = static_cast<long>(data.size());
      r.episode = episode;
      r.env_seed = seed;
      r.phase = Phase::Warmup;
      r.controller = r.actor = Actor::Expert;
      r.a_h = r.a_r = r.a_executed = env->expert_action();
      r.request_event = true;
      r.epsilon = cfg.warmup_epsilon;
      r.obs_hash = observation_hash(s);
      if (x.env == worlds::EnvKind::CorridorDrive) r.obstacle_distance = env->distance_to_nearest_obstacle();
      auto t = env->step(r.a_executed, Actor::Expert);
      r.outcome = t.outcome;
      s = t.s_next;
      data.push(std::move(t));
      r.expert_steps_used = static_cast<long>(data.size());
      log.records.push_back(std::move(r));
      if (static_cast<long>(data.size()) % x.eval_every == 0) checkpoint();
    }
  }
  if (data.empty()) throw InvalidArgument("bc needs a positive expert budget");
  if (static_cast<long>(data.size()) % x.eval_every != 0) checkpoint();
  out.result.total_steps = out.result.expert_steps = out.result.expert_involved_steps = static_cast<long>(data.size());
  return out;
}

}  // namespace detail

/// One (method, seed) run with evaluation every `eval_every` steps.
inline MethodRun run_method(const ExperimentConfig& x, std::uint64_t seed, RunOptions opts = {}) {
  AimConfig cfg = x.aim;
  cfg.seed = seed;
  cfg.validate();
  if (x.method == "bc") return detail::run_bc(x, cfg);
  MethodRun out;
  out.method = x.method;
  out.env = x.env;
  out.seed = seed;
  auto env = worlds::make_environment(x.env, x.env_params);
  auto eval_env = env->clone();
  out.learner = make_learner(x.method, *env, cfg, x);
  opts.eval_every = x.eval_every;
  auto user_checkpoint = opts.on_checkpoint;
  opts.on_checkpoint = [&](const Checkpoint& c) {
    auto m = measure(c.learner->policy(), *eval_env, x, cfg);
    m.total_steps = c.total_steps;
    m.expert_steps = c.expert_steps;
    m.expert_involved_steps = c.learner->human_gated() ? c.total_steps : c.expert_steps;
    m.phase = c.phase;
    out.checkpoints.push_back(m);
    if (user_checkpoint) user_checkpoint(c);
  };
  out.result = run_interactive(*out.learner, *env, cfg, std::move(opts));
  return out;
}

/// Checkpoint with the highest success rate; ties go to the earliest.
inline const CheckpointMetrics& best_checkpoint(const std::vector<CheckpointMetrics>& cps) {
  if (cps.empty()) throw EmptySource("run has no checkpoints");
  const CheckpointMetrics* best = &cps.front();
  for (const auto& c : cps) {
    if (c.eval.success_rate > best->eval.success_rate) best = &c;
  }
  return *best;
}

/// Expert data usage at the first checkpoint whose success reaches `target`, if any.
inline std::optional<long> usage_to_reach(const std::vector<CheckpointMetrics>& cps, double target) {
  for (const auto& c : cps) {
    if (c.eval.success_rate >= target) return c.expert_involved_steps;
  }
  return std::nullopt;
}

/// Expert-executed steps per 1000 steps in [begin, end) of the log.
inline double intervention_rate(const RunLog& log, long begin, long end) {
  if (end <= begin) throw InvalidArgument("empty step window");
  long n = 0;
  for (const auto& r : log.records) n += r.step >= begin && r.step < end && r.controller == Actor::Expert;
  return 1000.0 * double(n) / double(end - begin);
}

/// First checkpoint at which the expert has used at least `fraction` of `budget` steps, or
/// the last checkpoint when the run never got that far.
inline const CheckpointMetrics& checkpoint_at_budget(const std::vector<CheckpointMetrics>& cps, long budget,
                                                    double fraction) {
  if (cps.empty()) throw EmptySource("run has no checkpoints");
  for (const auto& c : cps) {
    if (double(c.expert_steps) >= fraction * double(budget)) return c;
  }
  return cps.back();
}

/// Fraction of help requests at or after `from_step` made within `radius` of an obstacle.
/// NaN when there are no such requests.
inline double query_locality(const RunLog& log, long from_step, double radius) {
  long near = 0, total = 0;
  for (const auto& r : log.records) {
    if (!r.request_event || r.step < from_step || !r.obstacle_distance) continue;
    ++total;
    near += *r.obstacle_distance <= radius;
  }
  return total ? double(near) / double(total) : std::nan("");
}

/// BC on growing prefixes of the expert data collected after warm-up.
inline std::vector<std::pair<std::size_t, EvalReport>> offline_quality_curve(
    const Buffer& human, std::size_t warmup_len, const std::vector<std::size_t>& t_grid, worlds::Environment& env,
    const AimConfig& cfg, int bc_steps, int eval_rollouts) {
  if (!std::is_sorted(t_grid.begin(), t_grid.end())) throw InvalidArgument("T grid must be ascending");
  const std::size_t available = human.size() > warmup_len ? human.size() - warmup_len : 0;
  std::vector<std::pair<std::size_t, EvalReport>> out;
  for (auto T : t_grid) {
    if (T == 0 || T > available) {
      spdlog::warn("skipping T={} ({} post-warm-up expert transitions available)", T, available);
      continue;
    }
    Buffer prefix(BufferTag::Human);
    for (std::size_t i = warmup_len; i < warmup_len + T; ++i) prefix.push(human[i]);
    const auto p = baselines::bc_train(prefix, env.action_space(), env.observation_size(), cfg, bc_steps);
    out.emplace_back(T, evaluate(p, env, eval_rollouts));
  }
  return out;
}

}  // namespace aim::harness
