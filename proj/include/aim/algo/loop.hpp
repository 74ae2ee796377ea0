#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>

#include <spdlog/spdlog.h>

#include "aim/algo/config.hpp"
#include "aim/algo/run_log.hpp"
#include "aim/algo/thresholds.hpp"
#include "aim/worlds/environment.hpp"

namespace aim {

/// Live intervention state.
struct GateState {
  double beta = std::numeric_limits<double>::infinity();
  double epsilon = 0.0;
  double delta = 0.05;
  Actor controller = Actor::Agent;
  long intervention_count = 0;
  long expert_steps = 0;
};

/// Where expert actions come from: the scripted oracle offline, a remote human online.
class ExpertSource {
 public:
  virtual ~ExpertSource() = default;
  /// Blocks until an action is available. nullopt ends the run before the step executes.
  virtual std::optional<Action> query(const worlds::Environment& env) = 0;
};

class OracleExpert final : public ExpertSource {
 public:
  std::optional<Action> query(const worlds::Environment& env) override { return env.expert_action(); }
};

/// Notifications for a live front end. All callbacks run on the training thread.
class RunObserver {
 public:
  virtual ~RunObserver() = default;
  virtual void on_help_request(const worlds::Environment&, const GateState&, std::string_view /*reason*/) {}
  virtual void on_release(const worlds::Environment&, const GateState&, std::string_view /*reason*/) {}
  virtual void on_step(const worlds::Environment&, const GateState&, const StepRecord&) {}
};

/// Training seeds: episode k of run seed r. Evaluation seeds live in a disjoint range.
inline std::uint64_t train_seed(std::uint64_t run_seed, long episode) {
  return run_seed * 100000ull + static_cast<std::uint64_t>(episode) + 1ull;
}
inline constexpr std::uint64_t kEvalSeedBase = 9'000'000'000ull;

struct RunContext {
  worlds::Environment& env;
  const AimConfig& cfg;
  Buffer human{BufferTag::Human};
  Buffer novice{BufferTag::Novice};
  GateState gate;
  Rng rng;
  long total_steps = 0;
  long episode = -1;
  std::uint64_t env_seed = 0;

  RunContext(worlds::Environment& e, const AimConfig& c) : env(e), cfg(c), rng(c.seed) {}
  const ActionSpace& space() const { return env.action_space(); }
  long budget_left() const { return cfg.expert_budget - gate.expert_steps; }
};

struct GateDecision {
  bool request = false;
  double score = std::nan("");
  double threshold = std::nan("");
  nlohmann::json extra;
};

/// Method-specific parts of an interactive run. Everything else (warm-up, release rule,
/// budget accounting, logging) is shared so that methods differ only here.
class Learner {
 public:
  virtual ~Learner() = default;
  virtual std::string method() const = 0;
  /// Human-gated methods monitor every step and stop once total steps reach the budget.
  virtual bool human_gated() const { return false; }
  /// The policy that acts and is evaluated.
  virtual const Policy& policy() const = 0;
  virtual Action propose(const Observation& s) { return policy().act(s); }
  /// Imitation update after a step that may have grown B_h.
  virtual void imitate(RunContext& ctx) = 0;
  /// Called once between warm-up and the robot-gated phase.
  virtual void start_gated(RunContext&) {}
  /// Switch-to-human decision for the proposal a_r at s. Must not mutate learner state.
  virtual GateDecision gate(RunContext& ctx, const Observation& s, const Action& a_r) = 0;
  /// Critic and threshold maintenance after every environment step of the gated phases.
  virtual void after_step(RunContext&, const Transition&) {}
  virtual nlohmann::json describe() const { return nlohmann::json::object(); }
};

struct Checkpoint {
  long total_steps = 0;
  long expert_steps = 0;
  Phase phase = Phase::Warmup;
  const Learner* learner = nullptr;
};

struct RunOptions {
  ExpertSource* expert = nullptr;  // defaults to the oracle
  RunObserver* observer = nullptr;
  long eval_every = 500;
  std::function<void(const Checkpoint&)> on_checkpoint;
  /// Replaces the learner's proposal (e.g. to wire the oracle in as the agent).
  std::function<Action(const worlds::Environment&)> proposal_override;
  /// Polled between steps; returning true ends the run early.
  std::function<bool()> stop_requested;
};

struct RunResult {
  RunLog log;
  long total_steps = 0;
  long expert_steps = 0;
  long expert_involved_steps = 0;
  bool budget_exhausted_in_warmup = false;
  bool stopped = false;
  double epsilon = 0.0;
  Buffer human{BufferTag::Human};
  Buffer novice{BufferTag::Novice};
};

namespace detail {

class RunDriver {
 public:
  RunDriver(Learner& learner, worlds::Environment& env, const AimConfig& cfg, RunOptions opts)
      : learner_(learner), ctx_(env, cfg), opts_(std::move(opts)) {
    if (!opts_.expert) opts_.expert = &oracle_;
    ctx_.gate.delta = cfg.delta;
    ctx_.gate.epsilon = cfg.warmup_epsilon;
  }

  RunResult run() {
    ctx_.cfg.validate();
    result_.log.header = {{"method", learner_.method()},
                          {"env", worlds::to_string(ctx_.env.kind())},
                          {"seed", ctx_.cfg.seed},
                          {"expert_budget", ctx_.cfg.expert_budget},
                          {"human_gated", learner_.human_gated()},
                          {"learner", learner_.describe()}};
    if (learner_.human_gated()) {
      human_gated_phase(std::numeric_limits<long>::max(), ctx_.cfg.expert_budget);
    } else {
      human_gated_phase(ctx_.cfg.warmup_trajectories, std::numeric_limits<long>::max());
      if (!result_.budget_exhausted_in_warmup && !stopped()) {
        initialize_thresholds();
        learner_.start_gated(ctx_);
        robot_gated_phase();
      }
    }
    if (opts_.on_checkpoint && ctx_.total_steps % opts_.eval_every != 0) checkpoint(phase_now());
    result_.total_steps = ctx_.total_steps;
    result_.expert_steps = ctx_.gate.expert_steps;
    result_.expert_involved_steps = learner_.human_gated() ? ctx_.total_steps : ctx_.gate.expert_steps;
    result_.epsilon = ctx_.gate.epsilon;
    result_.human = std::move(ctx_.human);
    result_.novice = std::move(ctx_.novice);
    return std::move(result_);
  }

 private:
  bool stopped() {
    if (opts_.stop_requested && opts_.stop_requested()) result_.stopped = true;
    return result_.stopped;
  }

  Phase phase_now() const {
    if (learner_.human_gated() || !gated_started_) return Phase::Warmup;
    return ctx_.budget_left() > 0 ? Phase::Gated : Phase::Free;
  }

  void begin_episode() {
    ++ctx_.episode;
    ctx_.env_seed = train_seed(ctx_.cfg.seed, ctx_.episode);
    ctx_.env.reset(ctx_.env_seed);
    if (gated_started_ && ctx_.cfg.recompute_epsilon) refresh_epsilon();
  }

  Action propose(const Observation& s) {
    return opts_.proposal_override ? opts_.proposal_override(ctx_.env) : learner_.propose(s);
  }

  StepRecord base_record(Phase phase, const Observation& s, const Action& a_r) {
    StepRecord r;
    r.step = ctx_.total_steps;
    r.episode = ctx_.episode;
    r.env_seed = ctx_.env_seed;
    r.phase = phase;
    r.a_r = a_r;
    r.epsilon = ctx_.gate.epsilon;
    r.obs_hash = observation_hash(s);
    if (ctx_.env.kind() == worlds::EnvKind::CorridorDrive) {
      r.obstacle_distance = ctx_.env.distance_to_nearest_obstacle();
    }
    return r;
  }

  void finish_step(StepRecord& r, const Transition& t) {
    r.actor = t.actor;
    r.a_executed = t.a;
    r.outcome = t.outcome;
    r.expert_steps_used = learner_.human_gated() ? ctx_.total_steps + 1 : ctx_.gate.expert_steps;
    ++ctx_.total_steps;
    if (opts_.observer) opts_.observer->on_step(ctx_.env, ctx_.gate, r);
    result_.log.records.push_back(std::move(r));
    if (opts_.on_checkpoint && ctx_.total_steps % opts_.eval_every == 0) checkpoint(phase_now());
  }

  void checkpoint(Phase phase) {
    opts_.on_checkpoint(Checkpoint{ctx_.total_steps, ctx_.gate.expert_steps, phase, &learner_});
  }

  /// Human-gated steps: the expert watches every step and takes over exactly when the
  /// agent's proposal deviates from its own action by more than the warm-up threshold.
  void human_gated_phase(long max_episodes, long max_total_steps) {
    if (max_episodes <= 0 || max_total_steps <= 0) return;
    if (opts_.observer) opts_.observer->on_help_request(ctx_.env, ctx_.gate, "warmup");
    const auto& space = ctx_.space();
    long episodes = 0;
    while (episodes < max_episodes && ctx_.total_steps < max_total_steps &&
           ctx_.total_steps < ctx_.cfg.total_step_cap && !stopped()) {
      begin_episode();
      while (!ctx_.env.done() && ctx_.total_steps < max_total_steps &&
             ctx_.total_steps < ctx_.cfg.total_step_cap && !stopped()) {
        const Observation s = ctx_.env.observe();
        const Action a_r = propose(s);
        const auto answer = opts_.expert->query(ctx_.env);
        if (!answer) {
          result_.stopped = true;
          break;
        }
        const Action a_h = *answer;
        const bool intervene = deviates(a_r, a_h, ctx_.cfg.warmup_epsilon, space);
        if (intervene && !learner_.human_gated() && ctx_.budget_left() <= 0) {
          spdlog::warn("expert budget exhausted during warm-up at step {}", ctx_.total_steps);
          result_.budget_exhausted_in_warmup = true;
          if (opts_.observer) opts_.observer->on_release(ctx_.env, ctx_.gate, "budget");
          return;
        }
        StepRecord r = base_record(Phase::Warmup, s, a_r);
        r.a_h = a_h;
        r.controller = intervene ? Actor::Expert : Actor::Agent;
        r.request_event = intervene;
        Transition t;
        if (intervene) {
          t = ctx_.env.step(a_h, Actor::Expert);
          ctx_.human.push(t);
          ++ctx_.gate.expert_steps;
          ++ctx_.gate.intervention_count;
        } else {
          t = ctx_.env.step(a_r, Actor::Agent);
          ctx_.novice.push(t);
        }
        learner_.imitate(ctx_);
        finish_step(r, t);
      }
      ++episodes;
    }
    if (opts_.observer) opts_.observer->on_release(ctx_.env, ctx_.gate, "warmup_end");
  }

  void refresh_epsilon() {
    if (!ctx_.space().is_discrete() && !ctx_.human.empty()) {
      ctx_.gate.epsilon = compute_epsilon(ctx_.human, learner_.policy());
    }
  }

  void initialize_thresholds() {
    if (ctx_.space().is_discrete()) {
      ctx_.gate.epsilon = 0.0;
    } else if (!ctx_.human.empty()) {
      refresh_epsilon();
    }
    gated_started_ = true;
  }

  void end_block(std::string_view reason) {
    ctx_.gate.controller = Actor::Agent;
    if (opts_.observer) opts_.observer->on_release(ctx_.env, ctx_.gate, reason);
  }

  void robot_gated_phase() {
    const auto& space = ctx_.space();
    bool need_reset = true;
    while (ctx_.total_steps < ctx_.cfg.total_step_cap && !stopped()) {
      if (need_reset || ctx_.env.done()) {
        if (ctx_.gate.controller == Actor::Expert) end_block("episode_end");
        begin_episode();
        need_reset = false;
      }
      const bool budget = ctx_.budget_left() > 0;
      const Observation s = ctx_.env.observe();
      const Action a_r = propose(s);
      StepRecord r = base_record(budget ? Phase::Gated : Phase::Free, s, a_r);
      bool request_signal = false;
      if (budget) {
        const auto d = learner_.gate(ctx_, s, a_r);
        r.q_value = d.score;
        r.beta = d.threshold;
        r.extra = d.extra;
        request_signal = d.request;
      }
      std::optional<Action> a_h;
      if (ctx_.gate.controller == Actor::Agent) {
        if (advance_gate(Actor::Agent, request_signal, a_r, nullptr, ctx_.gate.epsilon, space).request) {
          ctx_.gate.controller = Actor::Expert;
          ++ctx_.gate.intervention_count;
          r.request_event = true;
          if (opts_.observer) opts_.observer->on_help_request(ctx_.env, ctx_.gate, "request");
          a_h = opts_.expert->query(ctx_.env);
          if (!a_h) {
            result_.stopped = true;
            break;
          }
        }
      } else {
        a_h = opts_.expert->query(ctx_.env);
        if (!a_h) {
          result_.stopped = true;
          break;
        }
        if (advance_gate(Actor::Expert, request_signal, a_r, &*a_h, ctx_.gate.epsilon, space).release) {
          r.release_event = true;
          end_block("release");
        }
      }
      r.a_h = a_h;
      r.controller = ctx_.gate.controller;
      Transition t;
      if (ctx_.gate.controller == Actor::Expert) {
        t = ctx_.env.step(*a_h, Actor::Expert);
        ctx_.human.push(t);
        ++ctx_.gate.expert_steps;
        learner_.imitate(ctx_);
      } else {
        t = ctx_.env.step(a_r, Actor::Agent);
        ctx_.novice.push(t);
      }
      learner_.after_step(ctx_, t);
      finish_step(r, t);
      if (ctx_.gate.controller == Actor::Expert && ctx_.budget_left() <= 0) end_block("budget");
    }
    if (ctx_.gate.controller == Actor::Expert) end_block("stop");
  }

  Learner& learner_;
  RunContext ctx_;
  RunOptions opts_;
  OracleExpert oracle_;
  RunResult result_;
  bool gated_started_ = false;
};

}  // namespace detail

/// Shared interactive-training skeleton: warm-up (human-gated) for the configured number of
/// trajectories, then robot-gated steps until the total-step cap. Human-gated learners run
/// the monitoring loop until total steps reach the budget.
inline RunResult run_interactive(Learner& learner, worlds::Environment& env, const AimConfig& cfg,
                                 RunOptions opts = {}) {
  detail::RunDriver driver(learner, env, cfg, std::move(opts));
  return driver.run();
}

}  // namespace aim
