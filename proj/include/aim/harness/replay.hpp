#pragma once

#include <string>
#include <vector>

#include <fmt/format.h>

#include "aim/algo/loop.hpp"

namespace aim::harness {

struct ReplayReport {
  std::vector<std::string> violations;
  long expert_steps = 0;
  long agent_steps = 0;
  long requests = 0;
  bool ok() const { return violations.empty(); }
};

/// Protocol checks over a finished RunLog: intervention-block structure, actor/controller
/// separation, executed-action consistency and budget accounting. Optional buffer sizes are
/// cross-checked against the per-step actors.
inline ReplayReport check_run_log(const RunLog& log, const ActionSpace& space, long human_size = -1,
                                  long novice_size = -1) {
  ReplayReport rep;
  auto fail = [&](long step, std::string what) {
    if (rep.violations.size() < 50) rep.violations.push_back(fmt::format("step {}: {}", step, what));
  };
  const std::string method = log.header.value("method", "");
  const bool human_gated = log.header.value("human_gated", false);
  const long budget = log.header.value("expert_budget", 0L);
  const bool offline = method == "bc";

  const StepRecord* prev = nullptr;
  long expert_count = 0;
  for (const auto& r : log.records) {
    if (r.actor != r.controller) fail(r.step, "executing actor differs from the controller");
    if (r.controller == Actor::Expert) {
      if (!r.a_h) {
        fail(r.step, "expert-controlled step without an expert action");
      } else if (!(r.a_executed == *r.a_h)) {
        fail(r.step, "expert-controlled step did not execute a_h");
      }
      ++expert_count;
      ++rep.expert_steps;
    } else {
      if (!(r.a_executed == r.a_r)) fail(r.step, "agent-controlled step did not execute a_r");
      ++rep.agent_steps;
    }
    rep.requests += r.request_event;

    const long expected_used = human_gated ? r.step + 1 : expert_count;
    if (r.expert_steps_used != expected_used) {
      fail(r.step, fmt::format("expert_steps_used {} but accounting gives {}", r.expert_steps_used, expected_used));
    }
    if (expected_used > budget) fail(r.step, "expert budget exceeded");

    const bool new_episode = !prev || prev->episode != r.episode || prev->outcome != Outcome::None;
    const bool block_open = prev && !new_episode && prev->controller == Actor::Expert;

    if (offline) {
      if (r.controller != Actor::Expert) fail(r.step, "offline demonstration step not executed by the expert");
    } else if (r.phase == Phase::Warmup) {
      if (!r.a_h) {
        fail(r.step, "warm-up step without the monitoring expert's action");
      } else {
        const bool dev = deviates(r.a_r, *r.a_h, r.epsilon, space);
        if (dev != (r.controller == Actor::Expert)) fail(r.step, "warm-up intervention disagrees with the deviation rule");
        if (r.request_event != (r.controller == Actor::Expert)) fail(r.step, "warm-up request flag mismatch");
      }
    } else {
      if (r.request_event) {
        if (block_open) fail(r.step, "request while the expert already had control");
        if (r.phase != Phase::Gated) fail(r.step, "request without budget left");
        // A second criterion (novelty) may be logged alongside the primary score.
        bool fired = r.q_value > r.beta;
        if (r.extra.is_object() && r.extra.contains("novelty")) {
          fired = fired || r.extra["novelty"].get<double>() > r.extra["novelty_threshold"].get<double>();
        }
        if (!fired) fail(r.step, "request without the score exceeding the threshold");
        if (r.controller != Actor::Expert) fail(r.step, "request did not hand control to the expert");
      } else if (r.controller == Actor::Expert) {
        if (!block_open) fail(r.step, "expert control without a request");
        if (r.a_h && !deviates(r.a_r, *r.a_h, r.epsilon, space)) fail(r.step, "expert kept control after agreement");
      }
      if (r.release_event) {
        if (!block_open) fail(r.step, "release outside an expert block");
        if (r.controller != Actor::Agent) fail(r.step, "release did not return control to the agent");
        if (!r.a_h || deviates(r.a_r, *r.a_h, r.epsilon, space)) fail(r.step, "release while the proposal still deviates");
      } else if (r.controller == Actor::Agent && block_open && prev->expert_steps_used < budget) {
        fail(r.step, "expert block ended without a release, episode end or exhausted budget");
      }
    }
    prev = &r;
  }
  if (human_size >= 0 && human_size != rep.expert_steps) {
    fail(-1, fmt::format("human buffer holds {} transitions, log has {} expert steps", human_size, rep.expert_steps));
  }
  if (novice_size >= 0 && novice_size != rep.agent_steps) {
    fail(-1, fmt::format("novice buffer holds {} transitions, log has {} agent steps", novice_size, rep.agent_steps));
  }
  return rep;
}

struct ReplayedBuffers {
  Buffer human{BufferTag::Human};
  Buffer novice{BufferTag::Novice};
  /// Expert transitions collected during warm-up (the leading part of `human`).
  std::size_t warmup_expert_steps = 0;
};

/// Rebuilds both buffers by re-running each logged episode from its seed with the executed
/// actions. Throws InvariantViolation if an observation hash disagrees with the log.
inline ReplayedBuffers rebuild_buffers(const RunLog& log, worlds::Environment& env) {
  ReplayedBuffers out;
  long episode = std::numeric_limits<long>::min();
  for (const auto& r : log.records) {
    if (r.episode != episode || env.done()) {
      env.reset(r.env_seed);
      episode = r.episode;
    }
    if (observation_hash(env.observe()) != r.obs_hash) {
      throw InvariantViolation(fmt::format("replay diverged from the log at step {}", r.step));
    }
    auto t = env.step(r.a_executed, r.actor);
    if (r.actor == Actor::Expert) {
      out.human.push(std::move(t));
      if (r.phase == Phase::Warmup) ++out.warmup_expert_steps;
    } else {
      out.novice.push(std::move(t));
    }
  }
  return out;
}

}  // namespace aim::harness
