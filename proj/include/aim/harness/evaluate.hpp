#pragma once

#include <functional>
#include <vector>

#include "aim/algo/loop.hpp"
#include "aim/algo/policy.hpp"

namespace aim::harness {

struct EvalReport {
  double success_rate = 0.0;
  double episodic_return = 0.0;
  double route_completion = 0.0;
  double crash_rate = 0.0;
  int n_rollouts = 0;
  int successes = 0;
};

/// A safety-critical state met during evaluation, with the oracle action there.
struct Probe {
  Observation s;
  Action a_h;
};

using ActFn = std::function<Action(const Observation&, const worlds::Environment&)>;

/// Agent-only rollouts on the held-out seeds kEvalSeedBase + offset + i. When `probes` is
/// given (corridor only), safety-critical states along the rollouts are collected.
inline EvalReport evaluate_with(const ActFn& act, worlds::Environment& env, int n_rollouts,
                                std::uint64_t offset = 0, std::vector<Probe>* probes = nullptr) {
  if (n_rollouts < 1) throw InvalidArgument("n_rollouts must be at least 1");
  EvalReport rep;
  rep.n_rollouts = n_rollouts;
  for (int i = 0; i < n_rollouts; ++i) {
    Observation s = env.reset(kEvalSeedBase + offset + static_cast<std::uint64_t>(i));
    double ret = 0.0;
    Outcome outcome = Outcome::None;
    while (!env.done()) {
      if (probes && env.is_safety_critical()) probes->push_back({s, env.expert_action()});
      const auto t = env.step(act(s, env), Actor::Agent);
      ret += t.reward;
      outcome = t.outcome;
      s = t.s_next;
    }
    rep.successes += outcome == Outcome::Success;
    rep.crash_rate += outcome == Outcome::Crash;
    rep.episodic_return += ret;
    rep.route_completion += env.route_completion();
  }
  rep.success_rate = double(rep.successes) / n_rollouts;
  rep.crash_rate /= n_rollouts;
  rep.episodic_return /= n_rollouts;
  rep.route_completion /= n_rollouts;
  return rep;
}

inline EvalReport evaluate(const Policy& policy, worlds::Environment& env, int n_rollouts,
                           std::uint64_t offset = 0, std::vector<Probe>* probes = nullptr) {
  return evaluate_with([&](const Observation& s, const worlds::Environment&) { return policy.act(s); },
                       env, n_rollouts, offset, probes);
}

/// Fraction of safety-critical probes where the policy's action deviates from the oracle's
/// by more than `eps`.
inline double deviation_ratio(const Policy& policy, const std::vector<Probe>& probes, double eps) {
  if (probes.empty()) throw Undefined("no safety-critical probe states");
  long dev = 0;
  for (const auto& p : probes) dev += deviates(policy.act(p.s), p.a_h, eps, policy.space());
  return double(dev) / double(probes.size());
}

}  // namespace aim::harness
