#pragma once

#include <string>

#include "aim/algo/losses.hpp"
#include "aim/algo/loop.hpp"

namespace aim {

/// Robot-gated learner driven by the proxy intervention critic.
class AimLearner final : public Learner {
 public:
  AimLearner(const ActionSpace& space, int obs_dim, const AimConfig& cfg,
             QObjective objective = QObjective::Aim)
      : cfg_(cfg),
        objective_(objective),
        init_rng_(cfg.seed ^ 0x9e3779b97f4a7c15ull),
        policy_(space, obs_dim, cfg.hidden, init_rng_),
        q_(space, obs_dim, cfg.hidden, init_rng_, cfg.tau),
        policy_opt_({.lr = cfg.lr}),
        q_opt_({.lr = cfg.lr}) {}

  std::string method() const override {
    switch (objective_) {
      case QObjective::RewardLabel: return "aim-reward";
      case QObjective::NoTd: return "aim-notd";
      case QObjective::Aim: break;
    }
    return "aim";
  }
  nlohmann::json describe() const override {
    return {{"variant", method()}, {"hidden", cfg_.hidden}, {"batch_size", cfg_.batch_size},
            {"grad_steps_per_iter", cfg_.grad_steps_per_iter}, {"q_init_steps", cfg_.q_init_steps}};
  }

  const Policy& policy() const override { return policy_; }
  Policy& policy() { return policy_; }
  const ProxyQ& proxy_q() const { return q_; }
  double beta() const { return beta_; }
  const LossReport& last_loss() const { return last_loss_; }

  /// The reward-label variant learns a value where expert actions score high, so its
  /// request score is the negated critic output.
  double score_sign() const { return objective_ == QObjective::RewardLabel ? -1.0 : 1.0; }

  void imitate(RunContext& ctx) override {
    for (int i = 0; i < cfg_.bc_steps_per_expert_step; ++i) {
      if (bc_update(policy_, policy_opt_, ctx.human, static_cast<std::size_t>(cfg_.bc_batch_size), ctx.rng) < 0) {
        break;
      }
    }
  }

  void start_gated(RunContext& ctx) override {
    if (!ctx.human.empty() || !ctx.novice.empty()) {
      for (int i = 0; i < cfg_.q_init_steps; ++i) {
        last_loss_ = proxy_q_step(q_, q_opt_, ctx.human, ctx.novice, policy_, cfg_,
                                  ctx.gate.epsilon, objective_, ctx.rng);
      }
    }
    refresh_beta(ctx);
  }

  GateDecision gate(RunContext& ctx, const Observation& s, const Action& a_r) override {
    GateDecision d;
    d.score = score_sign() * q_.value(s, a_r);
    d.threshold = ctx.gate.beta;
    d.request = should_request(d.score, d.threshold);
    return d;
  }

  void after_step(RunContext& ctx, const Transition& t) override {
    if (t.actor == Actor::Agent || cfg_.q_update_during_expert) {
      last_loss_ = update_proxy_q(q_, q_opt_, ctx.human, ctx.novice, policy_, cfg_, ctx.gate.epsilon,
                                  objective_, ctx.rng);
    }
    refresh_beta(ctx);
  }

 private:
  void refresh_beta(RunContext& ctx) {
    if (ctx.novice.empty()) return;  // keep the previous threshold
    beta_ = compute_beta(q_, ctx.novice, policy_, cfg_.delta, static_cast<std::size_t>(cfg_.beta_sample),
                         ctx.rng, score_sign());
    ctx.gate.beta = beta_;
  }

  AimConfig cfg_;
  QObjective objective_;
  Rng init_rng_;
  Policy policy_;
  ProxyQ q_;
  nn::Adam<Real> policy_opt_;
  nn::Adam<Real> q_opt_;
  double beta_ = std::numeric_limits<double>::infinity();
  LossReport last_loss_;
};

struct AimRun {
  std::unique_ptr<AimLearner> learner;
  RunResult result;
};

/// Full AIM training run (or one of its ablations) on `env`.
inline AimRun aim_train(worlds::Environment& env, const AimConfig& cfg, RunOptions opts = {},
                        QObjective objective = QObjective::Aim) {
  AimRun out;
  out.learner = std::make_unique<AimLearner>(env.action_space(), env.observation_size(), cfg, objective);
  out.result = run_interactive(*out.learner, env, cfg, std::move(opts));
  return out;
}

}  // namespace aim
