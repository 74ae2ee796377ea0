#pragma once

#include <algorithm>
#include <limits>
#include <string>

#include "aim/algo/losses.hpp"
#include "aim/algo/loop.hpp"
#include "aim/baselines/ensemble.hpp"

namespace aim::baselines {

/// Offline imitation on a fixed dataset for `steps` minibatch updates.
inline Policy bc_train(const Buffer& dataset, const ActionSpace& space, int obs_dim, const AimConfig& cfg,
                       int steps) {
  if (dataset.empty()) throw InvalidArgument("bc_train needs a non-empty dataset");
  Rng rng(cfg.seed ^ 0xbcbcbcbcull);
  Policy policy(space, obs_dim, cfg.hidden, rng);
  nn::Adam<Real> opt({.lr = cfg.lr});
  for (int i = 0; i < steps; ++i) {
    bc_update(policy, opt, dataset, static_cast<std::size_t>(cfg.bc_batch_size), rng);
  }
  return policy;
}

/// Human-gated DAgger: the expert monitors every step and corrects deviating proposals.
class HgDaggerLearner final : public Learner {
 public:
  HgDaggerLearner(const ActionSpace& space, int obs_dim, const AimConfig& cfg)
      : cfg_(cfg), init_rng_(cfg.seed ^ 0x9e3779b97f4a7c15ull), policy_(space, obs_dim, cfg.hidden, init_rng_),
        opt_({.lr = cfg.lr}) {}

  std::string method() const override { return "hgdagger"; }
  bool human_gated() const override { return true; }
  const Policy& policy() const override { return policy_; }
  void imitate(RunContext& ctx) override {
    for (int i = 0; i < cfg_.bc_steps_per_expert_step; ++i) {
      if (bc_update(policy_, opt_, ctx.human, static_cast<std::size_t>(cfg_.bc_batch_size), ctx.rng) < 0) break;
    }
  }
  GateDecision gate(RunContext&, const Observation&, const Action&) override { return {}; }

 private:
  AimConfig cfg_;
  Rng init_rng_;
  Policy policy_;
  nn::Adam<Real> opt_;
};

struct EnsembleOptions {
  int members = 5;
  int bc_warmup_steps = 200;
  /// Negative selects the per-space default (5e-3 discrete, 1e-3 box).
  double threshold = -1.0;
};

/// Shared ensemble container: member 0 acts, all members imitate B_h on their own batches.
class EnsembleLearnerBase : public Learner {
 public:
  EnsembleLearnerBase(const ActionSpace& space, int obs_dim, const AimConfig& cfg, EnsembleOptions eopt)
      : cfg_(cfg), eopt_(eopt), init_rng_(cfg.seed ^ 0x9e3779b97f4a7c15ull),
        ens_(space, obs_dim, cfg.hidden, init_rng_, eopt.members) {
    for (std::size_t i = 0; i < ens_.size(); ++i) opts_.emplace_back(nn::AdamConfig{.lr = cfg.lr});
    if (eopt_.threshold < 0.0) eopt_.threshold = space.is_discrete() ? 5e-3 : 1e-3;
  }

  const Policy& policy() const override { return ens_.members.front(); }
  const Ensemble& ensemble() const { return ens_; }
  double threshold() const { return eopt_.threshold; }

  void imitate(RunContext& ctx) override { train_members(ctx, cfg_.bc_steps_per_expert_step); }

  void start_gated(RunContext& ctx) override { train_members(ctx, eopt_.bc_warmup_steps); }

 protected:
  void train_members(RunContext& ctx, int steps) {
    if (ctx.human.empty()) return;
    for (int i = 0; i < steps; ++i) {
      for (std::size_t m = 0; m < ens_.size(); ++m) {
        bc_update(ens_.members[m], opts_[m], ctx.human, static_cast<std::size_t>(cfg_.bc_batch_size), ctx.rng);
      }
    }
  }

  AimConfig cfg_;
  EnsembleOptions eopt_;
  Rng init_rng_;
  Ensemble ens_;
  std::vector<nn::Adam<Real>> opts_;
};

/// Requests the expert when ensemble disagreement exceeds a fixed threshold.
class EnsembleDaggerLearner final : public EnsembleLearnerBase {
 public:
  using EnsembleLearnerBase::EnsembleLearnerBase;
  std::string method() const override { return "ensemble"; }
  nlohmann::json describe() const override {
    return {{"members", ens_.size()}, {"threshold", eopt_.threshold}, {"bc_warmup_steps", eopt_.bc_warmup_steps}};
  }
  GateDecision gate(RunContext&, const Observation& s, const Action&) override {
    GateDecision d;
    d.score = ensemble_uncertainty(ens_, s);
    d.threshold = eopt_.threshold;
    d.request = d.score > d.threshold;
    return d;
  }
};

struct ThriftyOptions {
  EnsembleOptions ensemble;
  double novelty_delta = 0.05;
  double risk_delta = 0.01;
  int refresh_every = 25;
};

/// Discounted failure targets: 1 at a crash or timeout, 0 at success, otherwise gamma times
/// the max-next estimate clamped to [0, 1].
inline std::vector<double> risk_targets(const TransitionBatch& b, const std::vector<double>& m, double gamma) {
  std::vector<double> t(b.size());
  for (std::size_t j = 0; j < t.size(); ++j) {
    if (b.done[j]) {
      t[j] = b.outcome[j] == Outcome::Crash || b.outcome[j] == Outcome::Timeout ? 1.0 : 0.0;
    } else {
      t[j] = gamma * std::clamp(m[j], 0.0, 1.0);
    }
  }
  return t;
}

/// Requests the expert when novelty (ensemble disagreement) or estimated failure risk of
/// the proposal exceeds its rolling quantile over novice states.
class ThriftyLearner final : public EnsembleLearnerBase {
 public:
  ThriftyLearner(const ActionSpace& space, int obs_dim, const AimConfig& cfg, ThriftyOptions topt)
      : EnsembleLearnerBase(space, obs_dim, cfg, topt.ensemble), topt_(topt),
        risk_(space, obs_dim, cfg.hidden, init_rng_, cfg.tau), risk_opt_({.lr = cfg.lr}) {}

  std::string method() const override { return "thrifty"; }
  nlohmann::json describe() const override {
    return {{"members", ens_.size()}, {"novelty_delta", topt_.novelty_delta}, {"risk_delta", topt_.risk_delta},
            {"refresh_every", topt_.refresh_every}};
  }
  const ProxyQ& risk() const { return risk_; }
  double novelty_threshold() const { return novelty_thr_; }
  double risk_threshold() const { return risk_thr_; }

  void start_gated(RunContext& ctx) override {
    EnsembleLearnerBase::start_gated(ctx);
    refresh(ctx);
  }

  GateDecision gate(RunContext&, const Observation& s, const Action& a_r) override {
    GateDecision d;
    const double novelty = ensemble_uncertainty(ens_, s);
    const double risk = std::clamp(risk_.value(s, a_r), 0.0, 1.0);
    d.score = risk;
    d.threshold = risk_thr_;
    d.request = novelty > novelty_thr_ || risk > risk_thr_;
    d.extra = {{"novelty", novelty}, {"novelty_threshold", novelty_thr_}};
    return d;
  }

  void after_step(RunContext& ctx, const Transition&) override {
    for (int i = 0; i < cfg_.grad_steps_per_iter; ++i) risk_step(ctx);
    if (++since_refresh_ >= topt_.refresh_every) refresh(ctx);
  }

 private:
  void risk_step(RunContext& ctx) {
    const auto b = sample_mixed(ctx.human, ctx.novice, static_cast<std::size_t>(cfg_.batch_size), ctx.space(), ctx.rng);
    const auto m = risk_.max_next(b.s_next, policy(), cfg_.box_samples, ctx.rng);
    const auto lg = value_regression(risk_, b.s, b.a, risk_targets(b, m, cfg_.gamma));
    risk_opt_.step(risk_.pair.online.params(), lg.grads);
    risk_.pair.polyak_update();
  }

  void refresh(RunContext& ctx) {
    since_refresh_ = 0;
    if (ctx.novice.empty()) return;
    const auto idx = subsample_indices(ctx.novice.size(), static_cast<std::size_t>(cfg_.beta_sample), ctx.rng);
    std::vector<const Observation*> obs;
    for (auto i : idx) obs.push_back(&ctx.novice[i].s);
    const Mat s = stack(obs);
    novelty_thr_ = nearest_rank_quantile(ensemble_uncertainty(ens_, s), 1.0 - topt_.novelty_delta);
    auto r = risk_.values(s, policy().act_batch(s));
    for (auto& v : r) v = std::clamp(v, 0.0, 1.0);
    risk_thr_ = nearest_rank_quantile(std::move(r), 1.0 - topt_.risk_delta);
    ctx.gate.beta = risk_thr_;
  }

  ThriftyOptions topt_;
  ProxyQ risk_;
  nn::Adam<Real> risk_opt_;
  double novelty_thr_ = std::numeric_limits<double>::infinity();
  double risk_thr_ = std::numeric_limits<double>::infinity();
  int since_refresh_ = 0;
};

}  // namespace aim::baselines
