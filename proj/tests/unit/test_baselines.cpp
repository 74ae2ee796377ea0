#include <cmath>

#include <gtest/gtest.h>

#include "aim/baselines/learners.hpp"
#include "aim/worlds/make.hpp"

namespace {

using aim::Action;
using aim::ActionSpace;
using aim::Actor;
using aim::Policy;
using aim::Real;
using aim::baselines::Ensemble;
using aim::nn::Mlp;

// Member whose output ignores the state: bias only.
Policy constant_member(const ActionSpace& space, std::vector<Real> bias) {
  auto net = Mlp<Real>::zeros({3, static_cast<int>(bias.size())});
  for (std::size_t i = 0; i < bias.size(); ++i) net.params()[0].bias(static_cast<Eigen::Index>(i)) = bias[i];
  return Policy(space, net);
}

const aim::Observation kState{0.1f, 0.2f, 0.3f};

TEST(EnsembleUncertainty, IdenticalMembersGiveZero) {
  aim::Rng rng(1);
  const Policy p(ActionSpace::continuous({-1, -1}, {1, 1}), 3, {8}, rng);
  EXPECT_EQ(aim::baselines::ensemble_uncertainty(Ensemble({p, p, p, p, p}), kState), 0.0);
  const Policy d(ActionSpace::discrete(4), 3, {8}, rng);
  EXPECT_EQ(aim::baselines::ensemble_uncertainty(Ensemble({d, d, d}), kState), 0.0);
}

TEST(EnsembleUncertainty, BoxPopulationVariance) {
  const auto box = ActionSpace::continuous({-1}, {1});
  // tanh saturates to exactly +-1 in float for large pre-activations.
  Ensemble ens({constant_member(box, {-30}), constant_member(box, {30}), constant_member(box, {0}),
                constant_member(box, {0}), constant_member(box, {0})});
  EXPECT_NEAR(aim::baselines::ensemble_uncertainty(ens, kState), 0.4, 1e-12);
}

TEST(EnsembleUncertainty, DiscretePluralityShare) {
  const auto four = ActionSpace::discrete(4);
  auto vote = [&](int a) {
    std::vector<Real> b(4, 0);
    b[static_cast<std::size_t>(a)] = 1;
    return constant_member(four, b);
  };
  Ensemble ens({vote(2), vote(2), vote(2), vote(1), vote(0)});
  EXPECT_NEAR(aim::baselines::ensemble_uncertainty(ens, kState), 0.4, 1e-12);
  Ensemble tie({vote(3), vote(3), vote(1), vote(1), vote(0)});
  EXPECT_NEAR(aim::baselines::ensemble_uncertainty(tie, kState), 0.6, 1e-12);
}

aim::AimConfig small_config(bool discrete, std::uint64_t seed) {
  auto cfg = aim::AimConfig::for_space(discrete);
  cfg.hidden = {32, 32};
  cfg.batch_size = 32;
  cfg.bc_batch_size = 32;
  cfg.grad_steps_per_iter = 1;
  cfg.bc_steps_per_expert_step = 2;
  cfg.beta_sample = 256;
  cfg.lr = 1e-3;
  cfg.total_step_cap = 300;
  cfg.expert_budget = 2000;
  cfg.seed = seed;
  return cfg;
}

TEST(EnsembleDagger, InfiniteThresholdNeverRequests) {
  auto env = aim::worlds::make_environment("corridor");
  const auto cfg = small_config(false, 1);
  aim::baselines::EnsembleDaggerLearner learner(env->action_space(), env->observation_size(), cfg,
                                                {.members = 3, .bc_warmup_steps = 10,
                                                 .threshold = std::numeric_limits<double>::infinity()});
  const auto res = aim::run_interactive(learner, *env, cfg);
  for (const auto& r : res.log.records) {
    if (r.phase != aim::Phase::Warmup) EXPECT_FALSE(r.request_event);
  }
}

TEST(EnsembleDagger, ZeroThresholdRequestsUntilBudgetIsGone) {
  auto env = aim::worlds::make_environment("corridor");
  auto cfg = small_config(false, 2);
  cfg.expert_budget = 200;
  cfg.total_step_cap = 2000;
  aim::baselines::EnsembleDaggerLearner learner(env->action_space(), env->observation_size(), cfg,
                                                {.members = 3, .bc_warmup_steps = 10, .threshold = 0.0});
  const auto res = aim::run_interactive(learner, *env, cfg);
  EXPECT_EQ(res.expert_steps, cfg.expert_budget);
  for (const auto& r : res.log.records) {
    // With budget left, the agent only keeps control on a step where it was just released.
    if (r.phase == aim::Phase::Gated && r.controller == Actor::Agent) EXPECT_TRUE(r.release_event);
  }
}

TEST(Thrifty, ThresholdsChangeOnlyEveryRefreshPeriod) {
  auto env = aim::worlds::make_environment("corridor");
  const auto cfg = small_config(false, 3);
  aim::baselines::ThriftyLearner learner(env->action_space(), env->observation_size(), cfg,
                                         {.ensemble = {.members = 3, .bc_warmup_steps = 10}});
  const auto res = aim::run_interactive(learner, *env, cfg);
  long first = -1;
  const aim::StepRecord* prev = nullptr;
  long changes = 0;
  for (const auto& r : res.log.records) {
    if (r.phase != aim::Phase::Gated) continue;
    if (first < 0) first = r.step;
    if (prev) {
      const bool changed = prev->beta != r.beta ||
                           prev->extra["novelty_threshold"] != r.extra["novelty_threshold"];
      if (changed) {
        ++changes;
        EXPECT_EQ((r.step - first) % 25, 0) << "at step " << r.step;
      }
    }
    prev = &r;
  }
  EXPECT_GT(changes, 0);
}

TEST(Thrifty, RiskTargets) {
  aim::TransitionBatch b;
  b.done = {true, true, true, false, false};
  b.outcome = {aim::Outcome::Crash, aim::Outcome::Timeout, aim::Outcome::Success, aim::Outcome::None,
               aim::Outcome::None};
  const auto t = aim::baselines::risk_targets(b, {9, 9, 9, 0.5, 3.0}, 0.99);
  EXPECT_EQ(t[0], 1.0);
  EXPECT_EQ(t[1], 1.0);
  EXPECT_EQ(t[2], 0.0);
  EXPECT_NEAR(t[3], 0.495, 1e-15);
  EXPECT_NEAR(t[4], 0.99, 1e-15);
}

TEST(HgDagger, ExpertAsPolicyStillConsumesMonitoringBudget) {
  auto env = aim::worlds::make_environment("fourrooms");
  auto cfg = small_config(true, 4);
  cfg.expert_budget = 250;
  aim::baselines::HgDaggerLearner learner(env->action_space(), env->observation_size(), cfg);
  aim::RunOptions opts;
  opts.proposal_override = [](const aim::worlds::Environment& e) { return e.expert_action(); };
  const auto res = aim::run_interactive(learner, *env, cfg, opts);
  EXPECT_EQ(res.total_steps, 250);
  EXPECT_EQ(res.expert_involved_steps, 250);
  EXPECT_EQ(res.expert_steps, 0);
  EXPECT_TRUE(res.human.empty());
}

TEST(HgDagger, InterventionsAreExactlyTheDeviatingSteps) {
  auto env = aim::worlds::make_environment("fourrooms");
  auto cfg = small_config(true, 5);
  cfg.expert_budget = 250;
  aim::baselines::HgDaggerLearner learner(env->action_space(), env->observation_size(), cfg);
  const auto res = aim::run_interactive(learner, *env, cfg);
  EXPECT_EQ(res.total_steps, 250);
  long deviating = 0;
  for (const auto& r : res.log.records) {
    ASSERT_TRUE(r.a_h.has_value());
    const bool dev = r.a_r.index != r.a_h->index;
    deviating += dev;
    EXPECT_EQ(r.actor == Actor::Expert, dev);
  }
  EXPECT_EQ(deviating, res.expert_steps);
}

TEST(BcTrain, MemorisesSingleSample) {
  const auto four = ActionSpace::discrete(4);
  aim::Buffer data(aim::BufferTag::Human);
  aim::Transition t;
  t.s = kState;
  t.s_next = kState;
  t.a = Action::of(3);
  t.actor = Actor::Expert;
  data.push(t);
  auto cfg = small_config(true, 6);
  const auto p = aim::baselines::bc_train(data, four, 3, cfg, 300);
  EXPECT_EQ(p.act(kState).index, 3);
  const auto q = aim::baselines::bc_train(data, four, 3, cfg, 300);
  for (std::size_t l = 0; l < p.net().params().size(); ++l) {
    EXPECT_EQ(p.net().params()[l].weight, q.net().params()[l].weight);
  }
  EXPECT_THROW(aim::baselines::bc_train(aim::Buffer(aim::BufferTag::Human), four, 3, cfg, 1),
               aim::InvalidArgument);
}

}  // namespace
