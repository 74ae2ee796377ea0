#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "aim/algo/aim.hpp"
#include "aim/worlds/make.hpp"

namespace {

using aim::Action;
using aim::ActionBatch;
using aim::ActionSpace;
using aim::Actor;
using aim::Mat;
using aim::ProxyQ;
using aim::Real;
using aim::nn::Mlp;

const ActionSpace kFour = ActionSpace::discrete(4);
const ActionSpace kBox = ActionSpace::continuous({-1.0, -1.0}, {1.0, 1.0});

// Discrete critic whose outputs ignore the state: head i returns bias[i].
ProxyQ constant_q(std::vector<Real> heads, int obs_dim = 3) {
  auto net = Mlp<Real>::zeros({obs_dim, static_cast<int>(heads.size())});
  for (std::size_t i = 0; i < heads.size(); ++i) net.params()[0].bias(static_cast<Eigen::Index>(i)) = heads[i];
  return ProxyQ(ActionSpace::discrete(static_cast<int>(heads.size())), obs_dim, net, 1.0);
}

Mat one_state(int obs_dim = 3) { return Mat::Constant(obs_dim, 1, Real(0.5)); }

ActionBatch indices(std::vector<int> idx) {
  ActionBatch b;
  b.discrete = true;
  b.index = std::move(idx);
  return b;
}

TEST(AimLoss, ZeroCriticDeviatingPair) {
  const auto q = constant_q({0, 0, 0, 0});
  const auto lg = aim::aim_loss_and_grads(q, one_state(), indices({0}), indices({1}), 0.0);
  EXPECT_NEAR(lg.loss, 2.0, 1e-12);
}

TEST(AimLoss, LabelsAttained) {
  const auto q = constant_q({-1, 1, 0, 0});
  const auto lg = aim::aim_loss_and_grads(q, one_state(), indices({0}), indices({1}), 0.0);
  EXPECT_NEAR(lg.loss, 0.0, 1e-12);
}

TEST(AimLoss, MatchingPairMasksAgentTerm) {
  const auto q = constant_q({0, 0, 0, 0});
  const auto lg = aim::aim_loss_and_grads(q, one_state(), indices({2}), indices({2}), 0.0);
  EXPECT_NEAR(lg.loss, 1.0, 1e-12);
  // Only the expert head receives gradient: d/dQ (Q+1)^2 = 2 at Q = 0.
  const auto& gb = lg.grads[0].bias;
  EXPECT_NEAR(gb(2), 2.0, 1e-12);
  EXPECT_EQ(gb(0), 0.0);
  EXPECT_EQ(gb(1), 0.0);
  EXPECT_EQ(gb(3), 0.0);
}

TEST(AimLoss, ContinuousClosedForms) {
  auto net = Mlp<Real>::zeros({3 + 2, 1});
  const ProxyQ q(kBox, 3, net, 1.0);
  const auto a_h = ActionBatch::from(std::vector<Action>{Action::of({0.0, 0.0})}, kBox);
  const auto far = ActionBatch::from(std::vector<Action>{Action::of({0.5, 0.5})}, kBox);
  const auto near = ActionBatch::from(std::vector<Action>{Action::of({0.1, 0.0})}, kBox);
  EXPECT_NEAR(aim::aim_loss_and_grads(q, one_state(), a_h, far, 0.04).loss, 2.0, 1e-12);
  EXPECT_NEAR(aim::aim_loss_and_grads(q, one_state(), a_h, near, 0.04).loss, 1.0, 1e-12);
}

TEST(AimLoss, NonNegativeAndZeroOnlyAtLabels) {
  aim::Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const ProxyQ q(kFour, 6, {16}, rng);
    const Mat s = Mat::Random(6, 20);
    std::uniform_int_distribution<int> pick(0, 3);
    std::vector<int> h(20), r(20);
    for (int j = 0; j < 20; ++j) {
      h[static_cast<std::size_t>(j)] = pick(rng);
      r[static_cast<std::size_t>(j)] = pick(rng);
    }
    EXPECT_GT(aim::aim_loss_and_grads(q, s, indices(h), indices(r), 0.0).loss, 0.0);
  }
}

TEST(AimLoss, MaskedPairsIgnoreAgentValues) {
  aim::Rng rng(5);
  const ProxyQ q(kBox, 4, {16, 16}, rng);
  const Mat s = Mat::Random(4, 12);
  std::vector<Action> h, r1, r2;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int j = 0; j < 12; ++j) {
    h.push_back(Action::of({u(rng), u(rng)}));
    r1.push_back(Action::of({u(rng), u(rng)}));
    r2.push_back(Action::of({u(rng), u(rng)}));
  }
  // eps above the largest possible squared distance in the box masks every pair.
  const auto a = aim::aim_loss_and_grads(q, s, ActionBatch::from(h, kBox), ActionBatch::from(r1, kBox), 9.0);
  const auto b = aim::aim_loss_and_grads(q, s, ActionBatch::from(h, kBox), ActionBatch::from(r2, kBox), 9.0);
  EXPECT_EQ(a.loss, b.loss);
  for (std::size_t l = 0; l < a.grads.size(); ++l) {
    EXPECT_EQ(a.grads[l].weight, b.grads[l].weight);
    EXPECT_EQ(a.grads[l].bias, b.grads[l].bias);
  }
}

aim::TransitionBatch single_transition(int action, bool done) {
  aim::TransitionBatch b;
  b.s = one_state();
  b.s_next = one_state();
  b.a = indices({action});
  b.done = {done};
  b.outcome = {done ? aim::Outcome::Timeout : aim::Outcome::None};
  return b;
}

TEST(TdLoss, ClosedForm) {
  auto q = constant_q({0.5, 0.5, 0.5, 0.5});
  const auto lg = aim::td_loss_and_grads(q, single_transition(1, false), 0.99, std::vector<double>{-1.0});
  EXPECT_NEAR(lg.loss, 2.2201, 1e-12);
}

TEST(TdLoss, TerminalTargetIsZero) {
  auto q = constant_q({0, 0, 0, 0});
  const auto lg = aim::td_loss_and_grads(q, single_transition(0, true), 0.99, std::vector<double>{5.0});
  EXPECT_EQ(lg.loss, 0.0);
}

TEST(TdLoss, DiscreteMaxUsesTargetHeads) {
  auto q = constant_q({0, 0, 0});
  for (auto* net : {&q.pair.target}) {
    net->params()[0].bias << Real(-1), Real(0.2), Real(-0.3);
  }
  aim::Rng rng(1);
  const aim::Policy pol(ActionSpace::discrete(3), Mlp<Real>::zeros({3, 3}));
  const auto m = q.max_next(one_state(), pol, 8, rng);
  EXPECT_NEAR(m[0], 0.2, 1e-7);
}

TEST(TdLoss, ContinuousMaxBoundsPolicyValue) {
  aim::Rng rng(8);
  const ProxyQ q(kBox, 5, {16}, rng, 1.0);
  const aim::Policy pol(kBox, 5, {16}, rng);
  const Mat s = Mat::Random(5, 64);
  const auto m = q.max_next(s, pol, 8, rng);
  const auto at_mu = q.values(s, pol.act_batch(s), true);
  for (std::size_t j = 0; j < m.size(); ++j) EXPECT_GE(m[j], at_mu[j]);
}

TEST(TdLoss, GradientOnlyReachesOnlineNetwork) {
  aim::Rng rng(2);
  ProxyQ q(kFour, 3, {8}, rng, 0.5);
  const auto before = q.pair.target.params();
  const auto lg = aim::td_loss_and_grads(q, single_transition(2, false), 0.99, std::vector<double>{0.3});
  ASSERT_EQ(lg.grads.size(), q.pair.online.params().size());
  for (std::size_t l = 0; l < before.size(); ++l) EXPECT_EQ(before[l].weight, q.pair.target.params()[l].weight);
}

// Independent oracle: full sort, then the ceil(q N)-th element computed in integers.
double sorted_rank_oracle(std::vector<double> v, int num, int den) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  const std::size_t rank = (static_cast<std::size_t>(num) * n + static_cast<std::size_t>(den) - 1) / den;
  return v[std::max<std::size_t>(rank, 1) - 1];
}

TEST(Quantile, HandLists) {
  EXPECT_EQ(aim::nearest_rank_quantile({1, 2, 3, 4, 5}, 0.8), 4.0);
  EXPECT_EQ(aim::nearest_rank_quantile({5, 1, 4, 2, 3}, 0.8), 4.0);
  EXPECT_EQ(aim::nearest_rank_quantile({7, 7, 7}, 0.95), 7.0);
  EXPECT_EQ(aim::nearest_rank_quantile({3}, 0.5), 3.0);
  EXPECT_EQ(aim::nearest_rank_quantile({10, 20}, 0.5), 10.0);
  EXPECT_EQ(aim::nearest_rank_quantile({10, 20}, 0.51), 20.0);
  EXPECT_THROW(aim::nearest_rank_quantile({}, 0.5), aim::EmptySource);
}

TEST(Quantile, MatchesSortOracleAndExceedanceBound) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> len(1, 400);
  std::uniform_int_distribution<int> val(-20, 20);  // many ties
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> v(static_cast<std::size_t>(len(rng)));
    for (auto& x : v) x = val(rng);
    const double beta = aim::nearest_rank_quantile(v, 0.95);
    EXPECT_EQ(beta, sorted_rank_oracle(v, 95, 100));
    const auto above = std::count_if(v.begin(), v.end(), [&](double x) { return x > beta; });
    EXPECT_LE(above, static_cast<long>(std::floor(0.05 * double(v.size()) + 1e-9)));
  }
}

TEST(Quantile, NormalSampleNearAnalyticQuantile) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(10000);
  for (auto& x : v) x = n(rng);
  EXPECT_NEAR(aim::nearest_rank_quantile(v, 0.95), 1.645, 0.05);
}

aim::Transition agent_transition(aim::Observation s, Action a) {
  aim::Transition t;
  t.s_next = s;
  t.s = std::move(s);
  t.a = std::move(a);
  t.actor = Actor::Agent;
  return t;
}

aim::Transition expert_transition(aim::Observation s, Action a) {
  auto t = agent_transition(std::move(s), std::move(a));
  t.actor = Actor::Expert;
  return t;
}

TEST(ComputeBeta, EqualsQuantileOfPerStateValues) {
  aim::Rng rng(4);
  const ProxyQ q(kFour, 5, {16}, rng);
  const aim::Policy pol(kFour, 5, {16}, rng);
  aim::Buffer novice(aim::BufferTag::Novice);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (int i = 0; i < 300; ++i) {
    aim::Observation s(5);
    for (auto& x : s) x = u(rng);
    novice.push(agent_transition(s, Action::of(0)));
  }
  std::vector<double> direct;
  for (std::size_t i = 0; i < novice.size(); ++i) {
    direct.push_back(q.value(novice[i].s, pol.act(novice[i].s)));
  }
  aim::Rng r2(0);
  const double beta = aim::compute_beta(q, novice, pol, 0.05, 4096, r2);
  EXPECT_NEAR(beta, sorted_rank_oracle(direct, 95, 100), 1e-5);
  const auto above = std::count_if(direct.begin(), direct.end(), [&](double x) { return x > beta + 1e-5; });
  EXPECT_LE(above, 15);
  aim::Buffer empty(aim::BufferTag::Novice);
  EXPECT_THROW(aim::compute_beta(q, empty, pol, 0.05, 4096, r2), aim::EmptySource);
}

TEST(ComputeEpsilon, MeanOfSquaredDistances) {
  // A zero network squashes to the box centre.
  const aim::Policy pol(kBox, Mlp<Real>::zeros({2, 2}));
  aim::Buffer human(aim::BufferTag::Human);
  human.push(expert_transition({0.0f, 0.0f}, Action::of({0.1, 0.0})));
  human.push(expert_transition({0.0f, 0.0f}, Action::of({0.0, 0.3})));
  EXPECT_NEAR(aim::compute_epsilon(human, pol), 0.05, 1e-12);
}

TEST(ComputeEpsilon, MatchesPerPairSummation) {
  aim::Rng rng(19);
  const aim::Policy pol(kBox, 4, {16}, rng);
  aim::Buffer human(aim::BufferTag::Human);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    aim::Observation s(4);
    for (auto& x : s) x = static_cast<Real>(u(rng));
    human.push(expert_transition(s, Action::of({u(rng), u(rng)})));
  }
  // Same network outputs, reduced pair by pair and coordinate by coordinate.
  std::vector<const aim::Observation*> obs;
  for (std::size_t i = 0; i < human.size(); ++i) obs.push_back(&human[i].s);
  const Mat mu = pol.outputs(aim::stack(obs));
  double sum = 0.0;
  for (std::size_t i = 0; i < human.size(); ++i) {
    for (std::size_t k = 0; k < 2; ++k) {
      const double d = double(mu(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i))) - human[i].a.vec[k];
      sum += d * d;
    }
  }
  EXPECT_NEAR(aim::compute_epsilon(human, pol), sum / 100.0, 1e-12);
  EXPECT_THROW(aim::compute_epsilon(aim::Buffer(aim::BufferTag::Human), pol), aim::EmptySource);
}

TEST(Gate, RequestIsStrict) {
  EXPECT_TRUE(aim::should_request(4.5, 4.0));
  EXPECT_FALSE(aim::should_request(4.0, 4.0));
}

TEST(Gate, ReleaseRule) {
  EXPECT_TRUE(aim::should_release(Action::of({0.5, 0.0}), Action::of({0.0, 0.0}), 0.25, kBox));
  EXPECT_TRUE(aim::should_release(Action::of(2), Action::of(2), 0.0, kFour));
  EXPECT_FALSE(aim::should_release(Action::of(1), Action::of(2), 0.0, kFour));
}

// Reference gate written from the rule text: an agent-controlled step hands over exactly when
// the score strictly exceeds beta; an expert-controlled step hands back exactly when the two
// discrete actions are equal. Epsilon plays no role.
aim::GateTransition reference_discrete_gate(Actor c, double score, double beta, int a_r, int a_h) {
  if (c == Actor::Agent) return score > beta ? aim::GateTransition{Actor::Expert, true, false} : aim::GateTransition{};
  return a_r == a_h ? aim::GateTransition{Actor::Agent, false, true} : aim::GateTransition{Actor::Expert, false, false};
}

TEST(Gate, DiscreteFuzzAgainstReference) {
  std::mt19937_64 rng(2025);
  std::uniform_int_distribution<int> act(0, 3);
  std::uniform_int_distribution<int> coarse(-3, 3);
  std::uniform_real_distribution<double> eps(0.0, 10.0);
  Actor controller = Actor::Agent;
  long mismatches = 0;
  for (int i = 0; i < 100000; ++i) {
    const double score = coarse(rng) * 0.5;
    const double beta = coarse(rng) * 0.5;
    const Action a_r = Action::of(act(rng));
    const Action a_h = Action::of(act(rng));
    const auto got = aim::advance_gate(controller, aim::should_request(score, beta), a_r, &a_h, eps(rng), kFour);
    const auto want = reference_discrete_gate(controller, score, beta, a_r.index, a_h.index);
    if (got.controller != want.controller || got.request != want.request || got.release != want.release) {
      ++mismatches;
    }
    controller = got.controller;
  }
  EXPECT_EQ(mismatches, 0);
}

TEST(Gate, ExpertControlNeedsExpertAction) {
  EXPECT_THROW(aim::advance_gate(Actor::Expert, false, Action::of(0), nullptr, 0.0, kFour), aim::InvalidArgument);
}

TEST(BcUpdate, SinglePairLoss) {
  aim::Policy pol(kBox, Mlp<Real>::zeros({2, 2}));
  aim::Buffer human(aim::BufferTag::Human);
  human.push(expert_transition({0.0f, 0.0f}, Action::of({0.3, 0.4})));
  aim::nn::Adam<Real> opt;
  aim::Rng rng(0);
  EXPECT_NEAR(aim::bc_update(pol, opt, human, 1, rng), 0.25, 1e-7);
}

TEST(BcUpdate, EmptyBufferIsSkipped) {
  aim::Rng rng(0);
  aim::Policy pol(kBox, 2, {4}, rng);
  aim::nn::Adam<Real> opt;
  EXPECT_LT(aim::bc_update(pol, opt, aim::Buffer(aim::BufferTag::Human), 8, rng), 0.0);
  EXPECT_EQ(opt.step_count(), 0);
}

TEST(BcUpdate, OverfitsTenPairs) {
  aim::Rng rng(3);
  aim::Policy pol(kBox, 4, {32, 32}, rng);
  aim::Buffer human(aim::BufferTag::Human);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  for (int i = 0; i < 10; ++i) {
    aim::Observation s(4);
    for (auto& x : s) x = static_cast<Real>(u(rng));
    human.push(expert_transition(s, Action::of({u(rng), u(rng)})));
  }
  aim::nn::Adam<Real> opt({.lr = 1e-3});
  double loss = 1.0;
  for (int i = 0; i < 5000 && loss >= 1e-3; ++i) loss = aim::bc_update(pol, opt, human, 10, rng);
  EXPECT_LT(loss, 1e-3);
}

aim::AimConfig small_config(std::uint64_t seed) {
  auto cfg = aim::AimConfig::for_space(true);
  cfg.hidden = {32, 32};
  cfg.batch_size = 32;
  cfg.bc_batch_size = 32;
  cfg.grad_steps_per_iter = 1;
  cfg.bc_steps_per_expert_step = 2;
  cfg.q_init_steps = 50;
  cfg.beta_sample = 256;
  cfg.lr = 1e-3;
  cfg.total_step_cap = 400;
  cfg.seed = seed;
  return cfg;
}

TEST(AimTrain, ZeroBudgetIsSelfPlay) {
  auto env = aim::worlds::make_environment("fourrooms");
  auto cfg = small_config(1);
  cfg.expert_budget = 0;
  cfg.warmup_trajectories = 0;
  cfg.total_step_cap = 150;
  const auto run = aim::aim_train(*env, cfg);
  EXPECT_TRUE(run.result.human.empty());
  EXPECT_EQ(run.result.novice.size(), 150u);
  for (const auto& r : run.result.log.records) EXPECT_EQ(r.actor, Actor::Agent);
}

// Stops a run as soon as the warm-up trajectories are over.
struct WarmupOnly : aim::RunObserver {
  bool over = false;
  void on_release(const aim::worlds::Environment&, const aim::GateState&, std::string_view why) override {
    if (why == "warmup_end") over = true;
  }
  void attach(aim::RunOptions& opts) {
    opts.observer = this;
    opts.stop_requested = [this] { return over; };
  }
};

TEST(AimTrain, WarmupWithExpertAsPolicyNeverIntervenes) {
  auto env = aim::worlds::make_environment("fourrooms");
  auto cfg = small_config(2);
  cfg.total_step_cap = 100000;
  cfg.expert_budget = 0;  // any intervention would exhaust the budget
  aim::RunOptions opts;
  opts.proposal_override = [](const aim::worlds::Environment& e) { return e.expert_action(); };
  WarmupOnly stop;
  stop.attach(opts);
  const auto run = aim::aim_train(*env, cfg, opts);
  EXPECT_FALSE(run.result.budget_exhausted_in_warmup);
  EXPECT_TRUE(run.result.human.empty());
  EXPECT_GT(run.result.novice.size(), 0u);
  EXPECT_EQ(run.result.log.records.back().episode, 1);
}

TEST(AimTrain, NoWarmupSkipsStraightToGating) {
  auto env = aim::worlds::make_environment("fourrooms");
  auto cfg = small_config(2);
  cfg.warmup_trajectories = 0;
  cfg.total_step_cap = 50;
  const auto run = aim::aim_train(*env, cfg);
  ASSERT_FALSE(run.result.log.records.empty());
  for (const auto& r : run.result.log.records) EXPECT_NE(r.phase, aim::Phase::Warmup);
}

TEST(AimTrain, WarmupFromScratchCollectsExpertData) {
  auto env = aim::worlds::make_environment("fourrooms");
  auto cfg = small_config(3);
  cfg.warmup_trajectories = 2;
  aim::RunOptions opts;
  WarmupOnly stop;
  stop.attach(opts);
  const auto run = aim::aim_train(*env, cfg, opts);
  EXPECT_GT(run.result.human.size(), 0u);
  for (const auto& r : run.result.log.records) EXPECT_EQ(r.phase, aim::Phase::Warmup);
}

TEST(AimTrain, OracleProposalsRarelyRequest) {
  auto env = aim::worlds::make_environment("fourrooms");
  auto cfg = small_config(4);
  cfg.total_step_cap = 600;
  aim::RunOptions opts;
  opts.proposal_override = [](const aim::worlds::Environment& e) { return e.expert_action(); };
  const auto run = aim::aim_train(*env, cfg, opts);
  long gated = 0, requests = 0;
  for (const auto& r : run.result.log.records) {
    if (r.phase != aim::Phase::Gated) continue;
    ++gated;
    requests += r.request_event;
  }
  ASSERT_GT(gated, 0);
  // Each request is a single expert step since the proposal already matches the oracle.
  EXPECT_LE(double(requests) / double(gated), cfg.delta + 0.03);
}

TEST(AimTrain, RerunIsBitIdentical) {
  auto env = aim::worlds::make_environment("fourrooms");
  const auto cfg = small_config(9);
  const auto a = aim::aim_train(*env, cfg);
  const auto b = aim::aim_train(*env, cfg);
  std::ostringstream sa, sb;
  a.result.log.write_jsonl(sa);
  b.result.log.write_jsonl(sb);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(AimTrain, VariantRecordedInHeader) {
  auto env = aim::worlds::make_environment("fourrooms");
  auto cfg = small_config(5);
  cfg.total_step_cap = 60;
  const auto run = aim::aim_train(*env, cfg, {}, aim::QObjective::NoTd);
  EXPECT_EQ(run.result.log.header["method"], "aim-notd");
  EXPECT_EQ(run.learner->last_loss().td, 0.0);
}

TEST(ProxyQStep, NoTdWithEmptyNoviceEqualsAimOnly) {
  aim::Rng rng(6);
  const ProxyQ init(kFour, 3, {8}, rng, 0.5);
  const aim::Policy pol(kFour, 3, {8}, rng);
  aim::Buffer human(aim::BufferTag::Human);
  for (int i = 0; i < 10; ++i) human.push(expert_transition({0.1f * i, 0.2f, -0.1f * i}, Action::of(i % 4)));
  aim::Buffer novice(aim::BufferTag::Novice);
  auto cfg = small_config(0);
  ProxyQ a = init, b = init;
  aim::nn::Adam<Real> oa, ob;
  aim::Rng ra(1), rb(1);
  aim::proxy_q_step(a, oa, human, novice, pol, cfg, 0.0, aim::QObjective::NoTd, ra);
  // Same sampling stream, intervention term alone.
  const auto hb = aim::sample_batch(human, static_cast<std::size_t>(cfg.batch_size), kFour, rb);
  const auto lg = aim::aim_loss_and_grads(b, hb.s, hb.a, pol, 0.0);
  ob.step(b.pair.online.params(), lg.grads);
  b.pair.polyak_update();
  for (std::size_t l = 0; l < a.pair.online.params().size(); ++l) {
    EXPECT_EQ(a.pair.online.params()[l].weight, b.pair.online.params()[l].weight);
  }
}

}  // namespace
