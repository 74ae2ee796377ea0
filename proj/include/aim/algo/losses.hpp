#pragma once

#include <algorithm>
#include <vector>

#include "aim/algo/config.hpp"
#include "aim/algo/proxy_q.hpp"

namespace aim {

struct LossAndGrads {
  double loss = 0.0;
  nn::Params<Real> grads;
};

struct LossReport {
  double aim = 0.0;
  double td = 0.0;
  double total() const { return aim + td; }
};

/// Regression of Q(s, a_h) onto `target_h` and, where `mask` is set, of Q(s, a_r) onto
/// `target_r`. Both terms are averaged over the full batch.
inline LossAndGrads label_loss_and_grads(const ProxyQ& q, const Mat& s, const ActionBatch& a_h,
                                         const ActionBatch& a_r, const std::vector<bool>& mask,
                                         const std::vector<double>& target_h,
                                         const std::vector<double>& target_r) {
  const auto B = s.cols();
  if (B == 0) throw InvalidArgument("empty intervention batch");
  const double inv = 1.0 / double(B);
  const auto& net = q.pair.online;
  nn::Tape<Real> tape;
  LossAndGrads out;
  if (q.space().is_discrete()) {
    const Mat z = net.forward_batch(s, tape);
    Mat up = Mat::Zero(z.rows(), z.cols());
    for (Eigen::Index j = 0; j < B; ++j) {
      const auto jj = static_cast<std::size_t>(j);
      const double dh = double(z(a_h.index[jj], j)) - target_h[jj];
      out.loss += dh * dh * inv;
      up(a_h.index[jj], j) += static_cast<Real>(2.0 * dh * inv);
      if (mask[jj]) {
        const double dr = double(z(a_r.index[jj], j)) - target_r[jj];
        out.loss += dr * dr * inv;
        up(a_r.index[jj], j) += static_cast<Real>(2.0 * dr * inv);
      }
    }
    out.grads = net.backward(tape, up).grads;
    return out;
  }
  Mat x(s.rows() + a_h.vec.rows(), 2 * B);
  x.leftCols(B) = q.encode(s, a_h);
  x.rightCols(B) = q.encode(s, a_r);
  const Mat z = net.forward_batch(x, tape);
  Mat up = Mat::Zero(1, 2 * B);
  for (Eigen::Index j = 0; j < B; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    const double dh = double(z(0, j)) - target_h[jj];
    out.loss += dh * dh * inv;
    up(0, j) = static_cast<Real>(2.0 * dh * inv);
    if (mask[jj]) {
      const double dr = double(z(0, B + j)) - target_r[jj];
      out.loss += dr * dr * inv;
      up(0, B + j) = static_cast<Real>(2.0 * dr * inv);
    }
  }
  out.grads = net.backward(tape, up).grads;
  return out;
}

inline std::vector<bool> deviation_mask(const ActionBatch& a_r, const ActionBatch& a_h, double eps) {
  std::vector<bool> f(a_h.size());
  for (std::size_t j = 0; j < f.size(); ++j) {
    if (a_h.discrete) {
      f[j] = a_r.index[j] != a_h.index[j];
    } else {
      const auto jj = static_cast<Eigen::Index>(j);
      f[j] = double((a_r.vec.col(jj) - a_h.vec.col(jj)).squaredNorm()) > eps;
    }
  }
  return f;
}

/// Intervention loss: Q(s, a_h) -> -1 on every pair, Q(s, a_r) -> +1 where the agent's
/// action deviates from the expert's by more than `eps`.
inline LossAndGrads aim_loss_and_grads(const ProxyQ& q, const Mat& s, const ActionBatch& a_h,
                                       const ActionBatch& a_r, double eps) {
  const auto n = static_cast<std::size_t>(s.cols());
  return label_loss_and_grads(q, s, a_h, a_r, deviation_mask(a_r, a_h, eps),
                              std::vector<double>(n, -1.0), std::vector<double>(n, 1.0));
}

inline LossAndGrads aim_loss_and_grads(const ProxyQ& q, const Mat& s, const ActionBatch& a_h,
                                       const Policy& policy, double eps) {
  return aim_loss_and_grads(q, s, a_h, policy.act_batch(s), eps);
}

/// TD loss against precomputed next-state maxima `m`; terminal transitions bootstrap from 0.
/// Mean squared error of Q(s, a) against fixed per-sample targets.
inline LossAndGrads value_regression(const ProxyQ& q, const Mat& s, const ActionBatch& a,
                                     const std::vector<double>& targets) {
  const auto B = s.cols();
  if (B == 0) throw InvalidArgument("empty regression batch");
  const double inv = 1.0 / double(B);
  nn::Tape<Real> tape;
  const Mat z = q.pair.online.forward_batch(q.encode(s, a), tape);
  Mat up = Mat::Zero(z.rows(), z.cols());
  LossAndGrads out;
  for (Eigen::Index j = 0; j < B; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    const Eigen::Index row = q.space().is_discrete() ? a.index[jj] : 0;
    const double d = double(z(row, j)) - targets[jj];
    out.loss += d * d * inv;
    up(row, j) = static_cast<Real>(2.0 * d * inv);
  }
  out.grads = q.pair.online.backward(tape, up).grads;
  return out;
}

/// TD loss against gamma * m[j], where m approximates the max-next target value.
/// Terminal transitions regress onto 0.
inline LossAndGrads td_loss_and_grads(const ProxyQ& q, const TransitionBatch& b, double gamma,
                                      const std::vector<double>& m) {
  std::vector<double> targets(b.size());
  for (std::size_t j = 0; j < targets.size(); ++j) targets[j] = b.done[j] ? 0.0 : gamma * m[j];
  return value_regression(q, b.s, b.a, targets);
}

inline LossAndGrads td_loss_and_grads(const ProxyQ& q, const TransitionBatch& b, double gamma,
                                      const Policy& policy, int box_samples, Rng& rng) {
  return td_loss_and_grads(q, b, gamma, q.max_next(b.s_next, policy, box_samples, rng));
}

/// One optimiser step per call on the chosen objective, followed by a Polyak update.
/// The intervention term is skipped while the human buffer is empty.
inline LossReport proxy_q_step(ProxyQ& q, nn::Adam<Real>& opt, const Buffer& human,
                               const Buffer& novice, const Policy& policy, const AimConfig& cfg,
                               double eps, QObjective objective, Rng& rng) {
  LossReport report;
  nn::Params<Real> grads = nn::zeros_like(q.pair.online.params());
  const auto& space = q.space();
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const double bound = objective == QObjective::RewardLabel && cfg.gamma < 1.0 ? 1.0 / (1.0 - cfg.gamma) : 1.0;
  auto max_next = [&](const Mat& s_next) {
    auto m = q.max_next(s_next, policy, cfg.box_samples, rng);
    if (cfg.clip_bootstrap) {
      for (auto& v : m) v = std::clamp(v, -bound, bound);
    }
    return m;
  };
  if (!human.empty()) {
    const auto hb = sample_batch(human, batch, space, rng);
    const auto a_r = policy.act_batch(hb.s);
    LossAndGrads lg;
    if (objective == QObjective::RewardLabel) {
      const auto m = max_next(hb.s_next);
      std::vector<double> th(m.size()), tr(m.size());
      for (std::size_t j = 0; j < m.size(); ++j) {
        const double boot = hb.done[j] ? 0.0 : cfg.gamma * m[j];
        th[j] = 1.0 + boot;
        tr[j] = -1.0 + boot;
      }
      lg = label_loss_and_grads(q, hb.s, hb.a, a_r, deviation_mask(a_r, hb.a, eps), th, tr);
    } else {
      lg = aim_loss_and_grads(q, hb.s, hb.a, a_r, eps);
    }
    report.aim = lg.loss;
    nn::add_into(grads, lg.grads);
  }
  if (objective != QObjective::NoTd && !(human.empty() && novice.empty())) {
    const auto tb = sample_mixed(human, novice, batch, space, rng);
    const auto lg = td_loss_and_grads(q, tb, cfg.gamma, max_next(tb.s_next));
    report.td = lg.loss;
    nn::add_into(grads, lg.grads);
  }
  opt.step(q.pair.online.params(), grads);
  q.pair.polyak_update();
  return report;
}

/// `cfg.grad_steps_per_iter` optimiser steps; returns the last step's report.
inline LossReport update_proxy_q(ProxyQ& q, nn::Adam<Real>& opt, const Buffer& human,
                                 const Buffer& novice, const Policy& policy, const AimConfig& cfg,
                                 double eps, QObjective objective, Rng& rng) {
  LossReport r;
  for (int i = 0; i < cfg.grad_steps_per_iter; ++i) {
    r = proxy_q_step(q, opt, human, novice, policy, cfg, eps, objective, rng);
  }
  return r;
}

}  // namespace aim
