#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "aim/algo/proxy_q.hpp"

namespace aim {

/// Nearest-rank quantile: sort ascending and take the ceil(q * N)-th value (1-based).
inline double nearest_rank_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw EmptySource("quantile of an empty sample");
  if (!(q > 0.0 && q <= 1.0)) throw InvalidArgument("quantile level must be in (0, 1]");
  const auto n = static_cast<double>(values.size());
  // The small slack keeps e.g. 0.8 * 5 from rounding up to rank 5.
  auto rank = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1), values.end());
  return values[rank - 1];
}

/// Up to `cap` distinct novice indices, uniformly without replacement; all of them if fewer.
inline std::vector<std::size_t> subsample_indices(std::size_t n, std::size_t cap, Rng& rng) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  if (n <= cap) return all;
  std::vector<std::size_t> out;
  out.reserve(cap);
  std::sample(all.begin(), all.end(), std::back_inserter(out), cap, rng);
  return out;
}

/// Q(s, mu(s)) for the listed novice states, multiplied by `sign`.
inline std::vector<double> policy_values(const ProxyQ& q, const Buffer& novice, const Policy& policy,
                                         const std::vector<std::size_t>& idx, double sign = 1.0) {
  std::vector<const Observation*> obs;
  obs.reserve(idx.size());
  for (auto i : idx) obs.push_back(&novice[i].s);
  const Mat s = stack(obs);
  auto v = q.values(s, policy.act_batch(s));
  for (auto& x : v) x *= sign;
  return v;
}

/// Switch-to-human threshold: the (1 - delta) nearest-rank quantile of Q(s, mu(s)) over
/// novice states (subsampled to at most `cap`).
inline double compute_beta(const ProxyQ& q, const Buffer& novice, const Policy& policy, double delta,
                           std::size_t cap, Rng& rng, double sign = 1.0) {
  if (novice.empty()) throw EmptySource("novice buffer is empty");
  return nearest_rank_quantile(policy_values(q, novice, policy, subsample_indices(novice.size(), cap, rng), sign),
                               1.0 - delta);
}

/// Continue-with-human threshold: mean squared distance between mu(s) and a_h over B_h.
inline double compute_epsilon(const Buffer& human, const Policy& policy) {
  if (human.empty()) throw EmptySource("human buffer is empty");
  if (policy.space().is_discrete()) throw Unsupported("epsilon is defined for box action spaces");
  constexpr std::size_t kChunk = 1024;
  double total = 0.0;
  for (std::size_t begin = 0; begin < human.size(); begin += kChunk) {
    const std::size_t end = std::min(human.size(), begin + kChunk);
    std::vector<const Observation*> obs;
    for (std::size_t i = begin; i < end; ++i) obs.push_back(&human[i].s);
    const Mat mu = policy.outputs(stack(obs));
    for (std::size_t i = begin; i < end; ++i) {
      const auto& ah = human[i].a.vec;
      double d2 = 0.0;
      for (std::size_t k = 0; k < ah.size(); ++k) {
        const double d = double(mu(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i - begin))) - ah[k];
        d2 += d * d;
      }
      total += d2;
    }
  }
  return total / double(human.size());
}

inline bool should_request(double q_value, double beta) { return q_value > beta; }

inline bool should_request(const ProxyQ& q, const Observation& s, const Action& a_r, double beta) {
  return should_request(q.value(s, a_r), beta);
}

inline bool should_release(const Action& a_r, const Action& a_h, double eps, const ActionSpace& space) {
  return !deviates(a_r, a_h, eps, space);
}

/// Controller after one gate evaluation. A request hands control to the expert for this
/// step; an expert block ends at the first later step whose proposal no longer deviates.
struct GateTransition {
  Actor controller = Actor::Agent;
  bool request = false;
  bool release = false;
};

inline GateTransition advance_gate(Actor controller, bool request_signal, const Action& a_r,
                                   const Action* a_h, double eps, const ActionSpace& space) {
  GateTransition g{controller, false, false};
  if (controller == Actor::Agent) {
    if (request_signal) {
      g.controller = Actor::Expert;
      g.request = true;
    }
    return g;
  }
  if (!a_h) throw InvalidArgument("expert action required while the expert is in control");
  if (should_release(a_r, *a_h, eps, space)) {
    g.controller = Actor::Agent;
    g.release = true;
  }
  return g;
}

}  // namespace aim
