#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "aim/core/errors.hpp"

namespace aim {

/// Scalar type of observations and network parameters used by the learners.
using Real = float;
using Observation = std::vector<Real>;

enum class SpaceKind { Continuous, Discrete };

struct ActionSpace {
  SpaceKind kind = SpaceKind::Discrete;
  std::vector<double> low;
  std::vector<double> high;
  int n = 0;  // Discrete only

  static ActionSpace continuous(std::vector<double> low, std::vector<double> high) {
    if (low.empty() || low.size() != high.size()) {
      throw InvalidArgument("continuous space needs equal-length, non-empty bounds");
    }
    for (std::size_t i = 0; i < low.size(); ++i) {
      if (!(low[i] < high[i])) throw InvalidArgument("continuous space needs low < high");
    }
    return ActionSpace{SpaceKind::Continuous, std::move(low), std::move(high), 0};
  }

  static ActionSpace discrete(int n) {
    if (n < 2) throw InvalidArgument("discrete space needs n >= 2");
    return ActionSpace{SpaceKind::Discrete, {}, {}, n};
  }

  bool is_discrete() const { return kind == SpaceKind::Discrete; }
  int dim() const { return is_discrete() ? 1 : static_cast<int>(low.size()); }
};

/// A continuous vector or a discrete index. `index < 0` marks the continuous form.
struct Action {
  std::vector<double> vec;
  int index = -1;

  static Action of(int i) { return Action{{}, i}; }
  static Action of(std::vector<double> v) { return Action{std::move(v), -1}; }

  bool is_discrete() const { return index >= 0; }
  bool operator==(const Action&) const = default;
};

inline bool valid_for(const Action& a, const ActionSpace& space) {
  if (space.is_discrete()) return a.is_discrete() && a.index < space.n;
  return !a.is_discrete() && a.vec.size() == space.low.size();
}

inline void require_valid(const Action& a, const ActionSpace& space) {
  if (!valid_for(a, space)) throw InvalidArgument("action does not match the action space");
}

inline Action clamp_to(Action a, const ActionSpace& space) {
  require_valid(a, space);
  if (!space.is_discrete()) {
    for (std::size_t i = 0; i < a.vec.size(); ++i) {
      double v = a.vec[i];
      if (std::isnan(v)) v = 0.0;
      a.vec[i] = std::min(std::max(v, space.low[i]), space.high[i]);
    }
  }
  return a;
}

/// Squared Euclidean distance between two continuous actions.
inline double squared_distance(const Action& a, const Action& b) {
  if (a.vec.size() != b.vec.size()) throw InvalidArgument("action dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.vec.size(); ++i) {
    const double d = a.vec[i] - b.vec[i];
    acc += d * d;
  }
  return acc;
}

/// Action-difference indicator f(a_r, a_h): strict `||a_r - a_h||^2 > eps` on continuous
/// spaces, `a_r != a_h` on discrete ones (eps ignored). Ties do not count as deviation.
inline bool deviates(const Action& agent, const Action& expert, double eps,
                     const ActionSpace& space) {
  require_valid(agent, space);
  require_valid(expert, space);
  if (space.is_discrete()) return agent.index != expert.index;
  return squared_distance(agent, expert) > eps;
}

template <class Rng>
Action sample_uniform(const ActionSpace& space, Rng& rng) {
  if (space.is_discrete()) {
    std::uniform_int_distribution<int> pick(0, space.n - 1);
    return Action::of(pick(rng));
  }
  std::vector<double> v(space.low.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uniform_real_distribution<double> u(space.low[i], space.high[i]);
    v[i] = u(rng);
  }
  return Action::of(std::move(v));
}

}  // namespace aim
