#pragma once

#include <random>
#include <span>
#include <vector>

#include "aim/core/buffer.hpp"
#include "aim/nn/mlp.hpp"

namespace aim {

using Rng = std::mt19937_64;
using Mat = nn::Matrix<Real>;

/// Observations stacked one per column.
inline Mat stack(std::span<const Observation* const> obs) {
  if (obs.empty()) throw InvalidArgument("cannot stack an empty batch");
  const auto rows = static_cast<Eigen::Index>(obs.front()->size());
  Mat m(rows, static_cast<Eigen::Index>(obs.size()));
  for (std::size_t j = 0; j < obs.size(); ++j) {
    if (static_cast<Eigen::Index>(obs[j]->size()) != rows) {
      throw InvalidArgument("observation length mismatch in batch");
    }
    m.col(static_cast<Eigen::Index>(j)) =
        Eigen::Map<const nn::Vector<Real>>(obs[j]->data(), rows);
  }
  return m;
}

inline Mat stack(const std::vector<Observation>& obs) {
  std::vector<const Observation*> ptrs;
  ptrs.reserve(obs.size());
  for (const auto& o : obs) ptrs.push_back(&o);
  return stack(ptrs);
}

/// Actions of one batch: a matrix (dim x B) for box spaces, an index list for discrete ones.
struct ActionBatch {
  bool discrete = false;
  Mat vec;
  std::vector<int> index;

  std::size_t size() const { return discrete ? index.size() : static_cast<std::size_t>(vec.cols()); }

  Action at(std::size_t j) const {
    if (discrete) return Action::of(index[j]);
    std::vector<double> v(static_cast<std::size_t>(vec.rows()));
    for (Eigen::Index i = 0; i < vec.rows(); ++i) v[static_cast<std::size_t>(i)] = vec(i, static_cast<Eigen::Index>(j));
    return Action::of(std::move(v));
  }

  static ActionBatch from(std::span<const Action* const> actions, const ActionSpace& space) {
    ActionBatch b;
    b.discrete = space.is_discrete();
    if (b.discrete) {
      b.index.reserve(actions.size());
      for (const auto* a : actions) b.index.push_back(a->index);
    } else {
      b.vec.resize(space.dim(), static_cast<Eigen::Index>(actions.size()));
      for (std::size_t j = 0; j < actions.size(); ++j) {
        for (int i = 0; i < space.dim(); ++i) {
          b.vec(i, static_cast<Eigen::Index>(j)) = static_cast<Real>(actions[j]->vec[static_cast<std::size_t>(i)]);
        }
      }
    }
    return b;
  }

  static ActionBatch from(const std::vector<Action>& actions, const ActionSpace& space) {
    std::vector<const Action*> ptrs;
    ptrs.reserve(actions.size());
    for (const auto& a : actions) ptrs.push_back(&a);
    return from(ptrs, space);
  }
};

/// A uniformly drawn minibatch of transitions, stacked for the networks.
struct TransitionBatch {
  Mat s;
  Mat s_next;
  ActionBatch a;
  std::vector<bool> done;
  std::vector<Outcome> outcome;

  std::size_t size() const { return done.size(); }
};

inline TransitionBatch gather(std::span<const Transition* const> ts, const ActionSpace& space) {
  std::vector<const Observation*> s, sn;
  std::vector<const Action*> a;
  TransitionBatch b;
  for (const auto* t : ts) {
    s.push_back(&t->s);
    sn.push_back(&t->s_next);
    a.push_back(&t->a);
    b.done.push_back(t->done);
    b.outcome.push_back(t->outcome);
  }
  b.s = stack(s);
  b.s_next = stack(sn);
  b.a = ActionBatch::from(a, space);
  return b;
}

inline TransitionBatch sample_batch(const Buffer& buf, std::size_t k, const ActionSpace& space,
                                    Rng& rng) {
  std::vector<const Transition*> ts;
  for (auto i : buf.sample_indices(k, rng)) ts.push_back(&buf[i]);
  return gather(ts, space);
}

/// Half the batch from each buffer when both hold data, else everything from the non-empty one.
inline TransitionBatch sample_mixed(const Buffer& human, const Buffer& novice, std::size_t k,
                                    const ActionSpace& space, Rng& rng) {
  std::vector<const Transition*> ts;
  if (human.empty() && novice.empty()) throw EmptySource("both buffers are empty");
  std::size_t from_h = human.empty() ? 0 : (novice.empty() ? k : k / 2);
  for (auto i : human.empty() ? std::vector<std::size_t>{} : human.sample_indices(from_h, rng)) {
    ts.push_back(&human[i]);
  }
  if (!novice.empty()) {
    for (auto i : novice.sample_indices(k - from_h, rng)) ts.push_back(&novice[i]);
  }
  return gather(ts, space);
}

}  // namespace aim
