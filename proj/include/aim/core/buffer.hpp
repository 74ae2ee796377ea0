#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "aim/core/transition.hpp"

namespace aim {

enum class BufferTag { Human, Novice };

/// Unbounded, append-only replay storage. The human buffer only holds expert-executed
/// transitions and the novice buffer only agent-executed ones.
class Buffer {
 public:
  explicit Buffer(BufferTag tag) : tag_(tag) {}

  BufferTag tag() const { return tag_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const Transition& operator[](std::size_t i) const { return entries_[i]; }
  std::span<const Transition> entries() const { return entries_; }

  void push(Transition t) {
    const Actor expected = tag_ == BufferTag::Human ? Actor::Expert : Actor::Agent;
    if (t.actor != expected) {
      throw InvariantViolation(tag_ == BufferTag::Human
                                   ? "human buffer accepts expert transitions only"
                                   : "novice buffer accepts agent transitions only");
    }
    entries_.push_back(std::move(t));
  }

  /// `k` indices drawn uniformly with replacement.
  template <class Rng>
  std::vector<std::size_t> sample_indices(std::size_t k, Rng& rng) const {
    if (entries_.empty()) throw EmptySource("cannot sample from an empty buffer");
    std::uniform_int_distribution<std::size_t> pick(0, entries_.size() - 1);
    std::vector<std::size_t> out(k);
    for (auto& i : out) i = pick(rng);
    return out;
  }

  std::vector<Transition> sample(std::size_t k, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::vector<Transition> out;
    out.reserve(k);
    for (auto i : sample_indices(k, rng)) out.push_back(entries_[i]);
    return out;
  }

 private:
  BufferTag tag_;
  std::vector<Transition> entries_;
};

}  // namespace aim
