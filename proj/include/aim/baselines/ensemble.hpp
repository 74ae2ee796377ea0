#pragma once

#include <algorithm>
#include <vector>

#include "aim/algo/policy.hpp"

namespace aim::baselines {

/// Policies with independent initialisations, each trained on its own minibatches.
struct Ensemble {
  std::vector<Policy> members;

  Ensemble(const ActionSpace& space, int obs_dim, const std::vector<int>& hidden, Rng& rng, int size = 5) {
    if (size < 1) throw InvalidArgument("ensemble needs at least one member");
    members.reserve(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) members.emplace_back(space, obs_dim, hidden, rng);
  }
  explicit Ensemble(std::vector<Policy> m) : members(std::move(m)) {
    if (members.empty()) throw InvalidArgument("ensemble needs at least one member");
  }

  const ActionSpace& space() const { return members.front().space(); }
  std::size_t size() const { return members.size(); }
};

/// Disagreement per column of `s`. Box: mean over action dimensions of the across-member
/// population variance. Discrete: 1 - (plurality vote count) / members.
inline std::vector<double> ensemble_uncertainty(const Ensemble& ens, const Mat& s) {
  const auto B = static_cast<std::size_t>(s.cols());
  std::vector<double> out(B, 0.0);
  const double k = double(ens.size());
  if (ens.space().is_discrete()) {
    std::vector<std::vector<int>> votes(B, std::vector<int>(static_cast<std::size_t>(ens.space().n), 0));
    for (const auto& m : ens.members) {
      const auto a = m.act_batch(s);
      for (std::size_t j = 0; j < B; ++j) ++votes[j][static_cast<std::size_t>(a.index[j])];
    }
    for (std::size_t j = 0; j < B; ++j) {
      out[j] = 1.0 - double(*std::max_element(votes[j].begin(), votes[j].end())) / k;
    }
    return out;
  }
  const int d = ens.space().dim();
  std::vector<Mat> outs;
  outs.reserve(ens.size());
  for (const auto& m : ens.members) outs.push_back(m.outputs(s));
  for (std::size_t j = 0; j < B; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    double total = 0.0;
    for (int i = 0; i < d; ++i) {
      double mean = 0.0;
      for (const auto& o : outs) mean += double(o(i, jj));
      mean /= k;
      double var = 0.0;
      for (const auto& o : outs) var += (double(o(i, jj)) - mean) * (double(o(i, jj)) - mean);
      total += var / k;
    }
    out[j] = total / d;
  }
  return out;
}

inline double ensemble_uncertainty(const Ensemble& ens, const Observation& s) {
  const Observation* p = &s;
  return ensemble_uncertainty(ens, stack(std::span<const Observation* const>(&p, 1)))[0];
}

}  // namespace aim::baselines
