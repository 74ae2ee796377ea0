#pragma once

#include <limits>
#include <vector>

#include "aim/algo/policy.hpp"

namespace aim {

/// Intervention critic with a delayed target copy. Box spaces feed concat(s, a) into a
/// scalar head; discrete spaces feed s and read one head per action.
class ProxyQ {
 public:
  ProxyQ(const ActionSpace& space, int obs_dim, const std::vector<int>& hidden, Rng& rng,
         double tau = 0.005)
      : space_(space), obs_dim_(obs_dim), pair(nn::Mlp<Real>(sizes(obs_dim, hidden, space), rng), tau) {}
  ProxyQ(const ActionSpace& space, int obs_dim, nn::Mlp<Real> net, double tau = 0.005)
      : space_(space), obs_dim_(obs_dim), pair(std::move(net), tau) {
    const int in = space.is_discrete() ? obs_dim : obs_dim + space.dim();
    const int out = space.is_discrete() ? space.n : 1;
    if (pair.online.input_size() != in || pair.online.output_size() != out) {
      throw InvalidArgument("proxy-Q network shape does not match the encoding");
    }
  }

  const ActionSpace& space() const { return space_; }
  int obs_dim() const { return obs_dim_; }

  /// Network input for (s, a) columns. Discrete: s itself.
  Mat encode(const Mat& s, const ActionBatch& a) const {
    if (space_.is_discrete()) return s;
    Mat x(s.rows() + a.vec.rows(), s.cols());
    x.topRows(s.rows()) = s;
    x.bottomRows(a.vec.rows()) = a.vec;
    return x;
  }

  /// Q(s_j, a_j) for every column, from the online or the target network.
  std::vector<double> values(const Mat& s, const ActionBatch& a, bool use_target = false) const {
    const auto& net = use_target ? pair.target : pair.online;
    const Mat out = net.forward_batch(encode(s, a));
    std::vector<double> v(static_cast<std::size_t>(s.cols()));
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      v[static_cast<std::size_t>(j)] =
          space_.is_discrete() ? out(a.index[static_cast<std::size_t>(j)], j) : out(0, j);
    }
    return v;
  }

  double value(const Observation& s, const Action& a) const {
    const Observation* ps = &s;
    const Action* pa = &a;
    return values(stack(std::span<const Observation* const>(&ps, 1)),
                  ActionBatch::from(std::span<const Action* const>(&pa, 1), space_))[0];
  }

  /// Approximate max over next actions of the target network. Discrete: exact max over heads.
  /// Box: max over {mu(s')} and `samples` uniform draws from the action box.
  std::vector<double> max_next(const Mat& s_next, const Policy& policy, int samples, Rng& rng) const {
    const auto B = s_next.cols();
    std::vector<double> m(static_cast<std::size_t>(B), -std::numeric_limits<double>::infinity());
    if (space_.is_discrete()) {
      const Mat out = pair.target.forward_batch(s_next);
      for (Eigen::Index j = 0; j < B; ++j) m[static_cast<std::size_t>(j)] = out.col(j).maxCoeff();
      return m;
    }
    const int k = 1 + samples;
    const int d = space_.dim();
    Mat x(s_next.rows() + d, B * k);
    const Mat mu = policy.outputs(s_next);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int c = 0; c < k; ++c) {
      x.block(0, c * B, s_next.rows(), B) = s_next;
      if (c == 0) {
        x.block(s_next.rows(), 0, d, B) = mu;
        continue;
      }
      for (Eigen::Index j = 0; j < B; ++j) {
        for (int i = 0; i < d; ++i) {
          x(s_next.rows() + i, c * B + j) =
              static_cast<Real>(space_.low[i] + u(rng) * (space_.high[i] - space_.low[i]));
        }
      }
    }
    const Mat out = pair.target.forward_batch(x);
    for (int c = 0; c < k; ++c) {
      for (Eigen::Index j = 0; j < B; ++j) {
        m[static_cast<std::size_t>(j)] = std::max(m[static_cast<std::size_t>(j)], double(out(0, c * B + j)));
      }
    }
    return m;
  }

 private:
  static std::vector<int> sizes(int obs_dim, const std::vector<int>& hidden, const ActionSpace& sp) {
    std::vector<int> s{sp.is_discrete() ? obs_dim : obs_dim + sp.dim()};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(sp.is_discrete() ? sp.n : 1);
    return s;
  }

  ActionSpace space_;
  int obs_dim_;

 public:
  nn::TargetPair<Real> pair;
};

}  // namespace aim
