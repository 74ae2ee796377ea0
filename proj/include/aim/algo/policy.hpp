#pragma once

#include <cmath>
#include <vector>

#include "aim/algo/batch.hpp"
#include "aim/nn/adam.hpp"

namespace aim {

/// Deterministic agent policy. Box spaces: tanh-squashed outputs mapped onto [low, high].
/// Discrete spaces: logits, argmax with lowest-index ties.
class Policy {
 public:
  Policy(const ActionSpace& space, int obs_dim, const std::vector<int>& hidden, Rng& rng)
      : space_(space), net_(sizes(obs_dim, hidden, space), rng) {}
  Policy(const ActionSpace& space, nn::Mlp<Real> net) : space_(space), net_(std::move(net)) {
    if (net_.output_size() != (space_.is_discrete() ? space_.n : space_.dim())) {
      throw InvalidArgument("policy network output does not match the action space");
    }
  }

  const ActionSpace& space() const { return space_; }
  nn::Mlp<Real>& net() { return net_; }
  const nn::Mlp<Real>& net() const { return net_; }

  /// Box: squashed actions (dim x B). Discrete: raw logits (n x B).
  Mat outputs(const Mat& s) const {
    Mat z = net_.forward_batch(s);
    if (!space_.is_discrete()) squash(z);
    return z;
  }

  ActionBatch act_batch(const Mat& s) const {
    ActionBatch b;
    b.discrete = space_.is_discrete();
    Mat out = outputs(s);
    if (b.discrete) {
      b.index.resize(static_cast<std::size_t>(out.cols()));
      for (Eigen::Index j = 0; j < out.cols(); ++j) {
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < out.rows(); ++i) {
          if (out(i, j) > out(best, j)) best = i;
        }
        b.index[static_cast<std::size_t>(j)] = static_cast<int>(best);
      }
    } else {
      b.vec = std::move(out);
    }
    return b;
  }

  Action act(const Observation& s) const {
    const Observation* p = &s;
    return act_batch(stack(std::span<const Observation* const>(&p, 1))).at(0);
  }

  /// Imitation loss on (s, a_h) pairs and its gradient. Box: mean over the batch of the
  /// squared distance. Discrete: mean cross-entropy of the logits against the expert index.
  double bc_loss_and_grads(const Mat& s, const ActionBatch& a_h, nn::Params<Real>* grads) const {
    const auto B = s.cols();
    if (B == 0) throw InvalidArgument("empty imitation batch");
    nn::Tape<Real> tape;
    const Mat z = net_.forward_batch(s, tape);
    Mat up(z.rows(), z.cols());
    double loss = 0.0;
    if (space_.is_discrete()) {
      for (Eigen::Index j = 0; j < B; ++j) {
        const double m = z.col(j).maxCoeff();
        double sum = 0.0;
        for (Eigen::Index i = 0; i < z.rows(); ++i) sum += std::exp(double(z(i, j)) - m);
        const int y = a_h.index[static_cast<std::size_t>(j)];
        loss += -(double(z(y, j)) - m - std::log(sum));
        for (Eigen::Index i = 0; i < z.rows(); ++i) {
          const double p = std::exp(double(z(i, j)) - m) / sum;
          up(i, j) = static_cast<Real>((p - (i == y ? 1.0 : 0.0)) / double(B));
        }
      }
    } else {
      for (Eigen::Index j = 0; j < B; ++j) {
        for (Eigen::Index i = 0; i < z.rows(); ++i) {
          const double t = std::tanh(double(z(i, j)));
          const double half = 0.5 * (space_.high[i] - space_.low[i]);
          const double a = space_.low[i] + (t + 1.0) * half;
          const double d = a - double(a_h.vec(i, j));
          loss += d * d;
          up(i, j) = static_cast<Real>(2.0 * d * (1.0 - t * t) * half / double(B));
        }
      }
    }
    loss /= double(B);
    if (grads) *grads = net_.backward(tape, up).grads;
    return loss;
  }

 private:
  static std::vector<int> sizes(int obs_dim, const std::vector<int>& hidden, const ActionSpace& sp) {
    std::vector<int> s{obs_dim};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(sp.is_discrete() ? sp.n : sp.dim());
    return s;
  }

  void squash(Mat& z) const {
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const Real lo = static_cast<Real>(space_.low[i]);
      const Real half = static_cast<Real>(0.5 * (space_.high[i] - space_.low[i]));
      z.row(i) = lo + (z.row(i).array().tanh() + Real(1)) * half;
    }
  }

  ActionSpace space_;
  nn::Mlp<Real> net_;
};

/// One Adam step of imitation on a uniform batch from `human`. Returns the batch loss,
/// or a negative value when the buffer is empty and the update is skipped.
inline double bc_update(Policy& policy, nn::Adam<Real>& opt, const Buffer& human,
                        std::size_t batch_size, Rng& rng) {
  if (human.empty()) return -1.0;
  std::vector<const Transition*> ts;
  for (auto i : human.sample_indices(batch_size, rng)) ts.push_back(&human[i]);
  const auto b = gather(ts, policy.space());
  nn::Params<Real> g;
  const double loss = policy.bc_loss_and_grads(b.s, b.a, &g);
  opt.step(policy.net().params(), g);
  return loss;
}

}  // namespace aim
