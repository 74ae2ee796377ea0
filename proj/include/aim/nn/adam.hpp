#pragma once

#include <cmath>

#include "aim/nn/mlp.hpp"

namespace aim::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
};

/// Adam with bias correction. Moments are zero-initialized and lazily shaped on the
/// first step.
template <class T>
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  long step_count() const { return t_; }
  const Params<T>& first_moment() const { return m_; }
  const Params<T>& second_moment() const { return v_; }

  /// Applies one update in place. Throws NumericError and leaves `params` untouched
  /// when any gradient entry is non-finite.
  void step(Params<T>& params, const Params<T>& grads) {
    if (params.size() != grads.size()) throw InvalidArgument("adam: layer count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].weight.rows() != grads[i].weight.rows() ||
          params[i].weight.cols() != grads[i].weight.cols() ||
          params[i].bias.size() != grads[i].bias.size()) {
        throw InvalidArgument("adam: gradient shape mismatch");
      }
    }
    if (!all_finite(grads)) throw NumericError("adam: non-finite gradient");
    if (m_.empty()) {
      m_ = zeros_like(params);
      v_ = zeros_like(params);
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(cfg_.beta1);
    const T b2 = static_cast<T>(cfg_.beta2);
    const T step_size = static_cast<T>(cfg_.lr / bc1);
    const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
    const T eps = static_cast<T>(cfg_.eps_hat);
    auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
      m = b1 * m + (T(1) - b1) * g;
      v = b2 * v + (T(1) - b2) * g.cwiseProduct(g);
      p.array() -= step_size * m.array() / ((v.array().sqrt() * inv_sqrt_bc2) + eps);
    };
    for (std::size_t i = 0; i < params.size(); ++i) {
      update(params[i].weight, m_[i].weight, v_[i].weight, grads[i].weight);
      update(params[i].bias, m_[i].bias, v_[i].bias, grads[i].bias);
    }
  }

 private:
  AdamConfig cfg_;
  Params<T> m_;
  Params<T> v_;
  long t_ = 0;
};

/// Online network plus a delayed copy that only moves through `polyak_update`.
template <class T>
struct TargetPair {
  Mlp<T> online;
  Mlp<T> target;
  double tau = 0.005;

  TargetPair() = default;
  TargetPair(Mlp<T> net, double tau_) : online(net), target(std::move(net)), tau(tau_) {
    if (!(tau > 0.0 && tau <= 1.0)) throw InvalidArgument("tau must lie in (0, 1]");
  }

  /// target <- (1 - tau) target + tau online
  void polyak_update() {
    auto& tp = target.params();
    const auto& op = online.params();
    const T keep = static_cast<T>(1.0 - tau);
    const T take = static_cast<T>(tau);
    for (std::size_t i = 0; i < tp.size(); ++i) {
      tp[i].weight = keep * tp[i].weight + take * op[i].weight;
      tp[i].bias = keep * tp[i].bias + take * op[i].bias;
    }
  }
};

}  // namespace aim::nn
