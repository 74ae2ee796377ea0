#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "aim/core/errors.hpp"

namespace aim::nn {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Affine layer `z = W a + b`; W is (out x in).
template <class T>
struct Layer {
  Matrix<T> weight;
  Vector<T> bias;
};

/// Parameters and gradients share one layout.
template <class T>
using Params = std::vector<Layer<T>>;

template <class T>
Params<T> zeros_like(const Params<T>& p) {
  Params<T> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    out[i].weight = Matrix<T>::Zero(p[i].weight.rows(), p[i].weight.cols());
    out[i].bias = Vector<T>::Zero(p[i].bias.size());
  }
  return out;
}

template <class T>
void add_into(Params<T>& acc, const Params<T>& g, T scale = T(1)) {
  for (std::size_t i = 0; i < acc.size(); ++i) {
    acc[i].weight += scale * g[i].weight;
    acc[i].bias += scale * g[i].bias;
  }
}

template <class T>
bool all_finite(const Params<T>& p) {
  for (const auto& l : p) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

/// Activations recorded by a batched forward pass; column j belongs to sample j.
template <class T>
struct Tape {
  std::vector<Matrix<T>> activations;  // activations[0] is the input
};

template <class T>
struct Backprop {
  Params<T> grads;
  Matrix<T> input_grad;
};

/// Fully connected network with ReLU on hidden layers and identity output.
template <class T>
class Mlp {
 public:
  Mlp() = default;

  /// Weights and biases uniform in +-1/sqrt(fan_in).
  template <class Rng>
  Mlp(std::vector<int> layer_sizes, Rng& rng) : sizes_(std::move(layer_sizes)) {
    check_sizes();
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const int in = sizes_[l];
      const int out = sizes_[l + 1];
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      std::uniform_real_distribution<double> u(-bound, bound);
      Layer<T> layer{Matrix<T>(out, in), Vector<T>(out)};
      for (int r = 0; r < out; ++r) {
        for (int c = 0; c < in; ++c) layer.weight(r, c) = static_cast<T>(u(rng));
      }
      for (int r = 0; r < out; ++r) layer.bias(r) = static_cast<T>(u(rng));
      layers_.push_back(std::move(layer));
    }
  }

  static Mlp zeros(std::vector<int> layer_sizes) {
    Mlp net;
    net.sizes_ = std::move(layer_sizes);
    net.check_sizes();
    for (std::size_t l = 0; l + 1 < net.sizes_.size(); ++l) {
      net.layers_.push_back(
          {Matrix<T>::Zero(net.sizes_[l + 1], net.sizes_[l]), Vector<T>::Zero(net.sizes_[l + 1])});
    }
    return net;
  }

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  Params<T>& params() { return layers_; }
  const Params<T>& params() const { return layers_; }

  Vector<T> forward(std::span<const T> x) const {
    if (static_cast<int>(x.size()) != input_size()) {
      throw InvalidArgument("mlp input length mismatch");
    }
    Matrix<T> col = Eigen::Map<const Vector<T>>(x.data(), static_cast<Eigen::Index>(x.size()));
    return forward_batch(col).col(0);
  }

  Matrix<T> forward_batch(const Matrix<T>& x) const {
    if (x.rows() != input_size()) throw InvalidArgument("mlp input rows mismatch");
    Matrix<T> a = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Matrix<T> z = layers_[l].weight * a;
      z.colwise() += layers_[l].bias;
      if (l + 1 < layers_.size()) z = z.cwiseMax(T(0));
      a = std::move(z);
    }
    return a;
  }

  Matrix<T> forward_batch(const Matrix<T>& x, Tape<T>& tape) const {
    if (x.rows() != input_size()) throw InvalidArgument("mlp input rows mismatch");
    tape.activations.clear();
    tape.activations.reserve(layers_.size() + 1);
    tape.activations.push_back(x);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Matrix<T> z = layers_[l].weight * tape.activations.back();
      z.colwise() += layers_[l].bias;
      if (l + 1 < layers_.size()) z = z.cwiseMax(T(0));
      tape.activations.push_back(std::move(z));
    }
    return tape.activations.back();
  }

  /// Gradients of sum_j <upstream_j, f(x_j)> with respect to parameters and inputs.
  Backprop<T> backward(const Tape<T>& tape, const Matrix<T>& upstream,
                       bool want_input_grad = false) const {
    if (tape.activations.size() != layers_.size() + 1) {
      throw InvalidArgument("tape does not match network depth");
    }
    const auto& out = tape.activations.back();
    if (upstream.rows() != out.rows() || upstream.cols() != out.cols()) {
      throw InvalidArgument("upstream gradient shape mismatch");
    }
    Backprop<T> result;
    result.grads.resize(layers_.size());
    Matrix<T> delta = upstream;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const auto& a_prev = tape.activations[l];
      result.grads[l].weight.noalias() = delta * a_prev.transpose();
      result.grads[l].bias = delta.rowwise().sum();
      if (l > 0 || want_input_grad) {
        Matrix<T> back = layers_[l].weight.transpose() * delta;
        if (l > 0) {
          // ReLU derivative, using the post-activation (zero where inactive).
          back = (a_prev.array() > T(0)).select(back, T(0));
        }
        delta = std::move(back);
      }
    }
    if (want_input_grad) result.input_grad = std::move(delta);
    return result;
  }

  /// Single-sample form: gradients of <upstream, f(x)>.
  Backprop<T> backward(std::span<const T> x, std::span<const T> upstream) const {
    if (static_cast<int>(x.size()) != input_size()) {
      throw InvalidArgument("mlp input length mismatch");
    }
    if (static_cast<int>(upstream.size()) != output_size()) {
      throw InvalidArgument("upstream length mismatch");
    }
    Tape<T> tape;
    Matrix<T> col = Eigen::Map<const Vector<T>>(x.data(), static_cast<Eigen::Index>(x.size()));
    forward_batch(col, tape);
    Matrix<T> up = Eigen::Map<const Vector<T>>(upstream.data(),
                                               static_cast<Eigen::Index>(upstream.size()));
    return backward(tape, up, true);
  }

 private:
  void check_sizes() const {
    if (sizes_.size() < 2) throw InvalidArgument("mlp needs at least input and output sizes");
    for (int s : sizes_) {
      if (s <= 0) throw InvalidArgument("mlp layer sizes must be positive");
    }
  }

  std::vector<int> sizes_;
  Params<T> layers_;
};

}  // namespace aim::nn
