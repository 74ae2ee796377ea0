#pragma once

#include <fstream>
#include <string>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "aim/nn/mlp.hpp"

namespace aim::nn {

inline constexpr int kCheckpointVersion = 1;

/// Self-describing JSON document: layer sizes plus row-major weights. Values are written
/// as shortest round-trip decimals so that save/load is bit-exact.
template <class T>
nlohmann::json to_json(const Mlp<T>& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : net.params()) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(layer.weight.size()));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) w.push_back(layer.weight(r, c));
    }
    std::vector<double> b(layer.bias.data(), layer.bias.data() + layer.bias.size());
    layers.push_back({{"weight", w}, {"bias", b}});
  }
  return {{"format", "aim-mlp"},
          {"version", kCheckpointVersion},
          {"scalar", std::is_same_v<T, float> ? "f32" : "f64"},
          {"layer_sizes", net.layer_sizes()},
          {"layers", layers}};
}

template <class T>
Mlp<T> mlp_from_json(const nlohmann::json& j) {
  if (j.at("format").get<std::string>() != "aim-mlp") {
    throw InvalidArgument("not an aim-mlp checkpoint");
  }
  if (j.at("version").get<int>() != kCheckpointVersion) {
    throw InvalidArgument("unsupported checkpoint version");
  }
  auto net = Mlp<T>::zeros(j.at("layer_sizes").get<std::vector<int>>());
  const auto& layers = j.at("layers");
  if (layers.size() != net.params().size()) throw InvalidArgument("checkpoint layer count");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& dst = net.params()[l];
    const auto w = layers[l].at("weight").get<std::vector<double>>();
    const auto b = layers[l].at("bias").get<std::vector<double>>();
    if (w.size() != static_cast<std::size_t>(dst.weight.size()) ||
        b.size() != static_cast<std::size_t>(dst.bias.size())) {
      throw InvalidArgument("checkpoint parameter shape mismatch");
    }
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < dst.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < dst.weight.cols(); ++c) {
        dst.weight(r, c) = static_cast<T>(w[k++]);
      }
    }
    for (Eigen::Index r = 0; r < dst.bias.size(); ++r) dst.bias(r) = static_cast<T>(b[r]);
  }
  return net;
}

template <class T>
void save(const Mlp<T>& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open checkpoint for writing: " + path);
  out << to_json(net).dump() << '\n';
}

template <class T>
Mlp<T> load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open checkpoint: " + path);
  return mlp_from_json<T>(nlohmann::json::parse(in));
}

}  // namespace aim::nn
