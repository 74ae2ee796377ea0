#pragma once

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "aim/harness/experiment.hpp"

namespace aim::harness {

/// Flat key/value view of an INI-style config file. Keys inside a `[section]` are
/// prefixed with `section.`; lists are comma separated.
using ConfigValues = std::map<std::string, std::string>;

inline ConfigValues parse_config(std::istream& in) {
  ConfigValues out;
  for (const auto& item : CLI::ConfigINI().from_config(in)) {
    if (item.name == "++" || item.name == "--") continue;
    std::string key;
    for (const auto& p : item.parents) {
      if (p != "default") key += p + ".";
    }
    key += item.name;
    std::string value;
    for (std::size_t i = 0; i < item.inputs.size(); ++i) value += (i ? "," : "") + item.inputs[i];
    out[key] = value;
  }
  return out;
}

inline ConfigValues load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read config file: " + path);
  return parse_config(in);
}

namespace detail {

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw InvalidArgument("config key " + key + ": not a number: " + v);
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw InvalidArgument("config key " + key + ": not a boolean: " + v);
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(parse_number<int>(key, cell));
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;

template <class M>
Setter field(M ExperimentConfig::*member) {
  return [member](ExperimentConfig& x, const std::string& k, const std::string& v) {
    using T = std::remove_reference_t<decltype(x.*member)>;
    if constexpr (std::is_same_v<T, bool>) {
      x.*member = parse_bool(k, v);
    } else {
      x.*member = parse_number<T>(k, v);
    }
  };
}

template <class S, class M>
Setter nested(S ExperimentConfig::*outer, M S::*member) {
  return [outer, member](ExperimentConfig& x, const std::string& k, const std::string& v) {
    using T = std::remove_reference_t<decltype((x.*outer).*member)>;
    if constexpr (std::is_same_v<T, bool>) {
      (x.*outer).*member = parse_bool(k, v);
    } else {
      (x.*outer).*member = parse_number<T>(k, v);
    }
  };
}

template <class S, class M>
Setter env_field(S worlds::EnvParams::*which, M S::*member) {
  return [which, member](ExperimentConfig& x, const std::string& k, const std::string& v) {
    using T = std::remove_reference_t<decltype((x.env_params.*which).*member)>;
    if constexpr (std::is_same_v<T, bool>) {
      (x.env_params.*which).*member = parse_bool(k, v);
    } else {
      (x.env_params.*which).*member = parse_number<T>(k, v);
    }
  };
}

inline const std::map<std::string, Setter>& setters() {
  using X = ExperimentConfig;
  using worlds::CorridorParams;
  using worlds::EnvParams;
  using worlds::FourRoomsParams;
  static const std::map<std::string, Setter> table{
      {"gamma", nested(&X::aim, &AimConfig::gamma)},
      {"lr", nested(&X::aim, &AimConfig::lr)},
      {"batch_size", nested(&X::aim, &AimConfig::batch_size)},
      {"grad_steps_per_iter", nested(&X::aim, &AimConfig::grad_steps_per_iter)},
      {"delta", nested(&X::aim, &AimConfig::delta)},
      {"warmup_trajectories", nested(&X::aim, &AimConfig::warmup_trajectories)},
      {"expert_budget", nested(&X::aim, &AimConfig::expert_budget)},
      {"seed", nested(&X::aim, &AimConfig::seed)},
      {"hidden", [](X& x, const std::string& k, const std::string& v) { x.aim.hidden = parse_int_list(k, v); }},
      {"tau", nested(&X::aim, &AimConfig::tau)},
      {"warmup_epsilon", nested(&X::aim, &AimConfig::warmup_epsilon)},
      {"q_init_steps", nested(&X::aim, &AimConfig::q_init_steps)},
      {"beta_sample", nested(&X::aim, &AimConfig::beta_sample)},
      {"box_samples", nested(&X::aim, &AimConfig::box_samples)},
      {"bc_steps_per_expert_step", nested(&X::aim, &AimConfig::bc_steps_per_expert_step)},
      {"bc_batch_size", nested(&X::aim, &AimConfig::bc_batch_size)},
      {"total_step_cap", nested(&X::aim, &AimConfig::total_step_cap)},
      {"q_update_during_expert", nested(&X::aim, &AimConfig::q_update_during_expert)},
      {"recompute_epsilon", nested(&X::aim, &AimConfig::recompute_epsilon)},
      {"clip_bootstrap", nested(&X::aim, &AimConfig::clip_bootstrap)},

      {"seeds", field(&X::seeds)},
      {"first_seed", field(&X::first_seed)},
      {"eval_every", field(&X::eval_every)},
      {"eval_rollouts", field(&X::eval_rollouts)},
      {"bc_train_steps", field(&X::bc_train_steps)},

      {"ensemble.members", nested(&X::ensemble, &baselines::EnsembleOptions::members)},
      {"ensemble.bc_warmup_steps", nested(&X::ensemble, &baselines::EnsembleOptions::bc_warmup_steps)},
      {"ensemble.threshold", nested(&X::ensemble, &baselines::EnsembleOptions::threshold)},
      {"thrifty.members",
       [](X& x, const std::string& k, const std::string& v) { x.thrifty.ensemble.members = parse_number<int>(k, v); }},
      {"thrifty.bc_warmup_steps",
       [](X& x, const std::string& k, const std::string& v) {
         x.thrifty.ensemble.bc_warmup_steps = parse_number<int>(k, v);
       }},
      {"thrifty.novelty_delta", nested(&X::thrifty, &baselines::ThriftyOptions::novelty_delta)},
      {"thrifty.risk_delta", nested(&X::thrifty, &baselines::ThriftyOptions::risk_delta)},
      {"thrifty.refresh_every", nested(&X::thrifty, &baselines::ThriftyOptions::refresh_every)},

      {"fourrooms.size", env_field(&EnvParams::four_rooms, &FourRoomsParams::size)},
      {"fourrooms.max_steps", env_field(&EnvParams::four_rooms, &FourRoomsParams::max_steps)},
      {"fourrooms.goal_compass", env_field(&EnvParams::four_rooms, &FourRoomsParams::goal_compass)},
      {"fourrooms.door_compass", env_field(&EnvParams::four_rooms, &FourRoomsParams::door_compass)},

      {"corridor.goal_x", env_field(&EnvParams::corridor, &CorridorParams::goal_x)},
      {"corridor.lane_halfwidth", env_field(&EnvParams::corridor, &CorridorParams::lane_halfwidth)},
      {"corridor.min_cones", env_field(&EnvParams::corridor, &CorridorParams::min_cones)},
      {"corridor.max_cones", env_field(&EnvParams::corridor, &CorridorParams::max_cones)},
      {"corridor.cone_zone_begin", env_field(&EnvParams::corridor, &CorridorParams::cone_zone_begin)},
      {"corridor.cone_zone_end", env_field(&EnvParams::corridor, &CorridorParams::cone_zone_end)},
      {"corridor.roadblock_begin", env_field(&EnvParams::corridor, &CorridorParams::roadblock_begin)},
      {"corridor.roadblock_end", env_field(&EnvParams::corridor, &CorridorParams::roadblock_end)},
      {"corridor.roadblock_gap", env_field(&EnvParams::corridor, &CorridorParams::roadblock_gap)},
      {"corridor.cone_radius", env_field(&EnvParams::corridor, &CorridorParams::cone_radius)},
      {"corridor.collision_radius", env_field(&EnvParams::corridor, &CorridorParams::collision_radius)},
      {"corridor.heading_rate", env_field(&EnvParams::corridor, &CorridorParams::heading_rate)},
      {"corridor.max_speed", env_field(&EnvParams::corridor, &CorridorParams::max_speed)},
      {"corridor.accel", env_field(&EnvParams::corridor, &CorridorParams::accel)},
      {"corridor.lidar_rays", env_field(&EnvParams::corridor, &CorridorParams::lidar_rays)},
      {"corridor.lidar_range", env_field(&EnvParams::corridor, &CorridorParams::lidar_range)},
      {"corridor.spawn_lateral", env_field(&EnvParams::corridor, &CorridorParams::spawn_lateral)},
      {"corridor.spawn_heading", env_field(&EnvParams::corridor, &CorridorParams::spawn_heading)},
      {"corridor.max_steps", env_field(&EnvParams::corridor, &CorridorParams::max_steps)},
  };
  return table;
}

}  // namespace detail

/// Applies one key. Unknown keys and malformed values throw InvalidArgument.
inline void apply_config_value(ExperimentConfig& x, const std::string& key, const std::string& value) {
  const auto& table = detail::setters();
  const auto it = table.find(key);
  if (it == table.end()) throw InvalidArgument("unknown config key: " + key);
  it->second(x, key, value);
}

/// Applies every key, then validates the result.
inline void apply_config(ExperimentConfig& x, const ConfigValues& values) {
  for (const auto& [k, v] : values) apply_config_value(x, k, v);
  x.aim.validate();
  if (x.seeds < 1) throw InvalidArgument("seeds must be at least 1");
  if (x.eval_every < 1 || x.eval_rollouts < 1) throw InvalidArgument("eval_every and eval_rollouts must be positive");
}

inline std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : detail::setters()) out.push_back(k);
  return out;
}

}  // namespace aim::harness
