#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "aim/core/transition.hpp"

namespace aim::worlds {

enum class EnvKind { FourRooms, CorridorDrive };

inline std::string_view to_string(EnvKind k) {
  return k == EnvKind::FourRooms ? "fourrooms" : "corridor";
}

inline EnvKind env_kind_from_string(std::string_view s) {
  if (s == "fourrooms") return EnvKind::FourRooms;
  if (s == "corridor") return EnvKind::CorridorDrive;
  throw InvalidArgument("unknown environment: " + std::string(s));
}

/// Common surface of the desk environments. An instance holds one episode at a time
/// and must only be driven from one thread.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual EnvKind kind() const = 0;
  virtual const ActionSpace& action_space() const = 0;
  virtual int observation_size() const = 0;

  /// Starts an episode whose layout is a pure function of `seed`.
  virtual Observation reset(std::uint64_t seed) = 0;
  virtual Observation observe() const = 0;
  /// Advances one step. Throws InvalidState once the episode is done.
  virtual Transition step(const Action& a, Actor actor) = 0;
  virtual bool done() const = 0;

  /// Scripted oracle action for the current state.
  virtual Action expert_action() const = 0;

  /// Fraction of the route covered so far, in [0, 1].
  virtual double route_completion() const = 0;
  /// Top-down render model (cells or geometry) for the session wire format.
  virtual nlohmann::json render_model() const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;

  /// Sharp-turn / hard-brake test on the oracle action. Corridor only.
  virtual bool is_safety_critical() const {
    throw Unsupported("safety-critical states are defined for the corridor only");
  }
  /// Distance from the agent to the closest obstacle. Corridor only.
  virtual double distance_to_nearest_obstacle() const {
    throw Unsupported("obstacle distance is defined for the corridor only");
  }
};

}  // namespace aim::worlds
