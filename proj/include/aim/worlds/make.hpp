#pragma once

#include <memory>

#include "aim/worlds/corridor_drive.hpp"
#include "aim/worlds/four_rooms.hpp"

namespace aim::worlds {

/// Parameters for both environment kinds; only the one matching the kind is used.
struct EnvParams {
  FourRoomsParams four_rooms;
  CorridorParams corridor;
};

inline std::unique_ptr<Environment> make_environment(EnvKind kind, const EnvParams& params = {}) {
  if (kind == EnvKind::FourRooms) return std::make_unique<FourRooms>(params.four_rooms);
  return std::make_unique<CorridorDrive>(params.corridor);
}

inline std::unique_ptr<Environment> make_environment(std::string_view name) {
  return make_environment(env_kind_from_string(name));
}

}  // namespace aim::worlds
