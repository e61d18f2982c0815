#pragma once

#include <string>
#include <string_view>

#include "lkmrl/errors.hpp"

namespace lkmrl {

enum class Role { Car, Pedestrian };

constexpr Role other(Role r) { return r == Role::Car ? Role::Pedestrian : Role::Car; }

inline std::string_view to_string(Role r) { return r == Role::Car ? "car" : "pedestrian"; }

inline Role role_from_string(std::string_view s) {
  if (s == "car") return Role::Car;
  if (s == "pedestrian" || s == "ped") return Role::Pedestrian;
  throw ConfigError("unknown agent role '" + std::string(s) + "'");
}

}  // namespace lkmrl
