#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>

#include "citylight/netmodel/types.hpp"

namespace citylight {

/// Bearing in degrees clockwise from north of the vector (dx, dy), in [0, 360).
inline double bearing_deg(double dx, double dy) {
  double b = std::atan2(dx, dy) * 180.0 / std::numbers::pi;
  if (b < 0.0) b += 360.0;
  if (b >= 360.0) b -= 360.0;
  return b;
}

/// round(bearing / 90) mod 4, with exact 45° boundaries going to the lower sector.
inline Compass sector_of(double bearing) {
  double b = std::fmod(bearing, 360.0);
  if (b < 0.0) b += 360.0;
  const double r = std::ceil(b / 90.0 - 0.5);
  const int s = static_cast<int>(r) % 4;
  return static_cast<Compass>((s + 4) % 4);
}

struct ApproachGeometry {
  RoadId road = 0;
  double bearing_deg = 0.0;  // from the node toward the road's far end
};

using ApproachMap = std::array<std::optional<RoadId>, 4>;

/// Assigns each road to its compass sector. Throws ValidationError when two
/// roads share a sector.
inline ApproachMap classify_approaches(std::span<const ApproachGeometry> roads,
                                       const std::string& where = "intersection") {
  ApproachMap out;
  for (const auto& r : roads) {
    const auto s = static_cast<std::size_t>(sector_of(r.bearing_deg));
    if (out[s]) {
      throw ValidationError(where + ": roads " + std::to_string(*out[s]) + " and " +
                            std::to_string(r.road) + " both fall in sector " +
                            std::string(to_string(static_cast<Compass>(s))));
    }
    out[s] = r.road;
  }
  return out;
}

/// Turn made by a vehicle arriving from arm `from` and leaving through arm `to`
/// (right-hand traffic). Returns nullopt for a U-turn.
inline std::optional<Turn> turn_between(Compass from, Compass to) {
  switch ((static_cast<int>(to) - static_cast<int>(from) + 4) % 4) {
    case 1: return Turn::Left;
    case 2: return Turn::Straight;
    case 3: return Turn::Right;
    default: return std::nullopt;
  }
}

}  // namespace citylight
