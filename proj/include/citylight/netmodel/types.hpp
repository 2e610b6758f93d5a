#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace citylight {

using NodeId = std::int64_t;
using RoadId = std::int64_t;

class NetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file: the message names the offending record and field.
class ParseError : public NetworkError {
 public:
  using NetworkError::NetworkError;
};

/// Well-formed input that breaks a network invariant.
class ValidationError : public NetworkError {
 public:
  using NetworkError::NetworkError;
};

enum class Turn : std::uint8_t { Left = 0, Straight = 1, Right = 2 };

inline constexpr std::string_view to_string(Turn t) {
  switch (t) {
    case Turn::Left: return "left";
    case Turn::Straight: return "straight";
    case Turn::Right: return "right";
  }
  return "?";
}

class TurnSet {
 public:
  constexpr TurnSet() = default;
  constexpr TurnSet(std::initializer_list<Turn> turns) {
    for (Turn t : turns) insert(t);
  }

  constexpr void insert(Turn t) { bits_ |= bit(t); }
  constexpr bool contains(Turn t) const { return (bits_ & bit(t)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint8_t bits() const { return bits_; }
  constexpr bool operator==(const TurnSet&) const = default;

 private:
  static constexpr std::uint8_t bit(Turn t) { return std::uint8_t(1u << static_cast<unsigned>(t)); }
  std::uint8_t bits_ = 0;
};

// Compass sectors, clockwise. The class of a road at a node is the side of
// the node the road lies on.
enum class Compass : std::uint8_t { N = 0, E = 1, S = 2, W = 3 };
enum class Axis : std::uint8_t { NorthSouth = 0, EastWest = 1 };

inline constexpr std::array<Compass, 4> kCompassOrder{Compass::N, Compass::E, Compass::S, Compass::W};

inline constexpr Axis axis_of(Compass c) {
  return (static_cast<int>(c) % 2 == 0) ? Axis::NorthSouth : Axis::EastWest;
}

inline constexpr Axis other_axis(Axis a) {
  return a == Axis::NorthSouth ? Axis::EastWest : Axis::NorthSouth;
}

inline constexpr std::string_view to_string(Compass c) {
  constexpr std::array<std::string_view, 4> names{"N", "E", "S", "W"};
  return names[static_cast<std::size_t>(c)];
}

struct Node {
  NodeId id = 0;
  double x = 0.0;
  double y = 0.0;
};

struct Lane {
  int index = 0;  // 0 = leftmost
  TurnSet allowed_movements;
};

struct Road {
  RoadId id = 0;
  NodeId from_node = 0;
  NodeId to_node = 0;
  double length_m = 0.0;
  double speed_limit_mps = 0.0;
  std::vector<Lane> lanes;
};

// Road fields below are indices into RoadNetwork::roads().
struct Movement {
  std::size_t in_road = 0;
  std::size_t out_road = 0;
  Turn kind = Turn::Straight;
  Compass approach = Compass::N;
  std::vector<int> lanes;  // in-road lanes serving this movement
  int slot = -1;           // gating phase slot, -1 for right turns
};

struct Phase {
  int slot = 0;
  Turn kind = Turn::Straight;  // Straight or Left
  Axis axis = Axis::NorthSouth;
  std::vector<std::size_t> movements;  // indices into RoadNetwork::movements()
  bool present = false;
};

struct Intersection {
  NodeId node_id = 0;
  std::size_t node = 0;
  std::array<std::optional<std::size_t>, 4> approaches;  // incoming road per Compass
  std::array<std::optional<std::size_t>, 4> exits;       // outgoing road per Compass
  std::array<Phase, 4> phases;
  int arm_count = 0;
  std::vector<std::size_t> movements;

  const std::optional<std::size_t>& approach(Compass c) const {
    return approaches[static_cast<std::size_t>(c)];
  }
  const std::optional<std::size_t>& exit(Compass c) const {
    return exits[static_cast<std::size_t>(c)];
  }
  Axis primary_axis() const { return phases[0].axis; }
};

struct Connectivity {
  double distance_m = 0.0;
  int connecting_lane_count = 0;
};

struct NeighborLink {
  NodeId ego = 0;
  NodeId neighbor = 0;
  std::size_t ego_index = 0;       // intersection index
  std::size_t neighbor_index = 0;  // intersection index
  int relation_s = 0;
  Connectivity connectivity;
  int group = 0;
  Compass approach_class = Compass::N;
};

}  // namespace citylight
