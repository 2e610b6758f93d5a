#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include "citylight/harness/scenario.hpp"
#include "citylight/netmodel/network.hpp"
#include "citylight/sim/demand.hpp"

namespace citylight::testing {

// Road ids used by make_cross: arm c (0=N..3=W) has in-road 10+c and out-road 20+c.
inline RoadId in_road_id(Compass c) { return 10 + static_cast<int>(c); }
inline RoadId out_road_id(Compass c) { return 20 + static_cast<int>(c); }

struct CrossSpec {
  std::array<bool, 4> arms{true, true, true, true};
  std::array<double, 4> arm_bearing_deg{0.0, 90.0, 180.0, 270.0};
  std::array<int, 4> lanes{2, 2, 2, 2};
  std::array<double, 4> in_length_m{200.0, 200.0, 200.0, 200.0};
  std::array<double, 4> out_length_m{200.0, 200.0, 200.0, 200.0};
  double speed_limit_mps = 13.89;
};

/// One signalized node (id 1, at the origin) with up to four arms. The far
/// node of arm c has id 2+c and lies at distance 200 m along its bearing.
struct CrossNet {
  std::vector<Node> nodes;
  std::vector<Road> roads;
  RoadNetwork build() const { return RoadNetwork::build(nodes, roads); }
  std::shared_ptr<const RoadNetwork> shared() const { return std::make_shared<const RoadNetwork>(build()); }
};

inline CrossNet make_cross(const CrossSpec& s = {}) {
  CrossNet n;
  n.nodes.push_back({1, 0.0, 0.0});
  for (Compass c : kCompassOrder) {
    const auto i = static_cast<std::size_t>(c);
    if (!s.arms[i]) continue;
    const double b = s.arm_bearing_deg[i] * std::numbers::pi / 180.0;
    const NodeId far = 2 + static_cast<int>(c);
    n.nodes.push_back({far, 200.0 * std::sin(b), 200.0 * std::cos(b)});
    n.roads.push_back({in_road_id(c), far, 1, s.in_length_m[i], s.speed_limit_mps, harness::lane_layout(s.lanes[i])});
    n.roads.push_back({out_road_id(c), 1, far, s.out_length_m[i], s.speed_limit_mps, harness::lane_layout(s.lanes[i])});
  }
  return n;
}

/// A straight corridor of `lengths.size()` roads through unsignalized nodes,
/// road ids 1..n, heading east.
inline CrossNet make_corridor(const std::vector<double>& lengths, const std::vector<double>& speeds, int lanes = 1) {
  CrossNet n;
  double x = 0.0;
  n.nodes.push_back({1, x, 0.0});
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    x += lengths[i];
    n.nodes.push_back({static_cast<NodeId>(i + 2), x, 0.0});
    std::vector<Lane> ls;
    for (int l = 0; l < lanes; ++l) ls.push_back({l, {Turn::Straight}});
    n.roads.push_back({static_cast<RoadId>(i + 1), static_cast<NodeId>(i + 1), static_cast<NodeId>(i + 2), lengths[i],
                       speeds[i], ls});
  }
  return n;
}

inline harness::ScenarioSpec small_grid_spec(int rows, int cols, int trips, std::uint64_t seed,
                                             double three_arm_fraction = 0.0) {
  harness::ScenarioSpec s;
  s.rows = rows;
  s.cols = cols;
  s.trip_count = trips;
  s.seed = seed;
  s.three_arm_fraction = three_arm_fraction;
  return s;
}

/// Chord-crossing oracle for movement paths. Arm c sits at compass angle 90·c;
/// in right-hand traffic the inbound lane is just counter-clockwise of the arm
/// and the outbound lane just clockwise. Two paths conflict when their chords
/// properly interleave on the circle, or when they merge into the same exit.
inline bool paths_conflict(Compass from_a, Compass to_a, Compass from_b, Compass to_b) {
  constexpr double d = 10.0;
  auto in_pt = [](Compass c) { return std::fmod(90.0 * static_cast<int>(c) - d + 360.0, 360.0); };
  auto out_pt = [](Compass c) { return std::fmod(90.0 * static_cast<int>(c) + d, 360.0); };
  if (to_a == to_b && from_a != from_b) return true;
  const double a0 = in_pt(from_a), a1 = out_pt(to_a), b0 = in_pt(from_b), b1 = out_pt(to_b);
  auto inside = [](double lo, double hi, double x) {
    const double span = std::fmod(hi - lo + 360.0, 360.0);
    const double off = std::fmod(x - lo + 360.0, 360.0);
    return off > 0.0 && off < span;
  };
  const double eps = 1e-9;
  if (std::abs(a0 - b0) < eps || std::abs(a0 - b1) < eps || std::abs(a1 - b0) < eps || std::abs(a1 - b1) < eps) return false;
  return inside(a0, a1, b0) != inside(a0, a1, b1);
}

}  // namespace citylight::testing
