#pragma once

#include <array>
#include <ostream>
#include <vector>

#include <json.hpp>

#include "citylight/sim/world.hpp"

namespace citylight::obs {

inline constexpr int kSlots = 4;
inline constexpr int kFeaturesPerSlot = 3;
inline constexpr int kObsSize = kSlots * kFeaturesPerSlot;
inline constexpr double kPad = -1.0;

/// Slot-major triples (queue_count, passing_flag, lane_count). Absent slots
/// hold (-1, -1, -1) and are masked out.
struct PhaseObservation {
  std::array<double, kObsSize> values{};
  std::array<bool, kSlots> action_mask{};

  double queue(int slot) const { return values[static_cast<std::size_t>(slot * 3)]; }
  double passing(int slot) const { return values[static_cast<std::size_t>(slot * 3 + 1)]; }
  double lanes(int slot) const { return values[static_cast<std::size_t>(slot * 3 + 2)]; }
  bool operator==(const PhaseObservation&) const = default;
};

struct NeighborEntry {
  NodeId node = 0;
  PhaseObservation obs;
  int relation_s = 0;
  Connectivity connectivity;
  Compass approach_class = Compass::N;
  bool operator==(const NeighborEntry& o) const {
    return node == o.node && obs == o.obs && relation_s == o.relation_s &&
           connectivity.distance_m == o.connectivity.distance_m &&
           connectivity.connecting_lane_count == o.connectivity.connecting_lane_count &&
           approach_class == o.approach_class;
  }
};

/// Ego observation plus one-hop neighbors split into the two competing
/// groups, each ordered N < E < S < W.
struct NeighborContext {
  NodeId node = 0;
  PhaseObservation ego;
  std::array<std::vector<NeighborEntry>, 2> groups;
  bool operator==(const NeighborContext&) const = default;
};

inline PhaseObservation observe(const sim::World& world, std::size_t intersection) {
  const auto& isec = world.network().intersections().at(intersection);
  const auto queues = world.queue_counts(intersection);
  const auto& sig = world.signal(intersection);
  PhaseObservation o;
  for (int s = 0; s < kSlots; ++s) {
    const auto base = static_cast<std::size_t>(s * kFeaturesPerSlot);
    if (!isec.phases[static_cast<std::size_t>(s)].present) {
      o.values[base] = o.values[base + 1] = o.values[base + 2] = kPad;
      o.action_mask[static_cast<std::size_t>(s)] = false;
      continue;
    }
    o.values[base] = queues[static_cast<std::size_t>(s)];
    o.values[base + 1] = (sig.last_passing_slot && *sig.last_passing_slot == s) ? 1.0 : 0.0;
    o.values[base + 2] = static_cast<double>(world.slot_lanes(intersection, s).size());
    o.action_mask[static_cast<std::size_t>(s)] = true;
  }
  return o;
}

inline NeighborContext build_context(const sim::World& world, std::size_t intersection) {
  const auto& net = world.network();
  NeighborContext ctx;
  ctx.node = net.intersections().at(intersection).node_id;
  ctx.ego = observe(world, intersection);
  for (const NeighborLink& link : net.neighbors_of(intersection)) {
    NeighborEntry e;
    e.node = link.neighbor;
    e.obs = observe(world, link.neighbor_index);
    e.relation_s = link.relation_s;
    e.connectivity = link.connectivity;
    e.approach_class = link.approach_class;
    ctx.groups[static_cast<std::size_t>(link.group)].push_back(e);
  }
  return ctx;
}

inline nlohmann::json to_json(const PhaseObservation& o) {
  return {{"values", o.values}, {"mask", o.action_mask}};
}

/// One JSON-lines record for the observation dump.
inline nlohmann::json context_record(const NeighborContext& ctx, int decision_step, double time_s) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : ctx.groups) {
    nlohmann::json members = nlohmann::json::array();
    for (const auto& e : g) {
      members.push_back({{"node", e.node},
                         {"approach", std::string(to_string(e.approach_class))},
                         {"relation_s", e.relation_s},
                         {"distance_m", e.connectivity.distance_m},
                         {"lane_count", e.connectivity.connecting_lane_count},
                         {"obs", to_json(e.obs)}});
    }
    groups.push_back(members);
  }
  return {{"step", decision_step}, {"time_s", time_s}, {"node", ctx.node}, {"ego", to_json(ctx.ego)}, {"groups", groups}};
}

/// Appends one record per intersection to a JSON-lines stream.
inline void dump_observations(std::ostream& out, const sim::World& world, int decision_step) {
  for (std::size_t i = 0; i < world.network().intersections().size(); ++i) {
    out << context_record(build_context(world, i), decision_step, world.time_s()).dump() << '\n';
  }
}

}  // namespace citylight::obs
