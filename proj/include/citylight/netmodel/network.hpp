#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "citylight/netmodel/compass.hpp"
#include "citylight/netmodel/types.hpp"

namespace citylight {

/// Canonical phase slots of an intersection: slot 0 is a going-straight phase,
/// slot 1 the turning-left phase on the same incoming axis, slots 2 and 3 the
/// straight/left pair on the orthogonal axis. When both straight phases exist
/// the axis holding the lower compass sector (N < E < S < W) goes first.
///
/// The result depends only on the intersection's movements, so reindexing an
/// already reindexed intersection returns the same slots.
inline std::array<Phase, 4> reindex_phases(const Intersection& isec,
                                           std::span<const Movement> movements) {
  auto collect = [&](Turn kind, Axis axis) {
    std::vector<std::size_t> out;
    for (std::size_t m : isec.movements) {
      const Movement& mv = movements[m];
      if (mv.kind == kind && axis_of(mv.approach) == axis) out.push_back(m);
    }
    std::sort(out.begin(), out.end(), [&](std::size_t a, std::size_t b) {
      return static_cast<int>(movements[a].approach) < static_cast<int>(movements[b].approach);
    });
    return out;
  };

  const std::array<Axis, 2> axes{Axis::NorthSouth, Axis::EastWest};
  std::optional<Axis> primary;
  int best_sector = 99;
  for (Axis axis : axes) {
    const auto straight = collect(Turn::Straight, axis);
    if (straight.empty()) continue;
    const int lowest = static_cast<int>(movements[straight.front()].approach);
    if (lowest < best_sector) {
      best_sector = lowest;
      primary = axis;
    }
  }
  const Axis first = primary.value_or(Axis::NorthSouth);
  const Axis second = other_axis(first);

  std::array<Phase, 4> phases;
  const std::array<std::pair<Turn, Axis>, 4> layout{
      std::pair{Turn::Straight, first}, std::pair{Turn::Left, first},
      std::pair{Turn::Straight, second}, std::pair{Turn::Left, second}};
  for (int slot = 0; slot < 4; ++slot) {
    Phase& p = phases[static_cast<std::size_t>(slot)];
    p.slot = slot;
    p.kind = layout[static_cast<std::size_t>(slot)].first;
    p.axis = layout[static_cast<std::size_t>(slot)].second;
    p.movements = collect(p.kind, p.axis);
    p.present = !p.movements.empty();
  }
  return phases;
}

/// Immutable road graph with derived intersections, phases and neighbor links.
class RoadNetwork {
 public:
  static RoadNetwork build(std::vector<Node> nodes, std::vector<Road> roads) {
    RoadNetwork net;
    net.nodes_ = std::move(nodes);
    net.roads_ = std::move(roads);
    net.index_and_validate();
    net.derive_intersections();
    net.derive_neighbor_links();
    return net;
  }

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Road>& roads() const { return roads_; }
  const std::vector<Movement>& movements() const { return movements_; }
  const std::vector<Intersection>& intersections() const { return intersections_; }
  const std::vector<NeighborLink>& neighbor_links() const { return links_; }

  /// Links of one intersection, ordered by approach class N < E < S < W.
  std::span<const NeighborLink> neighbors_of(std::size_t intersection) const {
    const auto [begin, end] = link_ranges_[intersection];
    return std::span<const NeighborLink>(links_).subspan(begin, end - begin);
  }

  std::optional<std::size_t> node_index(NodeId id) const { return lookup(node_index_, id); }
  std::optional<std::size_t> road_index(RoadId id) const { return lookup(road_index_, id); }

  const std::vector<std::size_t>& incoming(std::size_t node) const { return incoming_[node]; }
  const std::vector<std::size_t>& outgoing(std::size_t node) const { return outgoing_[node]; }

  std::size_t road_from(std::size_t road) const { return road_from_[road]; }
  std::size_t road_to(std::size_t road) const { return road_to_[road]; }

  /// Intersection index for a node, if the node is signalized.
  std::optional<std::size_t> intersection_at(std::size_t node) const {
    const int i = node_intersection_[node];
    return i < 0 ? std::nullopt : std::optional<std::size_t>(static_cast<std::size_t>(i));
  }

  std::optional<std::size_t> movement_between(std::size_t in_road, std::size_t out_road) const {
    for (const auto& [out, m] : continuations_[in_road]) {
      if (out == out_road) return m;
    }
    return std::nullopt;
  }

  /// Roads a vehicle on `in_road` may continue onto (no U-turns).
  std::vector<std::size_t> successors(std::size_t in_road) const {
    std::vector<std::size_t> out;
    const std::size_t node = road_to_[in_road];
    if (node_intersection_[node] >= 0) {
      for (const auto& [r, m] : continuations_[in_road]) out.push_back(r);
      return out;
    }
    for (std::size_t r : outgoing_[node]) {
      if (road_to_[r] != road_from_[in_road]) out.push_back(r);
    }
    return out;
  }

  bool can_continue(std::size_t in_road, std::size_t out_road) const {
    if (road_to_[in_road] != road_from_[out_road]) return false;
    if (node_intersection_[road_to_[in_road]] >= 0) return movement_between(in_road, out_road).has_value();
    return road_to_[out_road] != road_from_[in_road];
  }

  /// True when `lane` of `road` may be used to continue onto `next` (any lane
  /// serves the end of a route and continuations through unsignalized nodes).
  bool lane_serves(std::size_t road, int lane, std::optional<std::size_t> next) const {
    if (!next) return true;
    const auto m = movement_between(road, *next);
    if (!m) return node_intersection_[road_to_[road]] < 0;
    const auto& lanes = movements_[*m].lanes;
    return std::find(lanes.begin(), lanes.end(), lane) != lanes.end();
  }

  /// Gating slot for the continuation, or -1 when ungated.
  int gating_slot(std::size_t in_road, std::size_t out_road) const {
    const auto m = movement_between(in_road, out_road);
    return m ? movements_[*m].slot : -1;
  }

  /// Distinct in-road lanes serving a phase slot, as (road, lane) pairs.
  std::vector<std::pair<std::size_t, int>> slot_lanes(std::size_t intersection, int slot) const {
    std::vector<std::pair<std::size_t, int>> out;
    for (std::size_t m : intersections_[intersection].phases[static_cast<std::size_t>(slot)].movements) {
      for (int lane : movements_[m].lanes) out.emplace_back(movements_[m].in_road, lane);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

 private:
  template <class Map, class Key>
  static std::optional<std::size_t> lookup(const Map& m, Key k) {
    const auto it = m.find(k);
    return it == m.end() ? std::nullopt : std::optional<std::size_t>(it->second);
  }

  void index_and_validate() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Node& n = nodes_[i];
      if (!std::isfinite(n.x) || !std::isfinite(n.y)) {
        throw ValidationError("node " + std::to_string(n.id) + ": non-finite coordinates");
      }
      if (!node_index_.emplace(n.id, i).second) {
        throw ValidationError("node " + std::to_string(n.id) + ": duplicate id");
      }
    }
    incoming_.assign(nodes_.size(), {});
    outgoing_.assign(nodes_.size(), {});
    for (std::size_t i = 0; i < roads_.size(); ++i) {
      Road& r = roads_[i];
      const std::string tag = "road " + std::to_string(r.id);
      if (!road_index_.emplace(r.id, i).second) throw ValidationError(tag + ": duplicate id");
      const auto from = node_index(r.from_node);
      const auto to = node_index(r.to_node);
      if (!from) throw ValidationError(tag + ": unknown from node " + std::to_string(r.from_node));
      if (!to) throw ValidationError(tag + ": unknown to node " + std::to_string(r.to_node));
      if (*from == *to) throw ValidationError(tag + ": from_node equals to_node");
      if (!(r.length_m > 0.0) || !std::isfinite(r.length_m)) throw ValidationError(tag + ": length_m must be > 0");
      if (!(r.speed_limit_mps > 0.0) || !std::isfinite(r.speed_limit_mps)) {
        throw ValidationError(tag + ": speed_limit_mps must be > 0");
      }
      if (r.lanes.empty()) throw ValidationError(tag + ": needs at least one lane");
      for (std::size_t l = 0; l < r.lanes.size(); ++l) {
        r.lanes[l].index = static_cast<int>(l);
        if (r.lanes[l].allowed_movements.empty()) {
          throw ValidationError(tag + ": lane " + std::to_string(l) + " has no movements");
        }
      }
      road_from_.push_back(*from);
      road_to_.push_back(*to);
      outgoing_[*from].push_back(i);
      incoming_[*to].push_back(i);
    }
  }

  double bearing_to(std::size_t from_node, std::size_t to_node) const {
    const Node& a = nodes_[from_node];
    const Node& b = nodes_[to_node];
    return bearing_deg(b.x - a.x, b.y - a.y);
  }

  void derive_intersections() {
    node_intersection_.assign(nodes_.size(), -1);
    continuations_.assign(roads_.size(), {});
    for (std::size_t n = 0; n < nodes_.size(); ++n) {
      const auto& in = incoming_[n];
      if (in.size() < 3) continue;
      const std::string tag = "intersection " + std::to_string(nodes_[n].id);
      if (in.size() > 4) throw ValidationError(tag + ": more than 4 approaches");
      if (outgoing_[n].size() > 4) throw ValidationError(tag + ": more than 4 exits");

      Intersection isec;
      isec.node_id = nodes_[n].id;
      isec.node = n;
      isec.arm_count = static_cast<int>(in.size());

      std::vector<ApproachGeometry> approach_geo;
      for (std::size_t r : in) approach_geo.push_back({static_cast<RoadId>(r), bearing_to(n, road_from_[r])});
      std::vector<ApproachGeometry> exit_geo;
      for (std::size_t r : outgoing_[n]) exit_geo.push_back({static_cast<RoadId>(r), bearing_to(n, road_to_[r])});
      const auto approaches = classify_approaches(approach_geo, tag);
      const auto exits = classify_approaches(exit_geo, tag);
      for (std::size_t s = 0; s < 4; ++s) {
        if (approaches[s]) isec.approaches[s] = static_cast<std::size_t>(*approaches[s]);
        if (exits[s]) isec.exits[s] = static_cast<std::size_t>(*exits[s]);
      }

      for (Compass from : kCompassOrder) {
        const auto in_road = isec.approach(from);
        if (!in_road) continue;
        for (Compass to : kCompassOrder) {
          const auto out_road = isec.exit(to);
          if (!out_road) continue;
          const auto turn = turn_between(from, to);
          if (!turn) continue;
          Movement mv;
          mv.in_road = *in_road;
          mv.out_road = *out_road;
          mv.kind = *turn;
          mv.approach = from;
          for (const Lane& lane : roads_[*in_road].lanes) {
            if (lane.allowed_movements.contains(*turn)) mv.lanes.push_back(lane.index);
          }
          if (mv.lanes.empty()) continue;
          isec.movements.push_back(movements_.size());
          continuations_[*in_road].emplace_back(*out_road, movements_.size());
          movements_.push_back(std::move(mv));
        }
      }

      isec.phases = reindex_phases(isec, movements_);
      const int present = static_cast<int>(std::count_if(isec.phases.begin(), isec.phases.end(),
                                                          [](const Phase& p) { return p.present; }));
      if (present != isec.arm_count) {
        throw ValidationError(tag + ": " + std::to_string(present) + " present phases for " +
                              std::to_string(isec.arm_count) + " arms");
      }
      if (!isec.phases[0].present) throw ValidationError(tag + ": no going-straight phase");
      for (const Phase& p : isec.phases) {
        for (std::size_t m : p.movements) movements_[m].slot = p.slot;
      }
      node_intersection_[n] = static_cast<int>(intersections_.size());
      intersections_.push_back(std::move(isec));
    }
  }

  std::optional<Compass> sector_at(const Intersection& isec, std::size_t road) const {
    for (Compass c : kCompassOrder) {
      if (isec.approach(c) == road || isec.exit(c) == road) return c;
    }
    return std::nullopt;
  }

  void derive_neighbor_links() {
    link_ranges_.assign(intersections_.size(), {0, 0});
    for (std::size_t i = 0; i < intersections_.size(); ++i) {
      const Intersection& ego = intersections_[i];
      struct Acc {
        std::vector<std::size_t> toward, away;
      };
      std::map<std::size_t, Acc> by_neighbor;  // keyed by neighbor intersection
      for (std::size_t r : incoming_[ego.node]) {
        if (auto j = intersection_at(road_from_[r]); j && *j != i) by_neighbor[*j].toward.push_back(r);
      }
      for (std::size_t r : outgoing_[ego.node]) {
        if (auto j = intersection_at(road_to_[r]); j && *j != i) by_neighbor[*j].away.push_back(r);
      }

      const std::size_t begin = links_.size();
      for (const auto& [j, acc] : by_neighbor) {
        const auto& roads = acc.toward.empty() ? acc.away : acc.toward;
        NeighborLink link;
        link.ego = ego.node_id;
        link.neighbor = intersections_[j].node_id;
        link.ego_index = i;
        link.neighbor_index = j;
        link.connectivity.distance_m = std::numeric_limits<double>::infinity();
        for (std::size_t r : roads) {
          link.connectivity.distance_m = std::min(link.connectivity.distance_m, roads_[r].length_m);
          link.connectivity.connecting_lane_count += static_cast<int>(roads_[r].lanes.size());
        }
        link.approach_class = *sector_at(ego, roads.front());
        link.group = axis_of(link.approach_class) == ego.primary_axis() ? 0 : 1;
        link.relation_s = ego.primary_axis() == intersections_[j].primary_axis() ? 0 : 1;
        links_.push_back(link);
      }
      std::sort(links_.begin() + static_cast<std::ptrdiff_t>(begin), links_.end(),
                [](const NeighborLink& a, const NeighborLink& b) {
                  return static_cast<int>(a.approach_class) < static_cast<int>(b.approach_class);
                });
      link_ranges_[i] = {begin, links_.size()};
    }
  }

  std::vector<Node> nodes_;
  std::vector<Road> roads_;
  std::vector<Movement> movements_;
  std::vector<Intersection> intersections_;
  std::vector<NeighborLink> links_;
  std::vector<std::pair<std::size_t, std::size_t>> link_ranges_;

  std::unordered_map<NodeId, std::size_t> node_index_;
  std::unordered_map<RoadId, std::size_t> road_index_;
  std::vector<std::size_t> road_from_, road_to_;
  std::vector<std::vector<std::size_t>> incoming_, outgoing_;
  std::vector<int> node_intersection_;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> continuations_;  // (out road, movement)
};

}  // namespace citylight
