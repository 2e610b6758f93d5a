#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <random>
#include <stdexcept>
#include <vector>

#include <boost/graph/adjacency_list.hpp>
#include <boost/graph/dijkstra_shortest_paths.hpp>
#include <json.hpp>

#include "citylight/netmodel/network.hpp"
#include "citylight/netmodel/network_io.hpp"
#include "citylight/sim/demand.hpp"

namespace citylight::harness {

struct ScenarioSpec {
  int rows = 4;
  int cols = 4;
  double block_min_m = 200.0;
  double block_max_m = 300.0;
  double three_arm_fraction = 0.0;
  int lanes_min = 2;
  int lanes_max = 3;
  double speed_limit_mps = 13.89;
  double stub_length_m = 200.0;
  int trip_count = 1000;
  double depart_start_s = 0.0;
  double depart_end_s = 2400.0;
  double through_weight = 3.0;  // OD weight of opposite-side border pairs
  std::uint64_t seed = 0;

  void validate() const {
    if (rows < 2 || cols < 2) throw std::invalid_argument("ScenarioSpec: rows and cols must be >= 2");
    if (three_arm_fraction < 0.0 || three_arm_fraction > 1.0) {
      throw std::invalid_argument("ScenarioSpec: three_arm_fraction must be in [0, 1]");
    }
    if (!(block_min_m > 0.0) || block_max_m < block_min_m) throw std::invalid_argument("ScenarioSpec: bad block range");
    if (lanes_min < 1 || lanes_max > 3 || lanes_max < lanes_min) {
      throw std::invalid_argument("ScenarioSpec: lanes must lie in 1..3");
    }
    if (trip_count < 0 || depart_end_s < depart_start_s) throw std::invalid_argument("ScenarioSpec: bad demand");
  }
};

struct Scenario {
  std::vector<Node> nodes;
  std::vector<Road> roads;
  sim::Demand demand;
  std::shared_ptr<const RoadNetwork> network;
  // grid coordinates of each grid node id (stubs excluded)
  std::vector<std::pair<int, int>> grid_cell;  // indexed by node index; (-1,-1) for stubs
};

inline std::vector<Lane> lane_layout(int count) {
  using T = Turn;
  switch (count) {
    case 1: return {{0, {T::Left, T::Straight, T::Right}}};
    case 2: return {{0, {T::Left}}, {1, {T::Straight, T::Right}}};
    default: return {{0, {T::Left}}, {1, {T::Straight}}, {2, {T::Straight, T::Right}}};
  }
}

namespace detail {

// Shortest travel-time routes over the road-to-road continuation graph.
class Router {
 public:
  explicit Router(const RoadNetwork& net) : net_(net), graph_(net.roads().size()) {
    for (std::size_t r = 0; r < net.roads().size(); ++r) {
      for (std::size_t s : net.successors(r)) {
        const Road& next = net.roads()[s];
        boost::add_edge(r, s, next.length_m / next.speed_limit_mps, graph_);
      }
    }
  }

  std::vector<std::size_t> route(std::size_t from, std::size_t to) {
    if (from != cached_source_) {
      const auto n = boost::num_vertices(graph_);
      pred_.assign(n, 0);
      dist_.assign(n, 0.0);
      boost::dijkstra_shortest_paths(
          graph_, from,
          boost::predecessor_map(boost::make_iterator_property_map(pred_.begin(), boost::get(boost::vertex_index, graph_)))
              .distance_map(boost::make_iterator_property_map(dist_.begin(), boost::get(boost::vertex_index, graph_))));
      cached_source_ = from;
    }
    if (dist_[to] == std::numeric_limits<double>::max() || (to != from && pred_[to] == to)) return {};
    std::vector<std::size_t> path{to};
    while (path.back() != from) path.push_back(pred_[path.back()]);
    std::reverse(path.begin(), path.end());
    return path;
  }

 private:
  using Graph = boost::adjacency_list<boost::vecS, boost::vecS, boost::directedS, boost::no_property,
                                      boost::property<boost::edge_weight_t, double>>;
  const RoadNetwork& net_;
  Graph graph_;
  std::size_t cached_source_ = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> pred_;
  std::vector<double> dist_;
};

}  // namespace detail

/// Grid network with boundary stubs, randomized arm removals and lane counts,
/// plus border-to-border trips routed by shortest travel time.
inline Scenario generate_scenario(const ScenarioSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  const int R = spec.rows, C = spec.cols;
  std::vector<double> xs(static_cast<std::size_t>(C), 0.0), ys(static_cast<std::size_t>(R), 0.0);
  for (int c = 1; c < C; ++c) xs[static_cast<std::size_t>(c)] = xs[static_cast<std::size_t>(c - 1)] + uniform(spec.block_min_m, spec.block_max_m);
  for (int r = 1; r < R; ++r) ys[static_cast<std::size_t>(r)] = ys[static_cast<std::size_t>(r - 1)] - uniform(spec.block_min_m, spec.block_max_m);

  Scenario sc;
  auto grid_id = [&](int r, int c) { return static_cast<NodeId>(r * C + c + 1); };
  for (int r = 0; r < R; ++r) {
    for (int c = 0; c < C; ++c) {
      sc.nodes.push_back({grid_id(r, c), xs[static_cast<std::size_t>(c)], ys[static_cast<std::size_t>(r)]});
      sc.grid_cell.emplace_back(r, c);
    }
  }

  // Arms per grid node: N, E, S, W. An arm is either a grid link or a stub.
  constexpr std::array<int, 4> dr{-1, 0, 1, 0};
  constexpr std::array<int, 4> dc{0, 1, 0, -1};
  const auto cell = [&](int r, int c) { return static_cast<std::size_t>(r * C + c); };
  std::vector<std::array<bool, 4>> arm(static_cast<std::size_t>(R * C), {true, true, true, true});
  std::vector<bool> selected(static_cast<std::size_t>(R * C)), dropped(static_cast<std::size_t>(R * C), false);
  for (auto&& s : selected) s = unit(rng) < spec.three_arm_fraction;
  auto inside = [&](int r, int c) { return r >= 0 && r < R && c >= 0 && c < C; };
  auto is_border = [&](int r, int c) { return r == 0 || c == 0 || r == R - 1 || c == C - 1; };

  for (int r = 0; r < R; ++r) {
    for (int c = 0; c < C; ++c) {
      if (is_border(r, c) || !selected[cell(r, c)] || dropped[cell(r, c)]) continue;
      int pick = -1;
      for (int pass = 0; pass < 2 && pick < 0; ++pass) {
        for (int d : {2, 1, 0, 3}) {  // S, E, N, W
          const int nr = r + dr[static_cast<std::size_t>(d)], nc = c + dc[static_cast<std::size_t>(d)];
          if (!inside(nr, nc) || dropped[cell(nr, nc)]) continue;
          if (pass == 0 && !selected[cell(nr, nc)]) continue;
          pick = d;
          break;
        }
      }
      if (pick < 0) continue;
      const int nr = r + dr[static_cast<std::size_t>(pick)], nc = c + dc[static_cast<std::size_t>(pick)];
      arm[cell(r, c)][static_cast<std::size_t>(pick)] = false;
      arm[cell(nr, nc)][static_cast<std::size_t>((pick + 2) % 4)] = false;
      dropped[cell(r, c)] = dropped[cell(nr, nc)] = true;
    }
  }
  for (int r = 0; r < R; ++r) {
    for (int c = 0; c < C; ++c) {
      if (!is_border(r, c) || !selected[cell(r, c)] || dropped[cell(r, c)]) continue;
      std::vector<int> stubs;
      for (int d = 0; d < 4; ++d) {
        if (!inside(r + dr[static_cast<std::size_t>(d)], c + dc[static_cast<std::size_t>(d)])) stubs.push_back(d);
      }
      const int d = stubs[static_cast<std::size_t>(uniform_int(0, static_cast<int>(stubs.size()) - 1))];
      arm[cell(r, c)][static_cast<std::size_t>(d)] = false;
      dropped[cell(r, c)] = true;
    }
  }

  RoadId next_road = 1;
  NodeId next_node = static_cast<NodeId>(R * C + 1);
  auto add_road = [&](NodeId from, NodeId to, double length) {
    Road road;
    road.id = next_road++;
    road.from_node = from;
    road.to_node = to;
    road.length_m = length;
    road.speed_limit_mps = spec.speed_limit_mps;
    road.lanes = lane_layout(uniform_int(spec.lanes_min, spec.lanes_max));
    sc.roads.push_back(std::move(road));
    return sc.roads.back().id;
  };

  struct StubRoads {
    RoadId in, out;
    int side;
  };
  std::vector<StubRoads> stubs;
  for (int r = 0; r < R; ++r) {
    for (int c = 0; c < C; ++c) {
      for (int d = 0; d < 4; ++d) {
        if (!arm[cell(r, c)][static_cast<std::size_t>(d)]) continue;
        const int nr = r + dr[static_cast<std::size_t>(d)], nc = c + dc[static_cast<std::size_t>(d)];
        if (inside(nr, nc)) {
          if (d == 1 || d == 2) {  // each link once, both directions
            const double len = std::hypot(xs[static_cast<std::size_t>(nc)] - xs[static_cast<std::size_t>(c)],
                                          ys[static_cast<std::size_t>(nr)] - ys[static_cast<std::size_t>(r)]);
            add_road(grid_id(r, c), grid_id(nr, nc), len);
            add_road(grid_id(nr, nc), grid_id(r, c), len);
          }
          continue;
        }
        const NodeId stub = next_node++;
        sc.nodes.push_back({stub, xs[static_cast<std::size_t>(c)] + dc[static_cast<std::size_t>(d)] * spec.stub_length_m,
                            ys[static_cast<std::size_t>(r)] - dr[static_cast<std::size_t>(d)] * spec.stub_length_m});
        sc.grid_cell.emplace_back(-1, -1);
        const RoadId in = add_road(stub, grid_id(r, c), spec.stub_length_m);
        const RoadId out = add_road(grid_id(r, c), stub, spec.stub_length_m);
        stubs.push_back({in, out, d});
      }
    }
  }

  sc.network = std::make_shared<const RoadNetwork>(RoadNetwork::build(sc.nodes, sc.roads));
  const RoadNetwork& net = *sc.network;

  if (spec.trip_count > 0 && stubs.size() < 2) throw std::runtime_error("generate_scenario: not enough boundary stubs");
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<double> weights;
  for (std::size_t a = 0; a < stubs.size(); ++a) {
    for (std::size_t b = 0; b < stubs.size(); ++b) {
      if (a == b) continue;
      pairs.emplace_back(a, b);
      weights.push_back(stubs[b].side == (stubs[a].side + 2) % 4 ? spec.through_weight : 1.0);
    }
  }
  std::discrete_distribution<std::size_t> pick_pair(weights.begin(), weights.end());
  detail::Router router(net);
  std::vector<sim::Trip> trips;
  for (int i = 0; i < spec.trip_count; ++i) {
    sim::Trip trip;
    trip.id = i + 1;
    trip.depart_s = uniform(spec.depart_start_s, spec.depart_end_s);
    int failures = 0;
    while (trip.route.empty()) {
      const auto [a, b] = pairs[pick_pair(rng)];
      const auto path = router.route(*net.road_index(stubs[a].in), *net.road_index(stubs[b].out));
      if (path.empty()) {
        if (++failures >= 100) throw std::runtime_error("generate_scenario: no route after 100 OD samples");
        continue;
      }
      for (std::size_t r : path) trip.route.push_back(net.roads()[r].id);
    }
    trips.push_back(std::move(trip));
  }
  std::sort(trips.begin(), trips.end(), [](const sim::Trip& a, const sim::Trip& b) { return a.depart_s < b.depart_s; });
  for (std::size_t i = 0; i < trips.size(); ++i) trips[i].id = static_cast<std::int64_t>(i + 1);
  sc.demand.trips = std::move(trips);
  return sc;
}

inline nlohmann::json to_json(const ScenarioSpec& s) {
  return {{"rows", s.rows},
          {"cols", s.cols},
          {"block_min_m", s.block_min_m},
          {"block_max_m", s.block_max_m},
          {"three_arm_fraction", s.three_arm_fraction},
          {"lanes_min", s.lanes_min},
          {"lanes_max", s.lanes_max},
          {"speed_limit_mps", s.speed_limit_mps},
          {"stub_length_m", s.stub_length_m},
          {"trip_count", s.trip_count},
          {"depart_start_s", s.depart_start_s},
          {"depart_end_s", s.depart_end_s},
          {"through_weight", s.through_weight},
          {"seed", s.seed}};
}

inline ScenarioSpec scenario_from_json(const nlohmann::json& j) {
  ScenarioSpec s;
  s.rows = j.value("rows", s.rows);
  s.cols = j.value("cols", s.cols);
  s.block_min_m = j.value("block_min_m", s.block_min_m);
  s.block_max_m = j.value("block_max_m", s.block_max_m);
  s.three_arm_fraction = j.value("three_arm_fraction", s.three_arm_fraction);
  s.lanes_min = j.value("lanes_min", s.lanes_min);
  s.lanes_max = j.value("lanes_max", s.lanes_max);
  s.speed_limit_mps = j.value("speed_limit_mps", s.speed_limit_mps);
  s.stub_length_m = j.value("stub_length_m", s.stub_length_m);
  s.trip_count = j.value("trip_count", s.trip_count);
  s.depart_start_s = j.value("depart_start_s", s.depart_start_s);
  s.depart_end_s = j.value("depart_end_s", s.depart_end_s);
  s.through_weight = j.value("through_weight", s.through_weight);
  s.seed = j.value("seed", s.seed);
  return s;
}

/// Writes network.json and demand.json into `dir`.
inline void write_scenario(const Scenario& sc, const std::filesystem::path& dir) {
  write_text_file(dir / "network.json", network_to_json(sc.nodes, sc.roads).dump(1) + "\n");
  write_text_file(dir / "demand.json", sim::demand_to_json(sc.demand).dump() + "\n");
}

}  // namespace citylight::harness
