#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "citylight/netmodel/network.hpp"
#include "citylight/netmodel/network_io.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace cl = citylight;
using cl::Compass;
using cl::Turn;
using namespace citylight::testing;

namespace {

std::vector<cl::ApproachGeometry> geo(std::initializer_list<std::pair<cl::RoadId, double>> items) {
  std::vector<cl::ApproachGeometry> out;
  for (auto [r, b] : items) out.push_back({r, b});
  return out;
}

}  // namespace

TEST(Compass, ExactSectorCentres) {
  const auto g = geo({{1, 0.0}, {2, 90.0}, {3, 180.0}, {4, 270.0}});
  const auto m = cl::classify_approaches(g);
  EXPECT_EQ(m[0], 1);
  EXPECT_EQ(m[1], 2);
  EXPECT_EQ(m[2], 3);
  EXPECT_EQ(m[3], 4);
}

TEST(Compass, ThreeRoadsWithinTolerance) {
  const auto g = geo({{7, 5.0}, {8, 95.0}, {9, 185.0}});
  const auto m = cl::classify_approaches(g);
  EXPECT_EQ(m[0], 7);
  EXPECT_EQ(m[1], 8);
  EXPECT_EQ(m[2], 9);
  EXPECT_FALSE(m[3].has_value());
}

TEST(Compass, SameSectorIsAnError) {
  const auto g = geo({{1, 10.0}, {2, 30.0}});
  EXPECT_THROW(cl::classify_approaches(g), cl::ValidationError);
}

TEST(Compass, BoundaryGoesToLowerSector) {
  EXPECT_EQ(cl::sector_of(45.0), Compass::N);
  EXPECT_EQ(cl::sector_of(135.0), Compass::E);
  EXPECT_EQ(cl::sector_of(225.0), Compass::S);
  EXPECT_EQ(cl::sector_of(315.0), Compass::W);
  EXPECT_EQ(cl::sector_of(45.0001), Compass::E);
  EXPECT_EQ(cl::sector_of(359.0), Compass::N);
}

TEST(Compass, TurnsAreRightHanded) {
  EXPECT_EQ(cl::turn_between(Compass::N, Compass::S), Turn::Straight);
  EXPECT_EQ(cl::turn_between(Compass::N, Compass::E), Turn::Left);
  EXPECT_EQ(cl::turn_between(Compass::N, Compass::W), Turn::Right);
  EXPECT_FALSE(cl::turn_between(Compass::E, Compass::E).has_value());
}

TEST(LoadNetwork, TwoNodesOneRoadHasNoIntersections) {
  const auto doc = nlohmann::json::parse(R"({"nodes":[{"id":1,"x":0,"y":0},{"id":2,"x":100,"y":0}],
    "roads":[{"id":1,"from":1,"to":2,"length_m":100,"speed_limit_mps":10,"lanes":[{"movements":["straight"]}]}]})");
  const auto net = cl::parse_network(doc);
  EXPECT_EQ(net.intersections().size(), 0u);
  EXPECT_EQ(net.roads().size(), 1u);
}

TEST(LoadNetwork, SingleCrossing) {
  const auto net = make_cross().build();
  ASSERT_EQ(net.intersections().size(), 1u);
  const auto& isec = net.intersections()[0];
  EXPECT_EQ(isec.arm_count, 4);
  for (const auto& p : isec.phases) EXPECT_TRUE(p.present);
}

TEST(LoadNetwork, SelfLoopRejected) {
  const auto doc = nlohmann::json::parse(R"({"nodes":[{"id":1,"x":0,"y":0}],
    "roads":[{"id":1,"from":1,"to":1,"length_m":100,"speed_limit_mps":10,"lanes":[{"movements":["straight"]}]}]})");
  EXPECT_THROW(cl::parse_network(doc), cl::ValidationError);
}

TEST(LoadNetwork, ParseErrorsNameFieldAndRecord) {
  const auto doc = nlohmann::json::parse(R"({"nodes":[{"id":1,"x":0,"y":0},{"id":2,"x":100,"y":0}],
    "roads":[{"id":1,"from":1,"to":2,"speed_limit_mps":10,"lanes":[{"movements":["straight"]}]}]})");
  try {
    cl::parse_network(doc);
    FAIL() << "expected ParseError";
  } catch (const cl::ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("roads[0].length_m"), std::string::npos) << e.what();
  }
  const auto bad_turn = nlohmann::json::parse(R"({"nodes":[{"id":1,"x":0,"y":0},{"id":2,"x":100,"y":0}],
    "roads":[{"id":1,"from":1,"to":2,"length_m":5,"speed_limit_mps":10,"lanes":[{"movements":["uturn"]}]}]})");
  EXPECT_THROW(cl::parse_network(bad_turn), cl::ParseError);
}

TEST(LoadNetwork, ValidationErrorsNameIntersection) {
  auto spec = CrossSpec{};
  spec.arm_bearing_deg = {0.0, 20.0, 180.0, 270.0};  // N and E both in sector N
  try {
    make_cross(spec).build();
    FAIL() << "expected ValidationError";
  } catch (const cl::ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("intersection 1"), std::string::npos) << e.what();
  }
}

TEST(LoadNetwork, FileRoundTripIsDeterministic) {
  const auto cross = make_cross();
  const auto dir = std::filesystem::temp_directory_path() / "citylight_netmodel_rt";
  std::filesystem::create_directories(dir);
  const auto text = cl::network_to_json(cross.nodes, cross.roads).dump();
  cl::write_text_file(dir / "net.json", text);
  const auto a = cl::load_network(dir / "net.json");
  const auto b = cl::load_network(dir / "net.json");
  EXPECT_EQ(cl::network_to_json(a).dump(), text);
  EXPECT_EQ(cl::network_to_json(b).dump(), text);
  ASSERT_EQ(a.intersections().size(), b.intersections().size());
  EXPECT_EQ(a.intersections()[0].phases[0].movements, b.intersections()[0].phases[0].movements);
}

TEST(ReindexPhases, StandardCrossOrder) {
  const auto net = make_cross().build();
  const auto& p = net.intersections()[0].phases;
  EXPECT_EQ(p[0].kind, Turn::Straight);
  EXPECT_EQ(p[0].axis, cl::Axis::NorthSouth);
  EXPECT_EQ(p[1].kind, Turn::Left);
  EXPECT_EQ(p[1].axis, cl::Axis::NorthSouth);
  EXPECT_EQ(p[2].kind, Turn::Straight);
  EXPECT_EQ(p[2].axis, cl::Axis::EastWest);
  EXPECT_EQ(p[3].kind, Turn::Left);
  EXPECT_EQ(p[3].axis, cl::Axis::EastWest);
  for (const auto& ph : p) EXPECT_EQ(ph.movements.size(), 2u);
}

TEST(ReindexPhases, ThreeArmWithWestAbsent) {
  CrossSpec s;
  s.arms = {true, true, true, false};
  const auto net = make_cross(s).build();
  const auto& isec = net.intersections()[0];
  EXPECT_EQ(isec.arm_count, 3);
  int present = 0;
  for (const auto& ph : isec.phases) present += ph.present ? 1 : 0;
  EXPECT_EQ(present, 3);
  // E has no straight exit with W gone, so only the E/W straight slot drops.
  EXPECT_TRUE(isec.phases[0].present);
  EXPECT_EQ(isec.phases[0].axis, cl::Axis::NorthSouth);
  EXPECT_FALSE(isec.phases[2].present);
  EXPECT_TRUE(isec.phases[3].present);
}

TEST(ReindexPhases, IdempotentOnCross) {
  const auto net = make_cross().build();
  const auto& isec = net.intersections()[0];
  const auto again = cl::reindex_phases(isec, net.movements());
  for (std::size_t s = 0; s < 4; ++s) {
    EXPECT_EQ(again[s].movements, isec.phases[s].movements);
    EXPECT_EQ(again[s].present, isec.phases[s].present);
  }
}

TEST(ReindexPhases, TieBreakPicksNorthOverEast) {
  // Rotating the geometry so that only E/W and N/S straights exist, N wins.
  CrossSpec s;
  s.arm_bearing_deg = {10.0, 100.0, 190.0, 280.0};
  const auto net = make_cross(s).build();
  EXPECT_EQ(net.intersections()[0].phases[0].axis, cl::Axis::NorthSouth);
  // Without a N/S straight pair, slot 0 moves to the E/W axis.
  CrossSpec t;
  t.arms = {true, true, false, true};  // S absent: N has no straight exit
  const auto net2 = make_cross(t).build();
  EXPECT_EQ(net2.intersections()[0].phases[0].axis, cl::Axis::EastWest);
  EXPECT_EQ(net2.intersections()[0].phases[0].kind, Turn::Straight);
}

TEST(ReindexPhases, RandomIntersectionProperties) {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto net = random_intersection(rng).build();
    ASSERT_EQ(net.intersections().size(), 1u);
    const auto& isec = net.intersections()[0];
    const auto again = cl::reindex_phases(isec, net.movements());
    int present = 0;
    for (std::size_t s = 0; s < 4; ++s) {
      ASSERT_EQ(again[s].movements, isec.phases[s].movements) << "trial " << trial;
      present += isec.phases[s].present ? 1 : 0;
      for (std::size_t m : isec.phases[s].movements) {
        const auto& mv = net.movements()[m];
        ASSERT_EQ(cl::axis_of(mv.approach), isec.phases[s].axis);
        ASSERT_EQ(mv.kind, isec.phases[s].kind);
      }
    }
    ASSERT_EQ(present, isec.arm_count);
    EXPECT_EQ(isec.phases[0].axis, isec.phases[1].axis);
    EXPECT_EQ(isec.phases[2].axis, isec.phases[3].axis);
    EXPECT_NE(isec.phases[0].axis, isec.phases[2].axis);
    EXPECT_EQ(isec.phases[0].kind, Turn::Straight);
  }
}

TEST(ReindexPhases, PhasesAreConflictFree) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const auto net = random_intersection(rng).build();
    const auto& isec = net.intersections()[0];
    auto exit_class = [&](std::size_t m) {
      for (Compass c : cl::kCompassOrder) {
        if (isec.exit(c) == net.movements()[m].out_road) return c;
      }
      throw std::logic_error("exit not found");
    };
    for (const auto& ph : isec.phases) {
      for (std::size_t a = 0; a < ph.movements.size(); ++a) {
        for (std::size_t b = a + 1; b < ph.movements.size(); ++b) {
          const auto& ma = net.movements()[ph.movements[a]];
          const auto& mb = net.movements()[ph.movements[b]];
          EXPECT_FALSE(paths_conflict(ma.approach, exit_class(ph.movements[a]), mb.approach, exit_class(ph.movements[b])));
        }
      }
    }
  }
  // The oracle does flag crossing flows.
  EXPECT_TRUE(paths_conflict(Compass::N, Compass::S, Compass::E, Compass::W));
  EXPECT_TRUE(paths_conflict(Compass::N, Compass::S, Compass::S, Compass::W));
  EXPECT_FALSE(paths_conflict(Compass::N, Compass::E, Compass::S, Compass::W));
}

TEST(NeighborLinks, SameAxisNorthNeighbor) {
  const auto sc = cl::harness::generate_scenario(small_grid_spec(2, 2, 0, 3));
  const auto& net = *sc.network;
  // node 3 = (row 1, col 0); its N neighbor is node 1.
  const auto ego = *net.intersection_at(*net.node_index(3));
  bool found = false;
  for (const auto& l : net.neighbors_of(ego)) {
    if (l.neighbor != 1) continue;
    found = true;
    EXPECT_EQ(l.approach_class, Compass::N);
    EXPECT_EQ(l.relation_s, 0);
    EXPECT_EQ(l.group, 0);
  }
  EXPECT_TRUE(found);
}

TEST(NeighborLinks, RelationMatchesGeometricOracle) {
  // Brute force: the ego's and neighbor's slot-0 flows cross iff their travel
  // directions are not parallel.
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto sc = cl::harness::generate_scenario(small_grid_spec(4, 4, 0, seed, 0.8));
    const auto& net = *sc.network;
    auto flow_dir = [&](std::size_t isec) {
      const auto& mv = net.movements()[net.intersections()[isec].phases[0].movements.front()];
      const auto& a = net.nodes()[net.road_from(mv.in_road)];
      const auto& b = net.nodes()[net.road_to(mv.in_road)];
      const double dx = b.x - a.x, dy = b.y - a.y, n = std::hypot(dx, dy);
      return std::pair{dx / n, dy / n};
    };
    int perpendicular = 0;
    for (const auto& l : net.neighbor_links()) {
      const auto [ax, ay] = flow_dir(l.ego_index);
      const auto [bx, by] = flow_dir(l.neighbor_index);
      const int oracle = std::abs(ax * by - ay * bx) > 0.5 ? 1 : 0;
      EXPECT_EQ(l.relation_s, oracle);
      perpendicular += oracle;
    }
    if (seed == 0) {
      EXPECT_GT(perpendicular, 0) << "scenario should mix primary axes";
    }
  }
}

TEST(NeighborLinks, GroupsFollowEgoPrimaryAxis) {
  const auto sc = cl::harness::generate_scenario(small_grid_spec(4, 4, 0, 5, 0.5));
  const auto& net = *sc.network;
  for (const auto& l : net.neighbor_links()) {
    const auto primary = net.intersections()[l.ego_index].primary_axis();
    EXPECT_EQ(l.group, cl::axis_of(l.approach_class) == primary ? 0 : 1);
  }
}

TEST(NeighborLinks, SymmetricAndCoverOneHop) {
  const auto sc = cl::harness::generate_scenario(small_grid_spec(4, 5, 0, 8, 0.5));
  const auto& net = *sc.network;
  std::set<std::pair<std::size_t, std::size_t>> links;
  for (const auto& l : net.neighbor_links()) links.emplace(l.ego_index, l.neighbor_index);
  for (const auto& [i, j] : links) EXPECT_TRUE(links.count({j, i})) << i << "->" << j;
  // one-hop set: signalized nodes joined by a road in either direction
  std::set<std::pair<std::size_t, std::size_t>> expected;
  for (std::size_t r = 0; r < net.roads().size(); ++r) {
    const auto a = net.intersection_at(net.road_from(r)), b = net.intersection_at(net.road_to(r));
    if (a && b) {
      expected.emplace(*a, *b);
      expected.emplace(*b, *a);
    }
  }
  EXPECT_EQ(links, expected);
}

TEST(NeighborLinks, ConnectivityFromConnectingRoad) {
  const auto sc = cl::harness::generate_scenario(small_grid_spec(2, 2, 0, 11));
  const auto& net = *sc.network;
  for (const auto& l : net.neighbor_links()) {
    const auto ego_node = net.intersections()[l.ego_index].node;
    const auto nb_node = net.intersections()[l.neighbor_index].node;
    for (std::size_t r : net.incoming(ego_node)) {
      if (net.road_from(r) != nb_node) continue;
      EXPECT_DOUBLE_EQ(l.connectivity.distance_m, net.roads()[r].length_m);
      EXPECT_EQ(l.connectivity.connecting_lane_count, static_cast<int>(net.roads()[r].lanes.size()));
    }
  }
}

TEST(NeighborLinks, ParallelApproachesRejected) {
  // Straight roads between the same two nodes share a bearing, so they can
  // never be distinct approaches of one intersection.
  auto net = make_cross();
  net.roads.push_back({30, 2, 1, 250.0, 13.89, cl::harness::lane_layout(1)});
  EXPECT_THROW(net.build(), cl::ValidationError);
}

TEST(NeighborLinks, CornerHasTwoNeighborsInDistinctGroups) {
  const auto sc = cl::harness::generate_scenario(small_grid_spec(3, 3, 0, 2));
  const auto& net = *sc.network;
  // bottom-left corner: grid node (2, 0) has id 7 and neighbors N (4) and E (8).
  const auto ego = *net.intersection_at(*net.node_index(7));
  const auto links = net.neighbors_of(ego);
  ASSERT_EQ(links.size(), 2u);
  EXPECT_EQ(links[0].approach_class, Compass::N);
  EXPECT_EQ(links[0].group, 0);
  EXPECT_EQ(links[1].approach_class, Compass::E);
  EXPECT_EQ(links[1].group, 1);
}

TEST(Generator, TwoByTwoAllFourArm) {
  const auto sc = cl::harness::generate_scenario(small_grid_spec(2, 2, 10, 0));
  ASSERT_EQ(sc.network->intersections().size(), 4u);
  for (const auto& isec : sc.network->intersections()) EXPECT_EQ(isec.arm_count, 4);
}

TEST(Generator, FullFractionMakesInteriorThreeArm) {
  const auto sc = cl::harness::generate_scenario(small_grid_spec(5, 5, 0, 4, 1.0));
  const auto& net = *sc.network;
  for (std::size_t n = 0; n < net.nodes().size(); ++n) {
    const auto [r, c] = sc.grid_cell[n];
    if (r <= 0 || c <= 0 || r >= 4 || c >= 4) continue;
    const auto i = net.intersection_at(n);
    ASSERT_TRUE(i.has_value());
    EXPECT_EQ(net.intersections()[*i].arm_count, 3) << "node " << net.nodes()[n].id;
  }
}

TEST(Generator, SameSeedSameFiles) {
  const auto spec = small_grid_spec(3, 3, 200, 17, 0.4);
  const auto a = cl::harness::generate_scenario(spec);
  const auto b = cl::harness::generate_scenario(spec);
  EXPECT_EQ(cl::network_to_json(a.nodes, a.roads).dump(), cl::network_to_json(b.nodes, b.roads).dump());
  EXPECT_EQ(cl::sim::demand_to_json(a.demand).dump(), cl::sim::demand_to_json(b.demand).dump());
  auto other = spec;
  other.seed = 18;
  const auto c = cl::harness::generate_scenario(other);
  EXPECT_NE(cl::sim::demand_to_json(a.demand).dump(), cl::sim::demand_to_json(c.demand).dump());
}

TEST(Generator, RoutesAreValid) {
  const auto sc = cl::harness::generate_scenario(small_grid_spec(3, 4, 300, 21, 0.5));
  EXPECT_NO_THROW(cl::sim::validate_demand(sc.demand, *sc.network));
  EXPECT_EQ(sc.demand.trips.size(), 300u);
  for (std::size_t i = 1; i < sc.demand.trips.size(); ++i) {
    EXPECT_LE(sc.demand.trips[i - 1].depart_s, sc.demand.trips[i].depart_s);
  }
}

TEST(Generator, SpecValidation) {
  auto s = small_grid_spec(1, 3, 0, 0);
  EXPECT_THROW(cl::harness::generate_scenario(s), std::invalid_argument);
  s = small_grid_spec(2, 2, 0, 0, 1.5);
  EXPECT_THROW(cl::harness::generate_scenario(s), std::invalid_argument);
}
