#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "citylight/netmodel/network.hpp"
#include "citylight/netmodel/network_io.hpp"

namespace citylight::sim {

struct Trip {
  std::int64_t id = 0;
  double depart_s = 0.0;
  std::vector<RoadId> route;
};

struct Demand {
  std::vector<Trip> trips;
};

inline Demand parse_demand(const nlohmann::json& doc) {
  using namespace citylight::detail;
  Demand d;
  const auto& jt = require_array(doc, "trips", "demand");
  for (std::size_t i = 0; i < jt.size(); ++i) {
    const std::string rec = "trips[" + std::to_string(i) + "]";
    Trip t;
    t.id = require_integer(jt[i], "id", rec);
    t.depart_s = require_number(jt[i], "depart_s", rec);
    const auto& route = require_array(jt[i], "route", rec);
    for (std::size_t k = 0; k < route.size(); ++k) {
      if (!route[k].is_number_integer()) {
        throw ParseError(rec + ".route[" + std::to_string(k) + "]: expected an integer road id");
      }
      t.route.push_back(route[k].get<RoadId>());
    }
    d.trips.push_back(std::move(t));
  }
  return d;
}

inline Demand load_demand(const std::filesystem::path& path) {
  return parse_demand(citylight::detail::read_json_file(path));
}

inline nlohmann::json demand_to_json(const Demand& d) {
  nlohmann::json trips = nlohmann::json::array();
  for (const Trip& t : d.trips) trips.push_back({{"id", t.id}, {"depart_s", t.depart_s}, {"route", t.route}});
  return {{"trips", trips}};
}

/// Checks ids, departure times and route contiguity against the network.
inline void validate_demand(const Demand& d, const RoadNetwork& net) {
  std::vector<std::int64_t> ids;
  for (const Trip& t : d.trips) {
    const std::string tag = "trip " + std::to_string(t.id);
    if (!std::isfinite(t.depart_s) || t.depart_s < 0.0) throw ValidationError(tag + ": depart_s must be >= 0");
    if (t.route.empty()) throw ValidationError(tag + ": empty route");
    std::optional<std::size_t> prev;
    for (RoadId rid : t.route) {
      const auto r = net.road_index(rid);
      if (!r) throw ValidationError(tag + ": unknown road " + std::to_string(rid));
      if (prev && !net.can_continue(*prev, *r)) {
        throw ValidationError(tag + ": road " + std::to_string(rid) + " does not continue from road " +
                              std::to_string(net.roads()[*prev].id));
      }
      prev = r;
    }
    ids.push_back(t.id);
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw ValidationError("demand: duplicate trip id");
}

}  // namespace citylight::sim
