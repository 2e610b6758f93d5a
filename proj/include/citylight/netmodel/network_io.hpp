#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "citylight/netmodel/network.hpp"

namespace citylight {

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& obj, const char* field, const std::string& record) {
  if (!obj.is_object()) throw ParseError(record + ": expected an object");
  const auto it = obj.find(field);
  if (it == obj.end()) throw ParseError(record + "." + field + ": missing");
  return *it;
}

inline double require_number(const nlohmann::json& obj, const char* field, const std::string& record) {
  const auto& v = require(obj, field, record);
  if (!v.is_number()) throw ParseError(record + "." + field + ": expected a number");
  return v.get<double>();
}

inline std::int64_t require_integer(const nlohmann::json& obj, const char* field, const std::string& record) {
  const auto& v = require(obj, field, record);
  if (!v.is_number_integer()) throw ParseError(record + "." + field + ": expected an integer");
  return v.get<std::int64_t>();
}

inline const nlohmann::json& require_array(const nlohmann::json& obj, const char* field, const std::string& record) {
  const auto& v = require(obj, field, record);
  if (!v.is_array()) throw ParseError(record + "." + field + ": expected an array");
  return v;
}

inline Turn parse_turn(const nlohmann::json& v, const std::string& record) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "left") return Turn::Left;
    if (s == "straight") return Turn::Straight;
    if (s == "right") return Turn::Right;
  }
  throw ParseError(record + ": expected one of \"left\", \"straight\", \"right\"");
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open file");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace detail

inline RoadNetwork parse_network(const nlohmann::json& doc) {
  using namespace detail;
  std::vector<Node> nodes;
  const auto& jn = require_array(doc, "nodes", "network");
  for (std::size_t i = 0; i < jn.size(); ++i) {
    const std::string rec = "nodes[" + std::to_string(i) + "]";
    nodes.push_back({require_integer(jn[i], "id", rec), require_number(jn[i], "x", rec),
                     require_number(jn[i], "y", rec)});
  }
  std::vector<Road> roads;
  const auto& jr = require_array(doc, "roads", "network");
  for (std::size_t i = 0; i < jr.size(); ++i) {
    const std::string rec = "roads[" + std::to_string(i) + "]";
    Road r;
    r.id = require_integer(jr[i], "id", rec);
    r.from_node = require_integer(jr[i], "from", rec);
    r.to_node = require_integer(jr[i], "to", rec);
    r.length_m = require_number(jr[i], "length_m", rec);
    r.speed_limit_mps = require_number(jr[i], "speed_limit_mps", rec);
    const auto& lanes = require_array(jr[i], "lanes", rec);
    for (std::size_t l = 0; l < lanes.size(); ++l) {
      const std::string lrec = rec + ".lanes[" + std::to_string(l) + "]";
      Lane lane;
      lane.index = static_cast<int>(l);
      const auto& mv = require_array(lanes[l], "movements", lrec);
      for (std::size_t k = 0; k < mv.size(); ++k) {
        lane.allowed_movements.insert(parse_turn(mv[k], lrec + ".movements[" + std::to_string(k) + "]"));
      }
      r.lanes.push_back(lane);
    }
    roads.push_back(std::move(r));
  }
  return RoadNetwork::build(std::move(nodes), std::move(roads));
}

inline RoadNetwork load_network(const std::filesystem::path& path) {
  return parse_network(detail::read_json_file(path));
}

inline nlohmann::json network_to_json(const std::vector<Node>& nodes, const std::vector<Road>& roads) {
  nlohmann::json doc;
  doc["nodes"] = nlohmann::json::array();
  for (const Node& n : nodes) doc["nodes"].push_back({{"id", n.id}, {"x", n.x}, {"y", n.y}});
  doc["roads"] = nlohmann::json::array();
  for (const Road& r : roads) {
    nlohmann::json lanes = nlohmann::json::array();
    for (const Lane& lane : r.lanes) {
      nlohmann::json mv = nlohmann::json::array();
      for (Turn t : {Turn::Left, Turn::Straight, Turn::Right}) {
        if (lane.allowed_movements.contains(t)) mv.push_back(std::string(to_string(t)));
      }
      lanes.push_back({{"movements", mv}});
    }
    doc["roads"].push_back({{"id", r.id},
                            {"from", r.from_node},
                            {"to", r.to_node},
                            {"length_m", r.length_m},
                            {"speed_limit_mps", r.speed_limit_mps},
                            {"lanes", lanes}});
  }
  return doc;
}

inline nlohmann::json network_to_json(const RoadNetwork& net) { return network_to_json(net.nodes(), net.roads()); }

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

}  // namespace citylight
