#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "citylight/sim/config.hpp"

namespace citylight::sim {

namespace detail {
inline void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& known, const char* what) {
  if (!j.is_object()) throw std::invalid_argument(std::string(what) + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument(std::string(what) + ": unknown field '" + key + "'");
    }
  }
}
}  // namespace detail

inline nlohmann::json to_json(const SimConfig& c) {
  return {{"dt_s", c.dt_s},
          {"decision_interval_s", c.decision_interval_s},
          {"episode_s", c.episode_s},
          {"queue_speed_threshold_mps", c.queue_speed_threshold_mps},
          {"clearance_s", c.clearance_s},
          {"vehicle_length_m", c.vehicle_length_m},
          {"idm",
           {{"v0_from_speed_limit", c.idm.v0_from_speed_limit},
            {"v0_mps", c.idm.v0_mps},
            {"s0_m", c.idm.s0_m},
            {"T_s", c.idm.T_s},
            {"a_max", c.idm.a_max},
            {"b_comf", c.idm.b_comf},
            {"delta", c.idm.delta}}},
          {"mobil",
           {{"enabled", c.mobil.enabled},
            {"politeness", c.mobil.politeness},
            {"threshold", c.mobil.threshold},
            {"b_safe", c.mobil.b_safe}}}};
}

/// Missing fields keep their defaults; unknown fields are rejected.
inline SimConfig sim_config_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j,
                         {"dt_s", "decision_interval_s", "episode_s", "queue_speed_threshold_mps", "clearance_s",
                          "vehicle_length_m", "idm", "mobil"},
                         "SimConfig");
  SimConfig c;
  c.dt_s = j.value("dt_s", c.dt_s);
  c.decision_interval_s = j.value("decision_interval_s", c.decision_interval_s);
  c.episode_s = j.value("episode_s", c.episode_s);
  c.queue_speed_threshold_mps = j.value("queue_speed_threshold_mps", c.queue_speed_threshold_mps);
  c.clearance_s = j.value("clearance_s", c.clearance_s);
  c.vehicle_length_m = j.value("vehicle_length_m", c.vehicle_length_m);
  if (j.contains("idm")) {
    const auto& i = j.at("idm");
    detail::reject_unknown(i, {"v0_from_speed_limit", "v0_mps", "s0_m", "T_s", "a_max", "b_comf", "delta"}, "IdmParams");
    c.idm.v0_from_speed_limit = i.value("v0_from_speed_limit", c.idm.v0_from_speed_limit);
    c.idm.v0_mps = i.value("v0_mps", c.idm.v0_mps);
    c.idm.s0_m = i.value("s0_m", c.idm.s0_m);
    c.idm.T_s = i.value("T_s", c.idm.T_s);
    c.idm.a_max = i.value("a_max", c.idm.a_max);
    c.idm.b_comf = i.value("b_comf", c.idm.b_comf);
    c.idm.delta = i.value("delta", c.idm.delta);
  }
  if (j.contains("mobil")) {
    const auto& m = j.at("mobil");
    detail::reject_unknown(m, {"enabled", "politeness", "threshold", "b_safe"}, "MobilParams");
    c.mobil.enabled = m.value("enabled", c.mobil.enabled);
    c.mobil.politeness = m.value("politeness", c.mobil.politeness);
    c.mobil.threshold = m.value("threshold", c.mobil.threshold);
    c.mobil.b_safe = m.value("b_safe", c.mobil.b_safe);
  }
  c.validate();
  return c;
}

}  // namespace citylight::sim
