#pragma once

#include <cmath>
#include <stdexcept>

namespace citylight::sim {

struct IdmParams {
  bool v0_from_speed_limit = true;
  double v0_mps = 13.89;  // used when v0_from_speed_limit is false
  double s0_m = 2.0;
  double T_s = 1.5;
  double a_max = 1.5;
  double b_comf = 2.0;
  double delta = 4.0;
};

struct MobilParams {
  bool enabled = true;  // discretionary changes; mandatory ones always run
  double politeness = 0.1;
  double threshold = 0.2;
  double b_safe = 4.0;
};

struct SimConfig {
  double dt_s = 1.0;
  double decision_interval_s = 15.0;
  double episode_s = 3600.0;
  IdmParams idm;
  MobilParams mobil;
  double queue_speed_threshold_mps = 0.3;
  double clearance_s = 0.0;
  double vehicle_length_m = 5.0;

  int ticks_per_decision() const { return static_cast<int>(std::lround(decision_interval_s / dt_s)); }
  int decisions_per_episode() const { return static_cast<int>(std::lround(episode_s / decision_interval_s)); }
  int ticks_per_episode() const { return ticks_per_decision() * decisions_per_episode(); }

  void validate() const {
    auto divisible = [](double a, double b) {
      const double q = a / b;
      return b > 0.0 && std::abs(q - std::round(q)) < 1e-9 && std::round(q) >= 1.0;
    };
    if (!(dt_s > 0.0)) throw std::invalid_argument("SimConfig: dt_s must be > 0");
    if (!divisible(decision_interval_s, dt_s)) {
      throw std::invalid_argument("SimConfig: decision_interval_s must be a multiple of dt_s");
    }
    if (!divisible(episode_s, decision_interval_s)) {
      throw std::invalid_argument("SimConfig: episode_s must be a multiple of decision_interval_s");
    }
    if (clearance_s < 0.0) throw std::invalid_argument("SimConfig: clearance_s must be >= 0");
  }
};

}  // namespace citylight::sim
