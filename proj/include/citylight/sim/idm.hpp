#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "citylight/sim/config.hpp"

namespace citylight::sim {

inline constexpr double kFreeRoad = std::numeric_limits<double>::infinity();

struct IdmResult {
  double accel = 0.0;
  bool guard = false;  // gap <= 0, emergency braking returned
};

/// Intelligent driver model acceleration. `gap` is bumper-to-bumper distance to
/// the leader (kFreeRoad when there is none), `dv` the approach rate v - v_leader.
inline IdmResult idm_accel(double v, double v0, double gap, double dv, const IdmParams& p, double b_safe) {
  if (!(gap > 0.0)) return {-b_safe, true};
  const double free_term = std::pow(v / v0, p.delta);
  if (std::isinf(gap)) return {p.a_max * (1.0 - free_term), false};
  const double dynamic = v * p.T_s + v * dv / (2.0 * std::sqrt(p.a_max * p.b_comf));
  const double s_star = p.s0_m + std::max(0.0, dynamic);
  const double ratio = s_star / gap;
  return {p.a_max * (1.0 - free_term - ratio * ratio), false};
}

/// Bumper-to-bumper gap at which a platoon at speed v is in equilibrium.
inline double idm_equilibrium_gap(double v, double v0, const IdmParams& p) {
  return (p.s0_m + v * p.T_s) / std::sqrt(1.0 - std::pow(v / v0, p.delta));
}

struct Kinematics {
  double pos = 0.0;
  double speed = 0.0;
};

/// Ballistic update over dt; speed never goes negative.
inline Kinematics integrate(Kinematics k, double accel, double dt) {
  const double v_new = k.speed + accel * dt;
  if (v_new < 0.0) {
    // stops inside the step
    const double dist = accel < 0.0 ? -k.speed * k.speed / (2.0 * accel) : 0.0;
    return {k.pos + dist, 0.0};
  }
  return {k.pos + k.speed * dt + 0.5 * accel * dt * dt, v_new};
}

}  // namespace citylight::sim
