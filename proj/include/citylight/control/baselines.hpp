#pragma once

#include <array>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "citylight/sim/world.hpp"

namespace citylight::control {

enum class ControllerKind { FixedTime, MaxPressure, AdjustedMaxPressure };

inline std::string_view to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::FixedTime: return "fixed_time";
    case ControllerKind::MaxPressure: return "max_pressure";
    case ControllerKind::AdjustedMaxPressure: return "adjusted_max_pressure";
  }
  return "?";
}

inline ControllerKind parse_controller(std::string_view name) {
  if (name == "fixed_time" || name == "fixed") return ControllerKind::FixedTime;
  if (name == "max_pressure" || name == "mp") return ControllerKind::MaxPressure;
  if (name == "adjusted_max_pressure" || name == "amp") return ControllerKind::AdjustedMaxPressure;
  throw std::invalid_argument("unknown controller '" + std::string(name) + "'");
}

/// Next present slot after `active_slot`, cycling.
inline int fixed_time_decide(const Intersection& isec, int active_slot) {
  for (int step = 1; step <= 4; ++step) {
    const int s = (active_slot + step) % 4;
    if (isec.phases[static_cast<std::size_t>(s)].present) return s;
  }
  return active_slot;
}

/// Per-movement counts feeding the pressure of one slot.
struct PressureTerm {
  double n_in = 0.0;
  double n_out = 0.0;
  double in_length_m = 1.0;
  double out_length_m = 1.0;
};

/// Entering counts cover every lane of the movement; exiting counts cover the
/// first 100 m of the exit road (all of it if shorter).
inline std::vector<PressureTerm> pressure_terms(const sim::World& world, std::size_t intersection, int slot) {
  const auto& net = world.network();
  const auto& phase = net.intersections().at(intersection).phases.at(static_cast<std::size_t>(slot));
  std::vector<PressureTerm> terms;
  for (std::size_t m : phase.movements) {
    const Movement& mv = net.movements()[m];
    PressureTerm t;
    for (int lane : mv.lanes) t.n_in += world.count_on_lane(mv.in_road, lane);
    t.n_out = world.count_on_road_entry(mv.out_road);
    t.in_length_m = net.roads()[mv.in_road].length_m;
    t.out_length_m = net.roads()[mv.out_road].length_m;
    terms.push_back(t);
  }
  return terms;
}

/// Σ (n_in − n_out), or Σ (n_in/len_in − n_out/len_out) when adjusted.
inline double pressure_from_terms(const std::vector<PressureTerm>& terms, bool adjusted) {
  double total = 0.0;
  for (const auto& t : terms) total += adjusted ? t.n_in / t.in_length_m - t.n_out / t.out_length_m : t.n_in - t.n_out;
  return total;
}

inline double pressure(const sim::World& world, std::size_t intersection, int slot, bool adjusted) {
  return pressure_from_terms(pressure_terms(world, intersection, slot), adjusted);
}

/// Index of the largest value among present entries, ties to the lowest.
inline int argmax_present(const std::array<double, 4>& values, const std::array<bool, 4>& present) {
  int best = -1;
  for (int s = 0; s < 4; ++s) {
    if (present[static_cast<std::size_t>(s)] && (best < 0 || values[static_cast<std::size_t>(s)] > values[static_cast<std::size_t>(best)])) best = s;
  }
  return best;
}

/// Argmax of pressure over present slots, ties to the lowest slot.
inline int max_pressure_decide(const sim::World& world, std::size_t intersection, bool adjusted) {
  const auto& isec = world.network().intersections().at(intersection);
  std::array<double, 4> p{};
  std::array<bool, 4> present{};
  for (int s = 0; s < 4; ++s) {
    present[static_cast<std::size_t>(s)] = isec.phases[static_cast<std::size_t>(s)].present;
    if (present[static_cast<std::size_t>(s)]) p[static_cast<std::size_t>(s)] = pressure(world, intersection, s, adjusted);
  }
  return argmax_present(p, present);
}

/// Chooses one slot per intersection at each decision boundary.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::vector<int> decide(const sim::World& world) = 0;
  virtual std::string name() const = 0;
};

class RuleController final : public Controller {
 public:
  explicit RuleController(ControllerKind kind) : kind_(kind) {}

  std::vector<int> decide(const sim::World& world) override {
    const auto& isecs = world.network().intersections();
    std::vector<int> out(isecs.size());
    for (std::size_t i = 0; i < isecs.size(); ++i) {
      switch (kind_) {
        case ControllerKind::FixedTime: out[i] = fixed_time_decide(isecs[i], world.signal(i).active_slot); break;
        case ControllerKind::MaxPressure: out[i] = max_pressure_decide(world, i, false); break;
        case ControllerKind::AdjustedMaxPressure: out[i] = max_pressure_decide(world, i, true); break;
      }
    }
    return out;
  }

  std::string name() const override { return std::string(to_string(kind_)); }

 private:
  ControllerKind kind_;
};

/// Runs a full episode under a controller and returns its metrics.
inline sim::SimMetrics run_episode(sim::World& world, Controller& controller) {
  while (!world.episode_done()) {
    const auto slots = controller.decide(world);
    for (std::size_t i = 0; i < slots.size(); ++i) world.apply_action(i, slots[i]);
    world.run_interval();
  }
  return world.finalize_metrics();
}

}  // namespace citylight::control
