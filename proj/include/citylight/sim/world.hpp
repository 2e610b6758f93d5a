#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "citylight/netmodel/network.hpp"
#include "citylight/sim/config.hpp"
#include "citylight/sim/demand.hpp"
#include "citylight/sim/idm.hpp"

namespace citylight::sim {

// Pending: not yet due. Waiting: due but deferred for lack of entry headroom.
enum class VehicleStatus : std::uint8_t { Pending, Waiting, Active, Finished };

struct Vehicle {
  std::int64_t id = 0;
  std::vector<std::size_t> route;  // road indices
  std::size_t route_pos = 0;
  int lane = 0;
  double pos_m = 0.0;
  double speed_mps = 0.0;
  double depart_time_s = 0.0;
  std::optional<double> finish_time_s;
  VehicleStatus status = VehicleStatus::Pending;

  std::size_t road() const { return route[route_pos]; }
  std::optional<std::size_t> route_at(std::size_t offset) const {
    const std::size_t i = route_pos + offset;
    return i < route.size() ? std::optional<std::size_t>(route[i]) : std::nullopt;
  }
};

struct SignalState {
  int active_slot = 0;
  std::optional<int> last_passing_slot;
  double clearance_until_s = 0.0;
};

struct SimMetrics {
  int throughput = 0;
  double att_s = 0.0;
  bool att_defined = false;  // false when nothing departed
  int departed = 0;
  int in_network = 0;
  int deferred = 0;
  std::size_t guard_activations = 0;
  std::vector<std::vector<double>> queue_history;  // [intersection][decision interval] mean queue
};

struct Diagnostics {
  std::size_t guard_activations = 0;
  std::size_t lane_changes = 0;
  std::size_t blocked_transfers = 0;
};

/// A vehicle placed directly on a lane, bypassing the demand schedule.
struct Placement {
  std::int64_t id = 0;
  std::vector<RoadId> route;
  std::size_t route_pos = 0;
  int lane = 0;
  double pos_m = 0.0;
  double speed_mps = 0.0;
};

/// Deterministic microscopic simulation of one episode on a shared network.
class World {
 public:
  static constexpr double kGapEps = 0.01;
  static constexpr double kMinObstacleGap = 1e-3;
  static constexpr double kExitWindowM = 100.0;

  World(std::shared_ptr<const RoadNetwork> network, const Demand& demand, SimConfig config = {})
      : net_(std::move(network)), cfg_(config) {
    cfg_.validate();
    validate_demand(demand, *net_);
    const auto& roads = net_->roads();
    lanes_.resize(roads.size());
    for (std::size_t r = 0; r < roads.size(); ++r) lanes_[r].resize(roads[r].lanes.size());

    std::vector<const Trip*> trips;
    for (const Trip& t : demand.trips) trips.push_back(&t);
    std::sort(trips.begin(), trips.end(), [](const Trip* a, const Trip* b) { return a->id < b->id; });
    for (const Trip* t : trips) {
      Vehicle v;
      v.id = t->id;
      v.depart_time_s = t->depart_s;
      for (RoadId rid : t->route) v.route.push_back(*net_->road_index(rid));
      vehicles_.push_back(std::move(v));
    }
    order_.resize(vehicles_.size());
    std::iota(order_.begin(), order_.end(), 0u);
    schedule_ = order_;
    std::stable_sort(schedule_.begin(), schedule_.end(), [&](std::uint32_t a, std::uint32_t b) {
      return vehicles_[a].depart_time_s < vehicles_[b].depart_time_s;
    });

    const auto& isecs = net_->intersections();
    signals_.resize(isecs.size());
    slot_lanes_.resize(isecs.size());
    incoming_lanes_.resize(isecs.size());
    interval_queue_sum_.assign(isecs.size(), 0.0);
    last_interval_queue_.assign(isecs.size(), 0.0);
    queue_history_.resize(isecs.size());
    for (std::size_t i = 0; i < isecs.size(); ++i) {
      for (int s = 0; s < 4; ++s) {
        if (isecs[i].phases[static_cast<std::size_t>(s)].present) slot_lanes_[i][static_cast<std::size_t>(s)] = net_->slot_lanes(i, s);
      }
      for (std::size_t r : net_->incoming(isecs[i].node)) {
        for (std::size_t l = 0; l < roads[r].lanes.size(); ++l) incoming_lanes_[i].emplace_back(r, static_cast<int>(l));
      }
      signals_[i].active_slot = first_present(i);
    }
  }

  const RoadNetwork& network() const { return *net_; }
  std::shared_ptr<const RoadNetwork> network_ptr() const { return net_; }
  const SimConfig& config() const { return cfg_; }
  double time_s() const { return static_cast<double>(tick_) * cfg_.dt_s; }
  long tick() const { return tick_; }
  bool episode_done() const { return tick_ >= cfg_.ticks_per_episode(); }
  const Diagnostics& diagnostics() const { return diag_; }

  const std::vector<Vehicle>& vehicles() const { return vehicles_; }
  const SignalState& signal(std::size_t intersection) const { return signals_[intersection]; }

  /// Vehicle indices on a lane, front (largest position) first.
  const std::deque<std::uint32_t>& lane_vehicles(std::size_t road, int lane) const {
    return lanes_[road][static_cast<std::size_t>(lane)];
  }

  int departed() const { return departed_; }
  int finished() const { return finished_; }
  int in_network() const { return in_network_; }
  int deferred() const { return departed_ - finished_ - in_network_; }

  // ---- signals -------------------------------------------------------------

  /// Activates a present phase slot. Switching slots starts an all-red
  /// clearance of SimConfig::clearance_s.
  void apply_action(std::size_t intersection, int slot) {
    const auto& isec = net_->intersections().at(intersection);
    if (slot < 0 || slot > 3 || !isec.phases[static_cast<std::size_t>(slot)].present) {
      throw std::invalid_argument("apply_action: slot " + std::to_string(slot) + " is not present at intersection " +
                                  std::to_string(isec.node_id));
    }
    SignalState& sig = signals_[intersection];
    if (slot != sig.active_slot && cfg_.clearance_s > 0.0) sig.clearance_until_s = time_s() + cfg_.clearance_s;
    sig.active_slot = slot;
  }

  bool in_clearance(std::size_t intersection) const { return time_s() < signals_[intersection].clearance_until_s; }

  /// Whether a vehicle may currently move from `in_road` onto `out_road`.
  bool movement_open(std::size_t in_road, std::size_t out_road) const {
    const auto isec = net_->intersection_at(net_->road_to(in_road));
    if (!isec) return true;
    const int slot = net_->gating_slot(in_road, out_road);
    if (slot < 0) return true;
    const SignalState& sig = signals_[*isec];
    return sig.active_slot == slot && time_s() >= sig.clearance_until_s;
  }

  // ---- observation helpers -------------------------------------------------

  /// Slow vehicles on the in-lanes of each phase slot (0 for absent slots).
  std::array<int, 4> queue_counts(std::size_t intersection) const {
    std::array<int, 4> out{};
    for (std::size_t s = 0; s < 4; ++s) {
      for (const auto& [road, lane] : slot_lanes_[intersection][s]) out[s] += slow_on_lane(road, lane);
    }
    return out;
  }

  /// Slow vehicles over all incoming lanes of an intersection.
  int total_queue(std::size_t intersection) const {
    int n = 0;
    for (const auto& [road, lane] : incoming_lanes_[intersection]) n += slow_on_lane(road, lane);
    return n;
  }

  const std::vector<std::pair<std::size_t, int>>& slot_lanes(std::size_t intersection, int slot) const {
    return slot_lanes_[intersection][static_cast<std::size_t>(slot)];
  }

  int count_on_lane(std::size_t road, int lane) const {
    return static_cast<int>(lanes_[road][static_cast<std::size_t>(lane)].size());
  }

  /// Vehicles within the first `window_m` metres of a road, all lanes.
  int count_on_road_entry(std::size_t road, double window_m = kExitWindowM) const {
    int n = 0;
    for (const auto& q : lanes_[road]) {
      for (std::uint32_t v : q) n += vehicles_[v].pos_m <= window_m ? 1 : 0;
    }
    return n;
  }

  /// Mean total queue of each intersection over the last completed decision interval.
  double last_interval_queue(std::size_t intersection) const { return last_interval_queue_[intersection]; }

  // ---- dynamics ------------------------------------------------------------

  void step() {
    const double t = time_s();
    insert_departures(t);
    lane_changes();
    for (std::size_t i = 0; i < vehicles_.size(); ++i) floor_pos_[i] = vehicles_[i].pos_m;

    accel_.assign(vehicles_.size(), 0.0);
    for (std::size_t r = 0; r < lanes_.size(); ++r) {
      for (std::size_t l = 0; l < lanes_[r].size(); ++l) {
        const auto& q = lanes_[r][l];
        for (std::size_t k = 0; k < q.size(); ++k) {
          const Vehicle& v = vehicles_[q[k]];
          const Leader lead = k == 0 ? front_leader(v, r, static_cast<int>(l), v.pos_m)
                                     : vehicle_leader(v.pos_m, vehicles_[q[k - 1]]);
          const auto res = idm_accel(v.speed_mps, desired_speed(r), lead.gap, v.speed_mps - lead.speed, cfg_.idm,
                                     cfg_.mobil.b_safe);
          if (res.guard) ++diag_.guard_activations;
          accel_[q[k]] = res.accel;
        }
      }
    }
    for (std::uint32_t i : order_) {
      Vehicle& v = vehicles_[i];
      if (v.status != VehicleStatus::Active) continue;
      const auto k = integrate({v.pos_m, v.speed_mps}, accel_[i], cfg_.dt_s);
      v.pos_m = k.pos;
      v.speed_mps = k.speed;
    }

    const double t_end = t + cfg_.dt_s;
    for (std::size_t r = 0; r < lanes_.size(); ++r) {
      const double length = net_->roads()[r].length_m;
      for (std::size_t l = 0; l < lanes_[r].size(); ++l) {
        auto& q = lanes_[r][l];
        double limit = kFreeRoad;
        while (!q.empty()) {
          Vehicle& front = vehicles_[q.front()];
          if (front_blocked(front, r, static_cast<int>(l))) {
            limit = length;
            break;
          }
          if (front.pos_m < length) break;
          if (!front.route_at(1)) {
            front.status = VehicleStatus::Finished;
            front.finish_time_s = t_end;
            q.pop_front();
            ++finished_;
            --in_network_;
            continue;
          }
          if (!transfer(q.front(), front.pos_m - length)) {
            front.pos_m = length;
            front.speed_mps = 0.0;
            ++diag_.blocked_transfers;
            break;
          }
          q.pop_front();
        }
        for (std::size_t k = 0; k < q.size(); ++k) {
          Vehicle& v = vehicles_[q[k]];
          if (v.pos_m > limit) {
            if (k > 0) ++diag_.guard_activations;
            v.pos_m = limit;
            v.speed_mps = k == 0 ? 0.0 : std::min(v.speed_mps, vehicles_[q[k - 1]].speed_mps);
          }
          limit = v.pos_m - cfg_.vehicle_length_m - kGapEps;
        }
      }
    }

    ++tick_;
    for (std::size_t i = 0; i < signals_.size(); ++i) interval_queue_sum_[i] += total_queue(i);
    if (tick_ % cfg_.ticks_per_decision() == 0) {
      const double n = cfg_.ticks_per_decision();
      for (std::size_t i = 0; i < signals_.size(); ++i) {
        last_interval_queue_[i] = interval_queue_sum_[i] / n;
        queue_history_[i].push_back(last_interval_queue_[i]);
        interval_queue_sum_[i] = 0.0;
        signals_[i].last_passing_slot = signals_[i].active_slot;
      }
    }
  }

  /// Runs one decision interval worth of ticks.
  void run_interval() {
    for (int k = 0; k < cfg_.ticks_per_decision(); ++k) step();
  }

  SimMetrics finalize_metrics() const {
    SimMetrics m;
    m.throughput = finished_;
    m.departed = departed_;
    m.in_network = in_network_;
    m.deferred = deferred();
    m.guard_activations = diag_.guard_activations;
    m.queue_history = queue_history_;
    const double now = time_s();
    double total = 0.0;
    for (const Vehicle& v : vehicles_) {
      if (v.status == VehicleStatus::Pending) continue;
      total += v.finish_time_s ? (*v.finish_time_s - v.depart_time_s) : (now - v.depart_time_s);
    }
    m.att_defined = departed_ > 0;
    m.att_s = departed_ > 0 ? total / departed_ : 0.0;
    return m;
  }

  // ---- lane changing -------------------------------------------------------

  /// MOBIL criterion for moving a vehicle to an adjacent lane of its road.
  /// Mandatory changes (current lane cannot serve the next movement) skip the
  /// incentive test but never the safety test.
  bool mobil_check(std::size_t vehicle, int target_lane) const {
    const Vehicle& c = vehicles_[vehicle];
    const std::size_t r = c.road();
    const int nlanes = static_cast<int>(lanes_[r].size());
    if (target_lane < 0 || target_lane >= nlanes || std::abs(target_lane - c.lane) != 1) return false;
    const auto next = c.route_at(1);
    if (!net_->lane_serves(r, target_lane, next)) return false;
    const bool mandatory = !net_->lane_serves(r, c.lane, next);
    const double L = cfg_.vehicle_length_m;
    const double b_safe = cfg_.mobil.b_safe;
    const double v0 = desired_speed(r);

    const auto& target = lanes_[r][static_cast<std::size_t>(target_lane)];
    std::optional<std::uint32_t> new_leader, new_follower;
    for (std::uint32_t idx : target) {
      if (vehicles_[idx].pos_m >= c.pos_m) {
        new_leader = idx;
      } else {
        new_follower = idx;
        break;
      }
    }
    if (new_leader && vehicles_[*new_leader].pos_m - c.pos_m - L <= kGapEps) return false;
    if (new_follower && c.pos_m - vehicles_[*new_follower].pos_m - L <= kGapEps) return false;

    auto accel = [&](const Vehicle& v, const Leader& lead) {
      return idm_accel(v.speed_mps, v0, lead.gap, v.speed_mps - lead.speed, cfg_.idm, b_safe).accel;
    };
    const Leader lead_new = new_leader ? vehicle_leader(c.pos_m, vehicles_[*new_leader])
                                       : front_leader(c, r, target_lane, c.pos_m);
    const double a_c_new = accel(c, lead_new);
    double a_n_old = 0.0, a_n_new = 0.0;
    if (new_follower) {
      const Vehicle& n = vehicles_[*new_follower];
      a_n_old = accel(n, new_leader ? vehicle_leader(n.pos_m, vehicles_[*new_leader])
                                    : front_leader(n, r, target_lane, n.pos_m));
      a_n_new = accel(n, vehicle_leader(n.pos_m, c));
      if (a_n_new < -b_safe) return false;
    }
    if (mandatory) return a_c_new >= -b_safe;

    const auto& current = lanes_[r][static_cast<std::size_t>(c.lane)];
    const auto it = std::find(current.begin(), current.end(), static_cast<std::uint32_t>(vehicle));
    const std::size_t k = static_cast<std::size_t>(it - current.begin());
    const Leader lead_old = k == 0 ? front_leader(c, r, c.lane, c.pos_m) : vehicle_leader(c.pos_m, vehicles_[current[k - 1]]);
    const double a_c_old = accel(c, lead_old);
    double a_o_old = 0.0, a_o_new = 0.0;
    if (k + 1 < current.size()) {
      const Vehicle& o = vehicles_[current[k + 1]];
      a_o_old = accel(o, vehicle_leader(o.pos_m, c));
      a_o_new = accel(o, k == 0 ? front_leader(o, r, c.lane, o.pos_m) : vehicle_leader(o.pos_m, vehicles_[current[k - 1]]));
    }
    const double incentive = (a_c_new - a_c_old) + cfg_.mobil.politeness * ((a_n_new - a_n_old) + (a_o_new - a_o_old));
    return incentive > cfg_.mobil.threshold;
  }

  // ---- scenario setup ------------------------------------------------------

  /// Puts a vehicle straight onto a lane (scenario setup and tests). Throws if
  /// it would overlap another vehicle.
  std::size_t place_vehicle(const Placement& p) {
    Vehicle v;
    v.id = p.id;
    for (RoadId rid : p.route) {
      const auto r = net_->road_index(rid);
      if (!r) throw std::invalid_argument("place_vehicle: unknown road " + std::to_string(rid));
      v.route.push_back(*r);
    }
    if (p.route_pos >= v.route.size()) throw std::invalid_argument("place_vehicle: route_pos out of range");
    v.route_pos = p.route_pos;
    v.lane = p.lane;
    v.pos_m = p.pos_m;
    v.speed_mps = p.speed_mps;
    v.depart_time_s = time_s();
    v.status = VehicleStatus::Active;
    const std::size_t r = v.road();
    if (p.lane < 0 || p.lane >= static_cast<int>(lanes_[r].size())) throw std::invalid_argument("place_vehicle: bad lane");
    if (p.pos_m < 0.0 || p.pos_m > net_->roads()[r].length_m) throw std::invalid_argument("place_vehicle: bad position");
    for (std::uint32_t o : lanes_[r][static_cast<std::size_t>(p.lane)]) {
      if (std::abs(vehicles_[o].pos_m - p.pos_m) <= cfg_.vehicle_length_m) {
        throw std::invalid_argument("place_vehicle: overlaps vehicle " + std::to_string(vehicles_[o].id));
      }
    }
    const auto idx = static_cast<std::uint32_t>(vehicles_.size());
    vehicles_.push_back(std::move(v));
    insert_sorted(idx, r, p.lane);
    order_.insert(std::upper_bound(order_.begin(), order_.end(), idx,
                                   [&](std::uint32_t a, std::uint32_t b) { return vehicles_[a].id < vehicles_[b].id; }),
                  idx);
    ++departed_;
    ++in_network_;
    return idx;
  }

 private:
  struct Leader {
    double gap = kFreeRoad;
    double speed = 0.0;
  };

  int first_present(std::size_t i) const {
    for (int s = 0; s < 4; ++s) {
      if (net_->intersections()[i].phases[static_cast<std::size_t>(s)].present) return s;
    }
    return 0;
  }

  double desired_speed(std::size_t road) const {
    return cfg_.idm.v0_from_speed_limit ? net_->roads()[road].speed_limit_mps : cfg_.idm.v0_mps;
  }

  int slow_on_lane(std::size_t road, int lane) const {
    int n = 0;
    for (std::uint32_t v : lanes_[road][static_cast<std::size_t>(lane)]) {
      n += vehicles_[v].speed_mps < cfg_.queue_speed_threshold_mps ? 1 : 0;
    }
    return n;
  }


  Leader vehicle_leader(double pos, const Vehicle& leader) const {
    return {leader.pos_m - pos - cfg_.vehicle_length_m, leader.speed_mps};
  }

  bool front_blocked(const Vehicle& v, std::size_t road, int lane) const {
    const auto next = v.route_at(1);
    if (!next) return false;
    return !net_->lane_serves(road, lane, next) || !movement_open(road, *next);
  }

  /// Least-occupied lane of `road` that serves the continuation onto `after`.
  int entry_lane(std::size_t road, std::optional<std::size_t> after) const {
    int best = -1;
    std::size_t best_count = 0;
    for (std::size_t l = 0; l < lanes_[road].size(); ++l) {
      if (!net_->lane_serves(road, static_cast<int>(l), after)) continue;
      if (best < 0 || lanes_[road][l].size() < best_count) {
        best = static_cast<int>(l);
        best_count = lanes_[road][l].size();
      }
    }
    return best < 0 ? 0 : best;
  }

  /// Leader seen by the first vehicle of a lane: the stop line when its
  /// movement is closed, else the last vehicle on the entry lane downstream.
  Leader front_leader(const Vehicle& v, std::size_t road, int lane, double pos) const {
    const auto next = v.route_at(1);
    if (!next) return {};
    const double to_line = net_->roads()[road].length_m - pos;
    if (front_blocked(v, road, lane)) return {std::max(to_line, kMinObstacleGap), 0.0};
    const int target = entry_lane(*next, v.route_at(2));
    const auto& q = lanes_[*next][static_cast<std::size_t>(target)];
    if (q.empty()) return {};
    const Vehicle& back = vehicles_[q.back()];
    return {to_line + back.pos_m - cfg_.vehicle_length_m, back.speed_mps};
  }

  bool transfer(std::uint32_t idx, double overflow) {
    Vehicle& v = vehicles_[idx];
    const std::size_t next = *v.route_at(1);
    const int lane = entry_lane(next, v.route_at(2));
    auto& q = lanes_[next][static_cast<std::size_t>(lane)];
    double pos = overflow;
    if (!q.empty()) {
      const double room = floor_pos_[q.back()] - cfg_.vehicle_length_m - kGapEps;
      if (room < 0.0) return false;
      pos = std::min(pos, room);
    }
    pos = std::min(pos, net_->roads()[next].length_m);
    v.route_pos += 1;
    v.lane = lane;
    v.pos_m = pos;
    floor_pos_[idx] = pos;
    q.push_back(idx);
    return true;
  }

  void insert_sorted(std::uint32_t idx, std::size_t road, int lane) {
    auto& q = lanes_[road][static_cast<std::size_t>(lane)];
    const double pos = vehicles_[idx].pos_m;
    auto it = std::find_if(q.begin(), q.end(), [&](std::uint32_t o) { return vehicles_[o].pos_m < pos; });
    q.insert(it, idx);
    if (floor_pos_.size() < vehicles_.size()) floor_pos_.resize(vehicles_.size(), 0.0);
  }

  void insert_departures(double t) {
    if (floor_pos_.size() < vehicles_.size()) floor_pos_.resize(vehicles_.size(), 0.0);
    while (next_due_ < schedule_.size() && vehicles_[schedule_[next_due_]].depart_time_s <= t) {
      vehicles_[schedule_[next_due_]].status = VehicleStatus::Waiting;
      waiting_.push_back(schedule_[next_due_]);
      ++next_due_;
      ++departed_;
    }
    std::erase_if(waiting_, [&](std::uint32_t idx) { return try_insert(idx); });
  }

  bool try_insert(std::uint32_t idx) {
    Vehicle& v = vehicles_[idx];
    const std::size_t road = v.route[0];
    const auto after = v.route_at(1);
    const double v0 = desired_speed(road);
    int best = -1;
    std::size_t best_count = 0;
    double best_speed = 0.0;
    for (std::size_t l = 0; l < lanes_[road].size(); ++l) {
      if (!net_->lane_serves(road, static_cast<int>(l), after)) continue;
      const auto& q = lanes_[road][l];
      double speed = v0;
      if (!q.empty()) {
        const Vehicle& back = vehicles_[q.back()];
        const double gap = back.pos_m - cfg_.vehicle_length_m;
        if (gap < cfg_.idm.s0_m) continue;
        speed = std::min({v0, back.speed_mps, std::max(0.0, (gap - cfg_.idm.s0_m) / cfg_.idm.T_s)});
      }
      if (best < 0 || q.size() < best_count) {
        best = static_cast<int>(l);
        best_count = q.size();
        best_speed = speed;
      }
    }
    if (best < 0) return false;
    v.status = VehicleStatus::Active;
    v.lane = best;
    v.pos_m = 0.0;
    v.speed_mps = best_speed;
    lanes_[road][static_cast<std::size_t>(best)].push_back(idx);
    ++in_network_;
    return true;
  }

  void lane_changes() {
    for (std::uint32_t idx : order_) {
      Vehicle& v = vehicles_[idx];
      if (v.status != VehicleStatus::Active) continue;
      const std::size_t r = v.road();
      const int nlanes = static_cast<int>(lanes_[r].size());
      if (nlanes < 2) continue;
      const auto next = v.route_at(1);
      const bool mandatory = !net_->lane_serves(r, v.lane, next);
      if (!mandatory && !cfg_.mobil.enabled) continue;
      int chosen = -1;
      if (mandatory) {
        // step toward the nearest serving lane
        int best_dist = 99;
        for (int l = 0; l < nlanes; ++l) {
          if (net_->lane_serves(r, l, next) && std::abs(l - v.lane) < best_dist) {
            best_dist = std::abs(l - v.lane);
            chosen = l < v.lane ? v.lane - 1 : v.lane + 1;
          }
        }
        if (chosen >= 0 && !net_->lane_serves(r, chosen, next)) {
          // intermediate lane: only the safety part applies
          if (!intermediate_safe(idx, chosen)) chosen = -1;
        } else if (chosen >= 0 && !mobil_check(idx, chosen)) {
          chosen = -1;
        }
      } else {
        for (int target : {v.lane - 1, v.lane + 1}) {
          if (mobil_check(idx, target)) {
            chosen = target;
            break;
          }
        }
      }
      if (chosen < 0) continue;
      auto& from = lanes_[r][static_cast<std::size_t>(v.lane)];
      from.erase(std::find(from.begin(), from.end(), idx));
      v.lane = chosen;
      insert_sorted(idx, r, chosen);
      ++diag_.lane_changes;
    }
  }

  bool intermediate_safe(std::uint32_t idx, int lane) const {
    const Vehicle& c = vehicles_[idx];
    for (std::uint32_t o : lanes_[c.road()][static_cast<std::size_t>(lane)]) {
      const Vehicle& w = vehicles_[o];
      const double gap = w.pos_m >= c.pos_m ? w.pos_m - c.pos_m - cfg_.vehicle_length_m
                                            : c.pos_m - w.pos_m - cfg_.vehicle_length_m;
      if (gap <= cfg_.idm.s0_m) return false;
    }
    return true;
  }

  std::shared_ptr<const RoadNetwork> net_;
  SimConfig cfg_;
  std::vector<Vehicle> vehicles_;
  std::vector<std::uint32_t> order_;     // by vehicle id
  std::vector<std::uint32_t> schedule_;  // by departure time
  std::size_t next_due_ = 0;
  std::vector<std::uint32_t> waiting_;  // due but not yet inserted
  std::vector<std::vector<std::deque<std::uint32_t>>> lanes_;
  std::vector<double> accel_;
  std::vector<double> floor_pos_;
  std::vector<SignalState> signals_;
  std::vector<std::array<std::vector<std::pair<std::size_t, int>>, 4>> slot_lanes_;
  std::vector<std::vector<std::pair<std::size_t, int>>> incoming_lanes_;
  std::vector<double> interval_queue_sum_;
  std::vector<double> last_interval_queue_;
  std::vector<std::vector<double>> queue_history_;
  Diagnostics diag_;
  long tick_ = 0;
  int departed_ = 0;
  int finished_ = 0;
  int in_network_ = 0;
};

}  // namespace citylight::sim
