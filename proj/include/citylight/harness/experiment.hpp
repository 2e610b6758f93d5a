#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "citylight/control/baselines.hpp"
#include "citylight/harness/scenario.hpp"
#include "citylight/sim/config_io.hpp"
#include "citylight/train/trainer.hpp"

namespace citylight::harness {

enum class Mode { Baseline, Train, Transfer, Ablation, Grouping };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Baseline: return "baseline";
    case Mode::Train: return "train";
    case Mode::Transfer: return "transfer";
    case Mode::Ablation: return "ablation";
    case Mode::Grouping: return "grouping";
  }
  return "?";
}

inline Mode parse_mode(std::string_view s) {
  for (Mode m : {Mode::Baseline, Mode::Train, Mode::Transfer, Mode::Ablation, Mode::Grouping}) {
    if (s == to_string(m)) return m;
  }
  if (s == "ablate") return Mode::Ablation;
  throw std::invalid_argument("unknown experiment mode '" + std::string(s) + "'");
}

// ---- reports ------------------------------------------------------------------------------

struct RunRow {
  std::string variant;
  std::uint64_t seed = 0;
  int throughput = 0;
  double att_s = 0.0;
  int departed = 0;
  int best_episode = -1;  // trained rows only; -1 is the initialization
};

struct Aggregate {
  std::string variant;
  std::size_t runs = 0;
  double throughput_mean = 0.0;
  double throughput_std = 0.0;  // sample std (n - 1); 0 for a single run
  double att_mean = 0.0;
  double att_std = 0.0;
};

struct CurveRecord {
  std::string variant;
  std::uint64_t seed = 0;
  std::vector<train::CurvePoint> points;
};

struct ExperimentReport {
  std::string mode;
  std::vector<RunRow> rows;
  std::vector<CurveRecord> curves;
  nlohmann::json extra = nlohmann::json::object();

  /// One aggregate per variant, in order of first appearance.
  std::vector<Aggregate> aggregates() const {
    std::vector<Aggregate> out;
    std::vector<std::vector<const RunRow*>> members;
    for (const auto& r : rows) {
      auto it = std::find_if(out.begin(), out.end(), [&](const Aggregate& a) { return a.variant == r.variant; });
      if (it == out.end()) {
        out.push_back({r.variant});
        members.emplace_back();
        it = std::prev(out.end());
      }
      members[static_cast<std::size_t>(it - out.begin())].push_back(&r);
    }
    for (std::size_t v = 0; v < out.size(); ++v) {
      const auto& m = members[v];
      const double n = static_cast<double>(m.size());
      double tp = 0.0, att = 0.0;
      for (const RunRow* r : m) {
        tp += r->throughput;
        att += r->att_s;
      }
      out[v].runs = m.size();
      out[v].throughput_mean = tp / n;
      out[v].att_mean = att / n;
      if (m.size() > 1) {
        double vt = 0.0, va = 0.0;
        for (const RunRow* r : m) {
          vt += (r->throughput - out[v].throughput_mean) * (r->throughput - out[v].throughput_mean);
          va += (r->att_s - out[v].att_mean) * (r->att_s - out[v].att_mean);
        }
        out[v].throughput_std = std::sqrt(vt / (n - 1.0));
        out[v].att_std = std::sqrt(va / (n - 1.0));
      }
    }
    return out;
  }

  std::optional<Aggregate> aggregate(std::string_view variant) const {
    for (auto& a : aggregates()) {
      if (a.variant == variant) return a;
    }
    return std::nullopt;
  }

  std::vector<RunRow> rows_of(std::string_view variant) const {
    std::vector<RunRow> out;
    for (const auto& r : rows) {
      if (r.variant == variant) out.push_back(r);
    }
    return out;
  }

  /// Appends another report's rows and curves; extras are merged under its mode.
  void merge(const ExperimentReport& other) {
    rows.insert(rows.end(), other.rows.begin(), other.rows.end());
    curves.insert(curves.end(), other.curves.begin(), other.curves.end());
    if (!other.extra.empty()) extra[other.mode.empty() ? "merged" : other.mode] = other.extra;
  }
};

inline nlohmann::json to_json(const ExperimentReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& x : r.rows) {
    rows.push_back({{"variant", x.variant},
                    {"seed", x.seed},
                    {"throughput", x.throughput},
                    {"att_s", x.att_s},
                    {"departed", x.departed},
                    {"best_episode", x.best_episode}});
  }
  nlohmann::json aggs = nlohmann::json::array();
  for (const auto& a : r.aggregates()) {
    aggs.push_back({{"variant", a.variant},
                    {"runs", a.runs},
                    {"throughput_mean", a.throughput_mean},
                    {"throughput_std", a.throughput_std},
                    {"att_mean", a.att_mean},
                    {"att_std", a.att_std}});
  }
  nlohmann::json curves = nlohmann::json::array();
  for (const auto& c : r.curves) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : c.points) pts.push_back({p.episode, p.mean_reward, p.eval_throughput, p.eval_att});
    curves.push_back({{"variant", c.variant}, {"seed", c.seed}, {"points", pts}});
  }
  return {{"mode", r.mode}, {"rows", rows}, {"aggregates", aggs}, {"curves", curves}, {"extra", r.extra}};
}

/// Aggregates are derived data and are recomputed rather than read back.
inline ExperimentReport report_from_json(const nlohmann::json& j) {
  ExperimentReport r;
  r.mode = j.at("mode").get<std::string>();
  for (const auto& x : j.at("rows")) {
    r.rows.push_back({x.at("variant").get<std::string>(), x.at("seed").get<std::uint64_t>(), x.at("throughput").get<int>(),
                      x.at("att_s").get<double>(), x.value("departed", 0), x.value("best_episode", -1)});
  }
  for (const auto& c : j.value("curves", nlohmann::json::array())) {
    CurveRecord rec{c.at("variant").get<std::string>(), c.at("seed").get<std::uint64_t>(), {}};
    for (const auto& p : c.at("points")) {
      rec.points.push_back({p.at(0).get<int>(), p.at(1).get<double>(), p.at(2).get<int>(), p.at(3).get<double>()});
    }
    r.curves.push_back(std::move(rec));
  }
  r.extra = j.value("extra", nlohmann::json::object());
  return r;
}

/// Per-run rows (kind=run) followed by per-variant aggregates (kind=mean).
inline std::string report_csv(const ExperimentReport& r) {
  std::ostringstream out;
  out.precision(10);
  out << "kind,variant,seed,throughput,att_s,throughput_std,att_std\n";
  for (const auto& x : r.rows) out << "run," << x.variant << ',' << x.seed << ',' << x.throughput << ',' << x.att_s << ",,\n";
  for (const auto& a : r.aggregates()) {
    out << "mean," << a.variant << ",," << a.throughput_mean << ',' << a.att_mean << ',' << a.throughput_std << ','
        << a.att_std << '\n';
  }
  return out.str();
}

inline std::string curves_csv(const ExperimentReport& r) {
  std::ostringstream out;
  out.precision(10);
  out << "variant,seed,episode,mean_reward,eval_throughput,eval_att\n";
  for (const auto& c : r.curves) {
    for (const auto& p : c.points) {
      out << c.variant << ',' << c.seed << ',' << p.episode << ',' << p.mean_reward << ',' << p.eval_throughput << ','
          << p.eval_att << '\n';
    }
  }
  return out.str();
}

struct ReportFiles {
  std::filesystem::path csv, json, curves;  // curves is empty when the report has none
};

/// Writes <stem>.csv and <stem>.json, plus <stem>_curves.csv for trained runs.
/// A trailing .csv or .json extension on `path` is ignored.
inline ReportFiles emit_report(const ExperimentReport& r, const std::filesystem::path& path) {
  std::filesystem::path stem = path;
  if (stem.extension() == ".csv" || stem.extension() == ".json") stem.replace_extension();
  ReportFiles f;
  f.csv = stem.string() + ".csv";
  f.json = stem.string() + ".json";
  write_text_file(f.csv, report_csv(r));
  write_text_file(f.json, to_json(r).dump(2) + "\n");
  if (!r.curves.empty()) {
    f.curves = stem.string() + "_curves.csv";
    write_text_file(f.curves, curves_csv(r));
  }
  return f;
}

inline ExperimentReport load_report(const std::filesystem::path& path) { return report_from_json(citylight::detail::read_json_file(path)); }

// ---- configuration ------------------------------------------------------------------------

struct Problem {
  std::shared_ptr<const RoadNetwork> network;
  sim::Demand demand;
};

inline Problem problem_of(const Scenario& sc) { return {sc.network, sc.demand}; }

inline Problem load_problem(const std::filesystem::path& network, const std::filesystem::path& demand) {
  Problem p{std::make_shared<const RoadNetwork>(load_network(network)), sim::load_demand(demand)};
  sim::validate_demand(p.demand, *p.network);
  return p;
}

struct ExperimentConfig {
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<double> alphas{0.1, 0.2, 0.3};
  std::vector<std::string> ablations{"no_relation", "no_connectivity", "no_competition", "alpha0"};
  std::string grouping = "topology";
  // ablation trains the full model too; grouping trains the universal store too
  bool include_reference = true;
  train::TrainerConfig trainer;  // seed is overridden per run; alpha is the ablation/grouping reward weight
  sim::SimConfig sim;
  std::filesystem::path checkpoint_dir;  // empty: checkpoints are not written
  std::ostream* log = nullptr;

  void validate() const {
    if (seeds.empty()) throw std::invalid_argument("ExperimentConfig: seeds must not be empty");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
      throw std::invalid_argument("ExperimentConfig: seeds must be distinct");
    }
    for (double a : alphas) {
      if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("ExperimentConfig: alpha must lie in [0, 1]");
    }
    trainer.validate();
    sim.validate();
  }
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"seeds", c.seeds},
          {"alphas", c.alphas},
          {"ablations", c.ablations},
          {"grouping", c.grouping},
          {"include_reference", c.include_reference},
          {"trainer", train::to_json(c.trainer)},
          {"sim", sim::to_json(c.sim)},
          {"checkpoint_dir", c.checkpoint_dir.string()}};
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  sim::detail::reject_unknown(
      j, {"seeds", "alphas", "ablations", "grouping", "include_reference", "trainer", "sim", "checkpoint_dir"},
      "ExperimentConfig");
  ExperimentConfig c;
  c.seeds = j.value("seeds", c.seeds);
  c.alphas = j.value("alphas", c.alphas);
  c.ablations = j.value("ablations", c.ablations);
  c.grouping = j.value("grouping", c.grouping);
  c.include_reference = j.value("include_reference", c.include_reference);
  if (j.contains("trainer")) c.trainer = train::trainer_config_from_json(j.at("trainer"));
  if (j.contains("sim")) c.sim = sim::sim_config_from_json(j.at("sim"));
  c.checkpoint_dir = j.value("checkpoint_dir", std::string());
  c.validate();
  return c;
}

// ---- policy grouping ----------------------------------------------------------------------

/// Store index per intersection. Schemes: universal, topology (arm count),
/// horizontal (north/south halves), vertical (west/east halves), quarter.
/// Halves split at the median intersection coordinate; empty groups are
/// dropped so ids are dense in [0, groups).
inline std::vector<int> grouping_assignment(const RoadNetwork& net, std::string_view scheme) {
  const auto& isecs = net.intersections();
  const std::size_t n = isecs.size();
  std::vector<int> raw(n, 0);
  auto median = [&](auto coord) {
    std::vector<double> v;
    for (const auto& is : isecs) v.push_back(coord(net.nodes()[is.node]));
    std::sort(v.begin(), v.end());
    return v.empty() ? 0.0 : v[v.size() / 2];
  };
  const double my = median([](const Node& nd) { return nd.y; });
  const double mx = median([](const Node& nd) { return nd.x; });
  for (std::size_t i = 0; i < n; ++i) {
    const Node& nd = net.nodes()[isecs[i].node];
    const int north = nd.y >= my ? 1 : 0;
    const int east = nd.x >= mx ? 1 : 0;
    if (scheme == "universal") raw[i] = 0;
    else if (scheme == "topology") raw[i] = isecs[i].arm_count;
    else if (scheme == "horizontal") raw[i] = north;
    else if (scheme == "vertical") raw[i] = east;
    else if (scheme == "quarter") raw[i] = 2 * north + east;
    else throw std::invalid_argument("unknown grouping scheme '" + std::string(scheme) + "'");
  }
  std::vector<int> keys(raw);
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  for (int& g : raw) g = static_cast<int>(std::lower_bound(keys.begin(), keys.end(), g) - keys.begin());
  return raw;
}

// ---- runs ---------------------------------------------------------------------------------

inline std::string alpha_label(double a) {
  std::ostringstream s;
  s << a;
  return s.str();
}

inline std::filesystem::path checkpoint_path(const std::filesystem::path& dir, const std::string& variant,
                                             std::uint64_t seed) {
  return dir / (variant + "_s" + std::to_string(seed) + ".json");
}

/// Applies an ablation name to a trainer configuration.
inline train::TrainerConfig ablated(train::TrainerConfig c, std::string_view name) {
  if (name == "full") return c;
  if (name == "no_relation") c.policy.relation_projector = false;
  else if (name == "no_connectivity") c.policy.connectivity = false;
  else if (name == "no_competition") c.policy.competitive_aggregator = false;
  else if (name == "alpha0") c.alpha = 0.0;
  else throw std::invalid_argument("unknown ablation '" + std::string(name) + "'");
  return c;
}

struct TrainedRun {
  RunRow row;
  CurveRecord curve;
  train::PolicySet policy;
  std::filesystem::path checkpoint;  // empty when not written
};

/// One training run; the reported row is the greedy evaluation of the kept policy.
inline TrainedRun train_run(const Problem& p, const ExperimentConfig& cfg, train::TrainerConfig tc, const std::string& variant,
                            std::uint64_t seed, std::vector<int> assignment = {}) {
  tc.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  auto res = train::train(p.network, p.demand, cfg.sim, tc, std::move(assignment));
  TrainedRun out;
  out.row = {variant, seed, res.best_eval.throughput, res.best_eval.att_s, res.best_eval.departed, res.best_episode};
  out.curve = {variant, seed, res.curve};
  out.policy = std::move(res.best);
  if (!cfg.checkpoint_dir.empty()) {
    out.checkpoint = checkpoint_path(cfg.checkpoint_dir, variant, seed);
    train::save_policy_set(out.policy, out.checkpoint);
  }
  if (cfg.log) {
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    *cfg.log << "  " << variant << " seed " << seed << ": throughput " << out.row.throughput << ", att " << out.row.att_s
             << " s, best episode " << out.row.best_episode << " (" << sec << " s)" << std::endl;
  }
  return out;
}

inline sim::SimMetrics run_controller(const Problem& p, const sim::SimConfig& sc, control::ControllerKind kind) {
  sim::World w(p.network, p.demand, sc);
  control::RuleController c(kind);
  return control::run_episode(w, c);
}

/// Rule controllers carry no random state, so each is simulated once and the
/// row is repeated for every declared seed.
inline ExperimentReport run_baseline(const Problem& p, const ExperimentConfig& cfg) {
  ExperimentReport r;
  r.mode = "baseline";
  for (auto kind : {control::ControllerKind::FixedTime, control::ControllerKind::MaxPressure,
                    control::ControllerKind::AdjustedMaxPressure}) {
    const auto m = run_controller(p, cfg.sim, kind);
    for (auto s : cfg.seeds) r.rows.push_back({std::string(control::to_string(kind)), s, m.throughput, m.att_s, m.departed});
    if (cfg.log) *cfg.log << "  " << control::to_string(kind) << ": throughput " << m.throughput << ", att " << m.att_s << " s" << std::endl;
  }
  r.extra["trips"] = p.demand.trips.size();
  return r;
}

/// Trains every (alpha, seed) pair and names the alpha with the best mean
/// throughput (ties: lower mean ATT, then the smaller alpha).
inline ExperimentReport run_train(const Problem& p, const ExperimentConfig& cfg) {
  if (cfg.alphas.empty()) throw std::invalid_argument("train mode needs at least one alpha");
  ExperimentReport r;
  r.mode = "train";
  for (double a : cfg.alphas) {
    const std::string variant = "citylight_a" + alpha_label(a);
    auto tc = cfg.trainer;
    tc.alpha = a;
    for (auto s : cfg.seeds) {
      auto run = train_run(p, cfg, tc, variant, s);
      r.rows.push_back(run.row);
      r.curves.push_back(run.curve);
      if (!run.checkpoint.empty()) r.extra["checkpoints"][variant][std::to_string(s)] = run.checkpoint.string();
    }
  }
  std::optional<Aggregate> best;
  double best_alpha = cfg.alphas.front();
  for (double a : cfg.alphas) {
    const auto agg = r.aggregate("citylight_a" + alpha_label(a));
    if (!best || agg->throughput_mean > best->throughput_mean ||
        (agg->throughput_mean == best->throughput_mean && agg->att_mean < best->att_mean)) {
      best = agg;
      best_alpha = a;
    }
  }
  r.extra["best_alpha"] = best_alpha;
  r.extra["best_variant"] = best->variant;
  return r;
}

struct TransferCase {
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint;
  Problem target;
};

inline std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Zero-shot evaluation of a universal checkpoint on another scenario, next
/// to FixedTime on the same scenario. No gradient step is taken; the
/// checkpoint file is re-read afterwards and must be byte-identical.
inline ExperimentReport run_transfer(const std::vector<TransferCase>& cases, const ExperimentConfig& cfg) {
  ExperimentReport r;
  r.mode = "transfer";
  for (const auto& c : cases) {
    if (!std::filesystem::exists(c.checkpoint)) {
      throw std::runtime_error("transfer: missing checkpoint " + c.checkpoint.string());
    }
    const std::string before = read_bytes(c.checkpoint);
    auto ps = train::universal_for(train::policy_set_from_json(nlohmann::json::parse(before)),
                                   c.target.network->intersections().size());
    const auto m = train::evaluate(ps, c.target.network, c.target.demand, cfg.sim);
    const auto ft = run_controller(c.target, cfg.sim, control::ControllerKind::FixedTime);
    const bool unchanged = read_bytes(c.checkpoint) == before;
    if (!unchanged) throw std::logic_error("transfer: checkpoint " + c.checkpoint.string() + " changed during evaluation");
    r.rows.push_back({"transfer", c.seed, m.throughput, m.att_s, m.departed});
    r.rows.push_back({"fixed_time", c.seed, ft.throughput, ft.att_s, ft.departed});
    const std::string key = std::to_string(c.seed);
    r.extra["checkpoint"][key] = c.checkpoint.string();
    r.extra["checkpoint_bytes"][key] = before.size();
    r.extra["checkpoint_unchanged"][key] = unchanged;
    if (cfg.log) {
      *cfg.log << "  seed " << c.seed << ": transfer throughput " << m.throughput << ", fixed_time " << ft.throughput
               << std::endl;
    }
  }
  return r;
}

/// Trains each ablation at cfg.trainer.alpha (and the full model when
/// include_reference is set).
inline ExperimentReport run_ablation(const Problem& p, const ExperimentConfig& cfg) {
  ExperimentReport r;
  r.mode = "ablation";
  std::vector<std::string> variants;
  if (cfg.include_reference) variants.push_back("full");
  variants.insert(variants.end(), cfg.ablations.begin(), cfg.ablations.end());
  for (const auto& v : variants) {
    const auto tc = ablated(cfg.trainer, v);
    for (auto s : cfg.seeds) {
      auto run = train_run(p, cfg, tc, v, s);
      r.rows.push_back(run.row);
      r.curves.push_back(run.curve);
    }
  }
  r.extra["alpha"] = cfg.trainer.alpha;
  return r;
}

/// Separate stores per group versus one universal store.
inline ExperimentReport run_grouping(const Problem& p, const ExperimentConfig& cfg) {
  ExperimentReport r;
  r.mode = "grouping";
  const auto assignment = grouping_assignment(*p.network, cfg.grouping);
  const int groups = assignment.empty() ? 0 : *std::max_element(assignment.begin(), assignment.end()) + 1;
  const std::string separate = "separate_" + cfg.grouping;
  for (auto s : cfg.seeds) {
    if (cfg.include_reference) {
      auto run = train_run(p, cfg, cfg.trainer, "universal", s);
      r.rows.push_back(run.row);
      r.curves.push_back(run.curve);
    }
    auto run = train_run(p, cfg, cfg.trainer, separate, s, assignment);
    r.rows.push_back(run.row);
    r.curves.push_back(run.curve);
  }
  r.extra["scheme"] = cfg.grouping;
  r.extra["groups"] = groups;
  r.extra["assignment"] = assignment;
  r.extra["alpha"] = cfg.trainer.alpha;
  return r;
}

struct ExperimentInputs {
  Problem problem;
  std::vector<TransferCase> transfer;
};

inline ExperimentReport run_experiment(Mode mode, const ExperimentInputs& in, const ExperimentConfig& cfg) {
  cfg.validate();
  nn::tune_allocator();
  if (mode != Mode::Transfer && !in.problem.network) throw std::invalid_argument("experiment: no scenario given");
  switch (mode) {
    case Mode::Baseline: return run_baseline(in.problem, cfg);
    case Mode::Train: return run_train(in.problem, cfg);
    case Mode::Transfer: return run_transfer(in.transfer, cfg);
    case Mode::Ablation: return run_ablation(in.problem, cfg);
    case Mode::Grouping: return run_grouping(in.problem, cfg);
  }
  throw std::logic_error("unreachable experiment mode");
}

// ---- demand calibration -------------------------------------------------------------------

struct Calibration {
  int trip_count = 0;
  int fixed_time_throughput = 0;
  double unfinished_fraction = 0.0;
};

/// Smallest trip count on the grid step, 2*step, ... (up to max_trips) at
/// which FixedTime leaves at least `min_unfinished` of the trips unfinished.
inline Calibration calibrate_trip_count(ScenarioSpec spec, double min_unfinished, int step, int max_trips,
                                        const sim::SimConfig& sc = {}) {
  if (step <= 0 || max_trips < step) throw std::invalid_argument("calibration: bad trip grid");
  Calibration c;
  for (int trips = step; trips <= max_trips; trips += step) {
    spec.trip_count = trips;
    const auto scen = generate_scenario(spec);
    const auto m = run_controller(problem_of(scen), sc, control::ControllerKind::FixedTime);
    c = {trips, m.throughput, 1.0 - static_cast<double>(m.throughput) / trips};
    if (c.unfinished_fraction >= min_unfinished) return c;
  }
  throw std::runtime_error("calibration: FixedTime never reached the unfinished fraction up to " +
                           std::to_string(max_trips) + " trips");
}

}  // namespace citylight::harness
