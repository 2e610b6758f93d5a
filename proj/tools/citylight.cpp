// Command-line front end: scenario generation, rule baselines, training,
// zero-shot transfer, ablations, grouping and single-episode evaluation.

#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "citylight/harness/experiment.hpp"

namespace fs = std::filesystem;
using namespace citylight;

namespace {

struct Options {
  std::string network, demand, config, trainer_config, checkpoint, out, controller, grouping;
  std::optional<std::uint64_t> seed;
  std::optional<int> episodes;
  std::optional<double> alpha;
  bool quiet = false;
  // generate only
  std::optional<int> rows, cols, trips;
  std::optional<double> three_arm;
};

harness::ExperimentConfig load_config(const Options& o) {
  harness::ExperimentConfig c;
  if (!o.config.empty()) c = harness::experiment_config_from_json(detail::read_json_file(o.config));
  if (!o.trainer_config.empty()) c.trainer = train::trainer_config_from_json(detail::read_json_file(o.trainer_config));
  if (o.seed) c.seeds = {*o.seed};
  if (o.episodes) c.trainer.episodes = *o.episodes;
  if (o.alpha) {
    c.alphas = {*o.alpha};
    c.trainer.alpha = *o.alpha;
  }
  if (!o.grouping.empty()) c.grouping = o.grouping;
  if (!o.quiet) c.log = &std::cerr;
  c.validate();
  return c;
}

harness::Problem load_problem(const Options& o) {
  if (o.network.empty() || o.demand.empty()) throw std::invalid_argument("--network and --demand are required");
  return harness::load_problem(o.network, o.demand);
}

void print_summary(const harness::ExperimentReport& r, const harness::ReportFiles& files) {
  for (const auto& a : r.aggregates()) {
    std::cout << a.variant << ": throughput " << a.throughput_mean << " +- " << a.throughput_std << ", att "
              << a.att_mean << " +- " << a.att_std << " s (" << a.runs << " runs)\n";
  }
  if (r.extra.contains("best_alpha")) std::cout << "best alpha: " << r.extra["best_alpha"] << '\n';
  std::cout << "report: " << files.csv.string() << ", " << files.json.string();
  if (!files.curves.empty()) std::cout << ", " << files.curves.string();
  std::cout << '\n';
}

fs::path report_path(const Options& o, const char* fallback) { return o.out.empty() ? fs::path(fallback) : fs::path(o.out); }

int cmd_generate(const Options& o) {
  harness::ScenarioSpec spec;
  if (!o.config.empty()) spec = harness::scenario_from_json(detail::read_json_file(o.config));
  if (o.rows) spec.rows = *o.rows;
  if (o.cols) spec.cols = *o.cols;
  if (o.trips) spec.trip_count = *o.trips;
  if (o.three_arm) spec.three_arm_fraction = *o.three_arm;
  if (o.seed) spec.seed = *o.seed;
  const auto sc = harness::generate_scenario(spec);
  const fs::path dir = o.out.empty() ? fs::path("scenario") : fs::path(o.out);
  harness::write_scenario(sc, dir);
  write_text_file(dir / "spec.json", harness::to_json(spec).dump(2) + "\n");
  std::cout << "wrote " << (dir / "network.json").string() << " and " << (dir / "demand.json").string() << " ("
            << sc.network->intersections().size() << " intersections, " << sc.demand.trips.size() << " trips)\n";
  return 0;
}

int cmd_experiment(harness::Mode mode, const Options& o) {
  auto cfg = load_config(o);
  const fs::path out = report_path(o, (std::string(harness::to_string(mode)) + "_report").c_str());
  if (mode == harness::Mode::Train || mode == harness::Mode::Ablation || mode == harness::Mode::Grouping) {
    if (!o.checkpoint.empty()) cfg.checkpoint_dir = o.checkpoint;
    else if (cfg.checkpoint_dir.empty()) cfg.checkpoint_dir = out.string() + "_checkpoints";
  }
  harness::ExperimentInputs in;
  if (mode == harness::Mode::Transfer) {
    if (o.checkpoint.empty()) throw std::invalid_argument("transfer needs --checkpoint");
    // one checkpoint, labelled with the first configured seed
    cfg.seeds.resize(1);
    in.transfer.push_back({cfg.seeds.front(), o.checkpoint, load_problem(o)});
  } else {
    in.problem = load_problem(o);
  }
  const auto report = harness::run_experiment(mode, in, cfg);
  print_summary(report, harness::emit_report(report, out));
  return 0;
}

int cmd_evaluate(const Options& o) {
  const auto cfg = load_config(o);
  const auto p = load_problem(o);
  nlohmann::json result;
  sim::SimMetrics m;
  if (!o.checkpoint.empty()) {
    if (!o.controller.empty()) throw std::invalid_argument("pass either --checkpoint or --controller, not both");
    auto loaded = train::load_policy_set(o.checkpoint);
    const std::size_t n = p.network->intersections().size();
    auto ps = loaded.groups() == 1 ? train::universal_for(loaded, n) : std::move(loaded);
    if (ps.assignment.size() != n) throw std::invalid_argument("checkpoint grouping does not match the network");
    m = train::evaluate(ps, p.network, p.demand, cfg.sim);
    result["policy"] = o.checkpoint;
  } else {
    const auto kind = control::parse_controller(o.controller.empty() ? "fixed_time" : o.controller);
    m = harness::run_controller(p, cfg.sim, kind);
    result["policy"] = control::to_string(kind);
  }
  result["throughput"] = m.throughput;
  result["att_s"] = m.att_s;
  result["att_defined"] = m.att_defined;
  result["departed"] = m.departed;
  result["in_network"] = m.in_network;
  result["deferred"] = m.deferred;
  const std::string text = result.dump(2) + "\n";
  if (!o.out.empty()) write_text_file(o.out, text);
  std::cout << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  nn::tune_allocator();
  CLI::App app{"citylight: traffic signal control experiments"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub, bool scenario) {
    if (scenario) {
      sub->add_option("--network", o.network, "network JSON")->check(CLI::ExistingFile);
      sub->add_option("--demand", o.demand, "demand JSON")->check(CLI::ExistingFile);
    }
    sub->add_option("--config", o.config, "experiment config JSON (scenario spec JSON for generate)")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "seed (replaces the configured seed list)");
    sub->add_option("--out", o.out, "output path");
    sub->add_flag("--quiet", o.quiet, "suppress progress on stderr");
  };
  auto training = [&](CLI::App* sub) {
    sub->add_option("--trainer-config", o.trainer_config, "trainer config JSON")->check(CLI::ExistingFile);
    sub->add_option("--episodes", o.episodes, "training episodes")->check(CLI::NonNegativeNumber);
    sub->add_option("--alpha", o.alpha, "neighborhood reward weight")->check(CLI::Range(0.0, 1.0));
  };

  auto* gen = app.add_subcommand("generate", "write a synthetic grid scenario");
  common(gen, false);
  gen->add_option("--rows", o.rows)->check(CLI::PositiveNumber);
  gen->add_option("--cols", o.cols)->check(CLI::PositiveNumber);
  gen->add_option("--trips", o.trips)->check(CLI::NonNegativeNumber);
  gen->add_option("--three-arm", o.three_arm)->check(CLI::Range(0.0, 1.0));

  auto* base = app.add_subcommand("baseline", "FixedTime, MaxPressure and AdjustedMaxPressure");
  common(base, true);
  auto* tr = app.add_subcommand("train", "train over the alpha grid and seeds");
  common(tr, true);
  training(tr);
  tr->add_option("--checkpoint", o.checkpoint, "checkpoint directory");
  auto* tf = app.add_subcommand("transfer", "zero-shot evaluation of a checkpoint");
  common(tf, true);
  tf->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  auto* ab = app.add_subcommand("ablate", "train every ablation switch");
  common(ab, true);
  training(ab);
  ab->add_option("--checkpoint", o.checkpoint, "checkpoint directory");
  auto* gr = app.add_subcommand("grouping", "separate stores per group versus one universal store");
  common(gr, true);
  training(gr);
  gr->add_option("--scheme", o.grouping, "topology, horizontal, vertical or quarter");
  gr->add_option("--checkpoint", o.checkpoint, "checkpoint directory");
  auto* ev = app.add_subcommand("evaluate", "one greedy or rule-based episode");
  common(ev, true);
  ev->add_option("--checkpoint", o.checkpoint, "checkpoint file");
  ev->add_option("--controller", o.controller, "fixed_time, max_pressure or adjusted_max_pressure");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    if (gen->parsed()) return cmd_generate(o);
    if (base->parsed()) return cmd_experiment(harness::Mode::Baseline, o);
    if (tr->parsed()) return cmd_experiment(harness::Mode::Train, o);
    if (tf->parsed()) return cmd_experiment(harness::Mode::Transfer, o);
    if (ab->parsed()) return cmd_experiment(harness::Mode::Ablation, o);
    if (gr->parsed()) return cmd_experiment(harness::Mode::Grouping, o);
    if (ev->parsed()) return cmd_evaluate(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
