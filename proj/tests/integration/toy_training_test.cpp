#include <gtest/gtest.h>

#include "citylight/harness/experiment.hpp"

using namespace citylight;

// 2x2 grid where FixedTime leaves about a tenth of the trips unfinished.
TEST(ToyGrid, ThreeHundredEpisodesReachFixedTime) {
  harness::ScenarioSpec spec;
  spec.rows = 2;
  spec.cols = 2;
  spec.trip_count = 3500;
  spec.seed = 4;
  const auto sc = harness::generate_scenario(spec);
  const auto ft = harness::run_controller(harness::problem_of(sc), {}, control::ControllerKind::FixedTime);
  ASSERT_LT(ft.throughput, spec.trip_count);

  train::TrainerConfig cfg;
  cfg.episodes = 300;
  cfg.minibatch_count = 16;
  cfg.seed = 0;
  const auto res = train::train(sc.network, sc.demand, {}, cfg);
  ASSERT_EQ(res.curve.size(), 301u);
  const auto& last = res.curve.back();
  RecordProperty("fixed_time_throughput", ft.throughput);
  RecordProperty("final_throughput", last.eval_throughput);
  RecordProperty("best_throughput", res.best_eval.throughput);
  EXPECT_GE(last.eval_throughput, ft.throughput);
  EXPECT_GE(res.best_eval.throughput, last.eval_throughput);
}
