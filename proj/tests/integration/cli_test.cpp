#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "citylight/harness/experiment.hpp"

namespace fs = std::filesystem;
using namespace citylight;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / "citylight_cli_test";
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  int run(const std::string& args) const {
    const std::string cmd = "cd '" + dir_.string() + "' && '" CITYLIGHT_CLI "' " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  fs::path dir_;
};

const std::string kScenario = " --network sc/network.json --demand sc/demand.json";

}  // namespace

TEST_F(Cli, FullPipeline) {
  ASSERT_EQ(run("generate --rows 2 --cols 3 --trips 200 --three-arm 0.5 --seed 8 --out sc"), 0);
  ASSERT_TRUE(fs::exists(dir_ / "sc/network.json"));
  ASSERT_EQ(run("baseline" + kScenario + " --out base"), 0);
  const auto base = harness::load_report(dir_ / "base.json");
  EXPECT_EQ(base.aggregates().size(), 3u);

  // rows written to disk equal a direct in-memory run on the loaded files
  const auto p = harness::load_problem(dir_ / "sc/network.json", dir_ / "sc/demand.json");
  const auto ft = harness::run_controller(p, {}, control::ControllerKind::FixedTime);
  EXPECT_EQ(base.rows_of("fixed_time").front().throughput, ft.throughput);

  ASSERT_EQ(run("train" + kScenario + " --episodes 1 --alpha 0.1 --seed 3 --out tr --quiet"), 0);
  const fs::path ckpt = dir_ / "tr_checkpoints/citylight_a0.1_s3.json";
  ASSERT_TRUE(fs::exists(ckpt));
  EXPECT_TRUE(fs::exists(dir_ / "tr_curves.csv"));
  const auto tr = harness::load_report(dir_ / "tr.json");

  ASSERT_EQ(run("transfer" + kScenario + " --checkpoint tr_checkpoints/citylight_a0.1_s3.json --seed 3 --out tf"), 0);
  const auto tf = harness::load_report(dir_ / "tf.json");
  EXPECT_EQ(tf.rows_of("transfer").front().throughput, tr.rows.front().throughput);
  EXPECT_EQ(tf.rows_of("transfer").front().att_s, tr.rows.front().att_s);

  ASSERT_EQ(run("evaluate" + kScenario + " --checkpoint tr_checkpoints/citylight_a0.1_s3.json --out ev.json"), 0);
  const auto ev = detail::read_json_file(dir_ / "ev.json");
  EXPECT_EQ(ev.at("throughput").get<int>(), tr.rows.front().throughput);
  ASSERT_EQ(run("evaluate" + kScenario + " --controller max_pressure --out mp.json"), 0);
  EXPECT_EQ(detail::read_json_file(dir_ / "mp.json").at("throughput").get<int>(),
            base.rows_of("max_pressure").front().throughput);

  ASSERT_EQ(run("grouping" + kScenario + " --episodes 1 --seed 0 --scheme vertical --out gr --quiet"), 0);
  const auto gr = harness::load_report(dir_ / "gr.json");
  EXPECT_EQ(gr.rows_of("universal").size(), 1u);
  EXPECT_EQ(gr.rows_of("separate_vertical").size(), 1u);
  ASSERT_EQ(run("ablate" + kScenario + " --episodes 1 --seed 0 --out ab --quiet"), 0);
  EXPECT_EQ(harness::load_report(dir_ / "ab.json").aggregates().size(), 5u);
}

TEST_F(Cli, ErrorsExitNonzero) {
  ASSERT_EQ(run("generate --rows 2 --cols 2 --trips 10 --out sc"), 0);
  EXPECT_NE(run("transfer" + kScenario + " --checkpoint missing.json"), 0);
  EXPECT_NE(run("evaluate" + kScenario + " --controller colight"), 0);
  EXPECT_NE(run("baseline --network sc/network.json"), 0);
  EXPECT_NE(run("generate --rows 1 --out bad"), 0);
  EXPECT_NE(run("train" + kScenario + " --alpha 2"), 0);
  EXPECT_NE(run(""), 0);
}
