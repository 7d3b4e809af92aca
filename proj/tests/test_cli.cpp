#include <gtest/gtest.h>

#include "support/cli.hpp"
#include "support/synthetic.hpp"
#include "support/tempdir.hpp"
#include "uwf/quality.hpp"
#include "uwf/training.hpp"

using namespace uwf;
using uwf::testing::read_csv;
using uwf::testing::run_cli;
using uwf::testing::TempDir;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::filesystem::create_directories(dir / "data");
    for (int i = 0; i < 3; ++i)
      save_image(uwf::testing::structured_image(40, 10 + i), dir / "data" / ("img" + std::to_string(i) + ".png"));
    std::ofstream os(dir / "train.cfg");
    os << "# tiny run\n"
       << "data_dir = " << (dir / "data").string() << "\n"
       << "out_dir = " << (dir / "run").string() << "\n"
       << "crop = 32\nbatch = 1\niters_fred = 2\niters_rice = 2\n"
       << "fred.base_channels = 8\nrice.channels = 8\nrice.cpu_blocks = 1\n";
  }

  void train_both() {
    ASSERT_EQ(run_cli({"train", "--stage", "fred", "--config", (dir / "train.cfg").string()}), 0);
    ASSERT_EQ(run_cli({"train", "--stage", "rice", "--config", (dir / "train.cfg").string()}), 0);
  }

  TempDir dir;
};

}  // namespace

TEST_F(CliTest, TrainWritesCheckpointsAndLogs) {
  train_both();
  for (const char* f : {"fred.ckpt", "rice.ckpt", "fred_loss.csv", "rice_loss.csv"})
    EXPECT_TRUE(std::filesystem::exists(dir / "run" / f)) << f;
  const auto rows = read_csv(dir / "run" / "fred_loss.csv");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"iteration", "content", "msfr", "perceptual", "total"}));
}

TEST_F(CliTest, SetOverridesConfig) {
  ASSERT_EQ(run_cli({"train", "--stage", "fred", "--config", (dir / "train.cfg").string(), "--set", "iters_fred=4",
                     "--set", "out_dir=" + (dir / "other").string()}),
            0);
  EXPECT_EQ(read_csv(dir / "other" / "fred_loss.csv").size(), 5u);
  EXPECT_FALSE(std::filesystem::exists(dir / "run"));
}

TEST_F(CliTest, TrainConfigErrors) {
  const auto cfg = (dir / "train.cfg").string();
  EXPECT_EQ(run_cli({"train", "--stage", "fred", "--config", (dir / "nope.cfg").string()}), 2);
  EXPECT_EQ(run_cli({"train", "--stage", "fred", "--config", cfg, "--set", "bogus=1"}), 2);
  EXPECT_EQ(run_cli({"train", "--stage", "fred", "--config", cfg, "--set", "crop=30"}), 2);
  EXPECT_EQ(run_cli({"train", "--stage", "blue", "--config", cfg}), 2);
  EXPECT_EQ(run_cli({"train", "--stage", "rice", "--config", cfg, "--fred", (dir / "missing.ckpt").string()}), 3);
  EXPECT_EQ(run_cli({"frobnicate"}), 2);
}

TEST_F(CliTest, EnhanceDirectoryAndSingleFile) {
  train_both();
  const auto fred = (dir / "run" / "fred.ckpt").string(), rice = (dir / "run" / "rice.ckpt").string();
  ASSERT_EQ(run_cli({"enhance", "--input", (dir / "data").string(), "--output", (dir / "out").string(), "--fred", fred,
                     "--rice", rice, "--save-intermediate", "--jobs", "2"}),
            0);
  for (int i = 0; i < 3; ++i) {
    const std::string stem = "img" + std::to_string(i);
    for (const char* suffix : {".png", ".deblur.png", ".ratio.png"}) {
      const auto p = dir / "out" / (stem + suffix);
      ASSERT_TRUE(std::filesystem::exists(p)) << p;
      const auto img = load_image(p);
      EXPECT_EQ(img.height, 40);
      EXPECT_EQ(img.width, 40);
    }
  }
  ASSERT_EQ(run_cli({"enhance", "--input", (dir / "data" / "img1.png").string(), "--output", (dir / "one").string(),
                     "--fred", fred, "--rice", rice}),
            0);
  EXPECT_EQ(load_image(dir / "one" / "img1.png").data, load_image(dir / "out" / "img1.png").data);
  EXPECT_FALSE(std::filesystem::exists(dir / "one" / "img1.ratio.png"));
}

TEST_F(CliTest, EnhanceBypassReproducesInput) {
  ASSERT_EQ(run_cli({"enhance", "--input", (dir / "data").string(), "--output", (dir / "out").string(), "--no-fred",
                     "--no-rice"}),
            0);
  for (int i = 0; i < 3; ++i) {
    const std::string name = "img" + std::to_string(i) + ".png";
    EXPECT_EQ(load_image(dir / "out" / name).data, load_image(dir / "data" / name).data);
  }
}

TEST_F(CliTest, EnhanceErrors) {
  TempDir empty;
  EXPECT_EQ(run_cli({"enhance", "--input", empty.path().string(), "--output", (dir / "out").string(), "--no-fred",
                     "--no-rice"}),
            2);
  EXPECT_EQ(run_cli({"enhance", "--input", (dir / "data").string(), "--output", (dir / "out").string(), "--no-rice"}),
            2);
  {
    std::ofstream os(dir / "junk.ckpt");
    os << "not a checkpoint\n";
  }
  EXPECT_EQ(run_cli({"enhance", "--input", (dir / "data").string(), "--output", (dir / "out").string(), "--fred",
                     (dir / "junk.ckpt").string(), "--no-rice"}),
            2);
}

TEST_F(CliTest, EvaluateReport) {
  ASSERT_EQ(run_cli({"evaluate", "--dir", (dir / "data").string(), "--report", (dir / "rep.csv").string(), "--plot",
                     (dir / "hist.png").string()}),
            0);
  const auto rows = read_csv(dir / "rep.csv");
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"path", "sharpness", "illum_uniformity", "entropy"}));
  EXPECT_EQ(rows[4][0], "__mean__");
  EXPECT_EQ(rows[5][0], "__std__");
  double mean = 0;
  for (int r = 1; r <= 3; ++r) {
    const auto direct = assess(load_image(dir / "data" / rows[r][0]));
    EXPECT_NEAR(std::stod(rows[r][1]), direct.sharpness, 1e-6 * (1 + direct.sharpness));
    EXPECT_NEAR(std::stod(rows[r][3]), direct.entropy, 1e-6);
    mean += std::stod(rows[r][3]) / 3;
  }
  EXPECT_NEAR(std::stod(rows[4][3]), mean, 1e-6);
  const auto plot = load_image(dir / "hist.png");
  EXPECT_GT(plot.width, 0);
}

TEST_F(CliTest, EvaluateBaselineDeltas) {
  ASSERT_EQ(run_cli({"evaluate", "--dir", (dir / "data").string(), "--baseline", (dir / "data").string(), "--report",
                     (dir / "rep.csv").string()}),
            0);
  const auto rows = read_csv(dir / "rep.csv");
  ASSERT_EQ(rows[0].size(), 7u);
  EXPECT_EQ(rows[0][4], "delta_sharpness");
  for (int r = 1; r <= 3; ++r)
    for (int c = 4; c < 7; ++c) EXPECT_EQ(std::stod(rows[r][c]), 0.0);
}

TEST_F(CliTest, EvaluateEmptyDir) {
  TempDir empty;
  EXPECT_EQ(run_cli({"evaluate", "--dir", empty.path().string(), "--report", (dir / "rep.csv").string()}), 2);
}
