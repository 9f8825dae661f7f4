#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "crowdnav/config.hpp"
#include "crowdnav/eth_format.hpp"
#include "crowdnav/learned_predictor.hpp"
#include "test_support.hpp"

using namespace crowdnav;
using namespace crowdnav::testing;

namespace {

int cli(const std::string& args, const std::filesystem::path& dir) {
  const std::string cmd = std::string(CROWDNAV_CLI) + " " + args + " > " +
                          (dir / "stdout.txt").string() + " 2> " + (dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_uniform_eth(const std::filesystem::path& path, int frames) {
  EthData d;
  EthTrack t;
  t.ped_id = 1;
  for (int k = 0; k < frames; ++k) {
    t.frames.push_back(k);
    t.positions.emplace_back(0.4 * k, 1.0);
  }
  d.tracks.push_back(t);
  d.frame_step = 1;
  write_eth_format(path, d);
}

}  // namespace

TEST(Cli, UsageErrors) {
  const auto dir = scratch_dir("cli_usage");
  EXPECT_EQ(cli("", dir), 1);
  EXPECT_EQ(cli("fly", dir), 1);
  EXPECT_EQ(cli("run --predictor oracle", dir), 1);
  EXPECT_EQ(cli("run --scenario scene42 --predictor cv --out " + (dir / "o").string(), dir), 1);
  EXPECT_NE(slurp(dir / "stderr.txt").find("scene10"), std::string::npos);
  EXPECT_EQ(cli("run --scenario scene1 --predictor learned --out " + (dir / "o").string(), dir), 1);
}

TEST(Cli, DataErrors) {
  const auto dir = scratch_dir("cli_data");
  EXPECT_EQ(cli("run --scenario scene1 --predictor learned --model " + (dir / "none.bin").string() +
                    " --out " + (dir / "o").string(),
                dir),
            2);
  {
    std::ofstream out(dir / "bad.json");
    out << R"({"schema": "crowdnav.config/1", "planner": {"horizn": 5}})";
  }
  EXPECT_EQ(cli("--config " + (dir / "bad.json").string() + " run --predictor cv", dir), 2);
  EXPECT_NE(slurp(dir / "stderr.txt").find("horizn"), std::string::npos);
  write_uniform_eth(dir / "short.txt", 10);
  EXPECT_EQ(cli("openloop --predictor cv --eth " + (dir / "short.txt").string(), dir), 2);
  EXPECT_NE(slurp(dir / "stderr.txt").find("no windows"), std::string::npos);
  std::filesystem::create_directories(dir / "nologs");
  EXPECT_EQ(cli("report --logs " + (dir / "nologs").string() + " --out " + (dir / "r").string(),
                dir),
            2);
}

TEST(Cli, EndToEndPipeline) {
  const auto dir = scratch_dir("cli_pipeline");
  {
    std::ofstream out(dir / "small.json");
    out << R"({"schema": "crowdnav.config/1",
               "training": {"epochs": 2, "synthetic": {"episodes": 3}}})";
  }
  const std::string cfg = "--config " + (dir / "small.json").string() + " --seed 3 ";
  ASSERT_EQ(cli(cfg + "train --out " + (dir / "m.bin").string(), dir), 0)
      << slurp(dir / "stderr.txt");
  EXPECT_NO_THROW(load_model(dir / "m.bin"));
  EXPECT_TRUE(std::filesystem::exists(dir / "m.bin.report.json"));

  ASSERT_EQ(cli(cfg + "run --scenario scene1 --model " + (dir / "m.bin").string() + " --out " +
                    (dir / "runs").string(),
                dir),
            0)
      << slurp(dir / "stderr.txt");
  EXPECT_TRUE(std::filesystem::exists(dir / "runs" / "logs" / "scene1_cv.jsonl"));
  EXPECT_TRUE(std::filesystem::exists(dir / "runs" / "logs" / "scene1_learned.jsonl"));

  ASSERT_EQ(cli("report --logs " + (dir / "runs").string() + " --out " + (dir / "rep").string(),
                dir),
            0)
      << slurp(dir / "stderr.txt");
  for (const char* f : {"table2_open_loop.csv", "table4_closed_loop.csv", "runs.csv",
                        "report.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / "rep" / f)) << f;
  }

  write_uniform_eth(dir / "walk.txt", 30);
  {
    std::ofstream out(dir / "exact.json");
    out << R"({"schema": "crowdnav.config/1", "cv": {"sigma_v": 0.0}})";
  }
  ASSERT_EQ(cli("--config " + (dir / "exact.json").string() + " openloop --predictor cv --eth " +
                    (dir / "walk.txt").string(),
                dir),
            0)
      << slurp(dir / "stderr.txt");
  EXPECT_NE(slurp(dir / "stdout.txt").find("ADE"), std::string::npos);
}
