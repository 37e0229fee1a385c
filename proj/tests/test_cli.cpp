#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "cli.hpp"

namespace fs = std::filesystem;
using namespace ralm;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("ralm_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(std::vector<std::string> args) {
    args.insert(args.begin(), "ralm");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    err_.str("");
    return cli::run(static_cast<int>(argv.size()), argv.data(), err_);
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& text) const { std::ofstream(dir_ / name) << text; }

  fs::path dir_;
  std::ostringstream err_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = slurp(e.path());
  return out;
}

std::vector<std::string> metrics_row(const fs::path& p) {
  std::ifstream in(p);
  std::string header, row, cell;
  std::getline(in, header);
  std::getline(in, row);
  std::vector<std::string> cells;
  std::istringstream rs(row);
  while (std::getline(rs, cell, ',')) cells.push_back(cell);
  return cells;
}

std::map<int, std::size_t> pgm_histogram(const fs::path& p) {
  std::ifstream in(p);
  std::string magic;
  int nx = 0, ny = 0, maxv = 0;
  in >> magic >> nx >> ny >> maxv;
  std::map<int, std::size_t> h;
  for (int k = 0, v = 0; k < nx * ny && in >> v; ++k) ++h[v];
  return h;
}

}  // namespace

TEST_F(Cli, MissingConfigIsUsageError) {
  EXPECT_EQ(run({"train", "--config", path("nope.cfg"), "--out", path("o")}), 2);
  EXPECT_NE(err_.str().find("nope.cfg"), std::string::npos);
}

TEST_F(Cli, BadArgumentsAreUsageErrors) {
  EXPECT_EQ(run({}), 2);
  EXPECT_EQ(run({"train", "--mode", "batch"}), 2);
  EXPECT_EQ(run({"train", "--set", "sam.bogus=1", "--out", path("o")}), 2);
  EXPECT_EQ(run({"train", "--set", "novalue", "--out", path("o")}), 2);
  write("bb.cfg", "env = ballbeam\n");
  EXPECT_EQ(run({"train", "--config", path("bb.cfg"), "--env", "pendulum", "--out", path("o")}), 2);
  write("bad.cfg", "seed = 1\nseed = 2\n");
  EXPECT_EQ(run({"train", "--config", path("bad.cfg"), "--out", path("o")}), 2);
}

TEST_F(Cli, OfflinePresetOutputsAndSameSeedTwiceIsByteIdentical) {
  ASSERT_EQ(run({"train", "--env", "pendulum", "--seed", "7", "--out", path("a")}), 0) << err_.str();
  ASSERT_EQ(run({"train", "--env", "pendulum", "--seed", "7", "--out", path("b")}), 0) << err_.str();
  const auto a = tree(path("a")), b = tree(path("b"));
  ASSERT_EQ(a.size(), b.size());
  for (const auto& [name, bytes] : a) {
    // config.txt records the output directory, which differs on purpose.
    if (name == "config.txt") continue;
    ASSERT_TRUE(b.count(name)) << name;
    EXPECT_TRUE(bytes == b.at(name)) << name;
  }

  for (const char* f : {"plane_0.csv", "plane_1.csv", "rpp.csv", "rules.txt", "metrics.csv", "trajectory.csv"})
    EXPECT_TRUE(a.count(f)) << f;
  EXPECT_FALSE(a.count("plane_2.csv"));
  std::istringstream rules(a.at("rules.txt"));
  const FuzzySystem fs = read_fuzzy_system(rules);
  EXPECT_GE(fs.rules.size(), 1u);

  ASSERT_EQ(run({"train", "--env", "pendulum", "--seed", "8", "--out", path("c")}), 0);
  EXPECT_NE(slurp(path("c") + "/trajectory.csv"), a.at("trajectory.csv"));

  // The written config reproduces the run.
  ASSERT_EQ(run({"train", "--config", path("a") + "/config.txt", "--out", path("d")}), 0) << err_.str();
  EXPECT_EQ(slurp(path("d") + "/rules.txt"), a.at("rules.txt"));
}

TEST_F(Cli, EvalWritesOneRolloutPerInitialState) {
  std::ostringstream model;
  write_fuzzy_system(model, linear_law_system({{-0.9, 0.9}, {-2, 2}}, {-25, 25}, 40.0, 10.0));
  write("model.txt", model.str());
  std::string states = "theta,theta_dot\n";
  for (int k = 0; k < 10; ++k) states += std::to_string(-0.5 + 0.1 * k) + "," + std::to_string(0.8 - 0.15 * k) + "\n";
  write("starts.csv", states);
  ASSERT_EQ(run({"eval", "--env", "pendulum", "--model", path("model.txt"), "--initial-states", path("starts.csv"),
                 "--out", path("ev")}),
            0)
      << err_.str();
  int rollouts = 0;
  for (const auto& e : fs::directory_iterator(path("ev"))) rollouts += e.path().filename().string().rfind("rollout_", 0) == 0;
  EXPECT_EQ(rollouts, 10);

  // The hand-built controller stabilizes every one of these starts.
  const auto m = metrics_row(path("ev") + "/eval_metrics.csv");
  ASSERT_EQ(m.size(), 7u);
  EXPECT_EQ(m[2], "10");
  EXPECT_NE(m[0], "unreached");
  EXPECT_EQ(std::stod(m[6]), 1.0);
}

TEST_F(Cli, EvalRejectsEmptyOrMismatchedModels) {
  write("empty.txt",
        "RALM-FS v1\ninputs 2\ninput_range -0.9 0.9\ninput_range -2 2\noutput_range -25 25\nrules 0\n");
  EXPECT_EQ(run({"eval", "--model", path("empty.txt"), "--out", path("ev")}), 2);
  write("v2.txt", "RALM-FS v2\n");
  EXPECT_EQ(run({"eval", "--model", path("v2.txt"), "--out", path("ev")}), 2);
  EXPECT_EQ(run({"eval", "--model", path("missing.txt"), "--out", path("ev")}), 2);
}

TEST_F(Cli, ExportPlanesRulesAndRpp) {
  std::ostringstream model;
  const FuzzySystem sys = linear_law_system({{-0.9, 0.9}, {-2, 2}}, {-25, 25}, 40.0, 10.0);
  write_fuzzy_system(model, sys);
  write("model.txt", model.str());

  ASSERT_EQ(run({"export", "planes", "--model", path("model.txt"), "--format", "pgm", "--out", path("p")}), 0);
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(path("p"))) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  EXPECT_EQ(names, (std::vector<std::string>{"plane_0.pgm", "plane_1.pgm"}));

  ASSERT_EQ(run({"export", "rules", "--model", path("model.txt"), "--out", path("r")}), 0);
  std::istringstream back(slurp(path("r") + "/rules.txt"));
  EXPECT_EQ(read_fuzzy_system(back).rules.size(), sys.rules.size());
  EXPECT_EQ(slurp(path("r") + "/rules.txt"), model.str());

  ASSERT_EQ(run({"export", "rpp", "--env", "pendulum", "--format", "pgm", "--out", path("c")}), 0);
  const auto h = pgm_histogram(path("c") + "/rpp.pgm");
  RunConfig c = preset("pendulum");
  const RPP fresh(train_config(c, PendulumEnv(c.env_params)).rpp);
  // penalty -0.5, play 0, reward 1 map to 0, 85, 255.
  EXPECT_EQ(h.size(), 3u);
  EXPECT_EQ(h.at(0), fresh.count(RegionKind::Penalty));
  EXPECT_EQ(h.at(85), fresh.count(RegionKind::Play));
  EXPECT_EQ(h.at(255), fresh.count(RegionKind::Reward));

  EXPECT_EQ(run({"export", "histogram", "--model", path("model.txt"), "--out", path("x")}), 2);
  EXPECT_EQ(run({"export", "rules", "--format", "png", "--model", path("model.txt"), "--out", path("x")}), 2);
}

TEST_F(Cli, TrainingAbortIsExitThree) {
  EXPECT_EQ(run({"train", "--env", "pendulum", "--mode", "online", "--out", path("o"), "--set", "train.learn=false",
                 "--set", "train.guard_after=500", "--set", "train.guard_window=500", "--set",
                 "train.guard_fraction=0.001"}),
            3);
  EXPECT_EQ(run({"train", "--env", "pendulum", "--out", path("o"), "--set", "train.episodes=0"}), 3);
}

TEST_F(Cli, InstalledBinaryExitCodes) {
  const char* bin = std::getenv("RALM_BIN");
  if (!bin) GTEST_SKIP() << "RALM_BIN not set";
  auto status = [](const std::string& cmd) {
    const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  const std::string b = std::string("\"") + bin + "\"";
  EXPECT_EQ(status(b + " --help"), 0);
  EXPECT_EQ(status(b + " train --config \"" + path("none.cfg") + "\""), 2);
  EXPECT_EQ(status(b + " export rpp --out \"" + path("x") + "\""), 0);
  EXPECT_TRUE(fs::exists(path("x") + "/rpp.csv"));
}
