#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("gdm_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Runs the tool with stderr captured to a file; returns the exit status.
  int run(const std::string& args, const std::string& env = {}) {
    const std::string cmd = env + (env.empty() ? "" : " ") + std::string(GDM_CLI_PATH) + " " + args + " 2>" +
                            path("stderr.txt") + " >" + path("stdout.txt");
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string read(const std::string& name) const {
    std::ifstream in(path(name));
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  json report(const std::string& name) const { return json::parse(read(name)); }

  fs::path dir_;
};

json without_wall_time(json j) {
  j.erase("wall_time_seconds");
  return j;
}

}  // namespace

TEST_F(CliTest, GenerateSegmentEvalRoundTrip) {
  ASSERT_EQ(run("generate -o " + path("scene.csv") + " scene --points 30 40 --seed 3"), 0);
  ASSERT_EQ(run("segment -i " + path("scene.csv") + " --k 2 --seed 7 -o " + path("report.json") + " --labels-out " +
                path("labels.txt")),
            0)
      << read("stderr.txt");
  const json r = report("report.json");
  EXPECT_EQ(r["schema_version"], 1);
  EXPECT_EQ(r["labels"].size(), 70u);
  EXPECT_EQ(r["outliers"].size(), 70u);
  EXPECT_EQ(r["per_cluster_dims"].size(), 2u);
  EXPECT_EQ(r["seed"], 7);
  EXPECT_EQ(r["metrics"]["misclassification"], 0.0);

  ASSERT_EQ(run("eval --pred " + path("labels.txt") + " --truth " + path("scene.csv")), 0);
  const json e = json::parse(read("stdout.txt"));
  EXPECT_EQ(e["misclassification"], 0.0);
  EXPECT_EQ(e["points"], 70);
}

TEST_F(CliTest, RepeatedRunsAreIdenticalAndThreadCountDoesNotMatter) {
  ASSERT_EQ(run("generate -o " + path("mix.csv") + " mixture --points 30 30 --noise 0.01 --seed 5"), 0);
  const std::string base = "segment -i " + path("mix.csv") + " --embedding raw --k 2 --seed 11 --restarts 4";
  ASSERT_EQ(run(base + " -o " + path("a.json")), 0) << read("stderr.txt");
  ASSERT_EQ(run(base + " -o " + path("b.json")), 0);
  ASSERT_EQ(run(base + " --threads 4 -o " + path("c.json")), 0);
  const json a = report("a.json"), b = report("b.json"), c = report("c.json");
  EXPECT_EQ(without_wall_time(a).dump(), without_wall_time(b).dump());
  EXPECT_EQ(a["labels"], c["labels"]);
  EXPECT_EQ(a["gd_value"], c["gd_value"]);
  EXPECT_EQ(a["restart_values"], c["restart_values"]);
}

TEST_F(CliTest, ConfigEchoReplaysTheRun) {
  ASSERT_EQ(run("generate -o " + path("mix.csv") + " mixture --points 25 25 --noise 0.02 --seed 9"), 0);
  ASSERT_EQ(run("segment -i " + path("mix.csv") + " --embedding raw --k 2 --seed 4 --restarts 3 --epsilon 0.4 -o " +
                path("first.json")),
            0);
  ASSERT_EQ(run("segment -i " + path("mix.csv") + " --config " + path("first.json") + " -o " + path("replay.json")), 0)
      << read("stderr.txt");
  const json first = report("first.json"), replay = report("replay.json");
  EXPECT_EQ(first["config"], replay["config"]);
  EXPECT_EQ(first["labels"], replay["labels"]);
  EXPECT_EQ(first["gd_value"], replay["gd_value"]);
}

TEST_F(CliTest, MissingSeedIsDrawnAndReported) {
  ASSERT_EQ(run("generate -o " + path("mix.csv") + " mixture --points 10 10 --seed 1"), 0);
  ASSERT_EQ(run("segment -i " + path("mix.csv") + " --embedding raw --restarts 1 -o " + path("r.json")), 0);
  const json r = report("r.json");
  EXPECT_TRUE(r["seed"].is_number_unsigned());
  EXPECT_EQ(r["seed"], r["config"]["seed"]);
}

TEST_F(CliTest, ParseErrorsExitNonzeroWithLineNumber) {
  {
    std::ofstream out(path("bad.csv"));
    out << "x,y,x2,y2\n0.1,0.2,0.3,0.4\n0.1,zz,0.3,0.4\n";
  }
  EXPECT_NE(run("segment -i " + path("bad.csv") + " -o " + path("r.json")), 0);
  EXPECT_NE(read("stderr.txt").find("line 3"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("r.json")));
}

TEST_F(CliTest, InfeasibleConfigurationExitsNonzero) {
  ASSERT_EQ(run("generate -o " + path("mix.csv") + " mixture --points 4 4 --dims 1 1 --seed 1"), 0);
  EXPECT_NE(run("segment -i " + path("mix.csv") + " --embedding raw --k 20"), 0);
  EXPECT_FALSE(read("stderr.txt").empty());
  EXPECT_NE(run("segment -i " + path("mix.csv") + " --embedding raw --epsilon 1.5"), 0);
  EXPECT_NE(run("segment -i " + path("missing.csv")), 0);
}

TEST_F(CliTest, ModelReassignFlagsPlantedOutliers) {
  ASSERT_EQ(run("generate -o " + path("mix.csv") + " mixture --points 40 40 --outliers 20 --seed 6"), 0);
  ASSERT_EQ(run("segment -i " + path("mix.csv") +
                " --embedding raw --k 2 --seed 6 --restarts 3 --outlier-mode model-reassign --kappa 0.05 -o " +
                path("r.json")),
            0)
      << read("stderr.txt");
  const json r = report("r.json");
  int flagged = 0;
  for (const auto& f : r["outliers"]) flagged += f.get<bool>() ? 1 : 0;
  EXPECT_GT(flagged, 0);
  EXPECT_EQ(r["outlier_scores"].size(), 100u);
  EXPECT_GT(r["metrics"]["tpr"].get<double>(), r["metrics"]["fpr"].get<double>());
}

TEST_F(CliTest, EnvironmentOverridesDefaults) {
  ASSERT_EQ(run("generate -o " + path("mix.csv") + " mixture --points 10 10 --seed 2"), 0);
  ASSERT_EQ(run("segment -i " + path("mix.csv") + " --embedding raw --seed 1 -o " + path("r.json"),
                "GDM_RESTARTS=2 GDM_EPSILON=0.5"),
            0)
      << read("stderr.txt");
  const json r = report("r.json");
  EXPECT_EQ(r["config"]["restarts"], 2);
  EXPECT_EQ(r["config"]["epsilon"], 0.5);
  EXPECT_EQ(r["restart_values"].size(), 2u);
}

TEST_F(CliTest, RocEmitsCsvCurve) {
  ASSERT_EQ(run("generate -o " + path("mix.csv") + " mixture --ambient 6 --dims 1 2 --points 30 30 --outliers 15 --seed 4"),
            0);
  ASSERT_EQ(run("roc -i " + path("mix.csv") + " --embedding raw --seed 4 --restarts 2 --kappa-grid 0,0.05,1e9"), 0)
      << read("stderr.txt");
  std::istringstream csv(read("stdout.txt"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "kappa,tpr,fpr");
  std::getline(csv, line);
  EXPECT_EQ(line.substr(line.find(',')), ",100,100");
  int rows = 1;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 3);
}
