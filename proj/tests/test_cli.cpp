#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(GAZECONE_CLI) + " " + args + " >/dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("gazecone_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Small split plus a one-epoch checkpoint.
  void make_model() {
    ASSERT_EQ(run("gen-data --seed 1 --out " + path("d.gzds") + " --test-out " + path("t.gzds") +
                  " --set train_count=24 --set test_count=6"),
              0);
    ASSERT_EQ(run("train --data " + path("d.gzds") + " --out " + path("m.gzc") +
                  " --seed 2 --set epochs=1 --set batch_size=8 --set k=7"),
              0);
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("no-such-command"), 2);
  EXPECT_EQ(run("gen-data --out " + path("x.gzds")), 2);  // seed is required
  EXPECT_EQ(run("gen-data --seed 1 --out " + path("x.gzds") + " --set bogus_key=1"), 2);
  EXPECT_EQ(run("gen-data --seed 1 --out " + path("x.gzds") + " --set max_camera_angle_deg=120"), 2);
}

TEST_F(Cli, GradcheckComponent) {
  EXPECT_EQ(run("gradcheck --component geometry --seed 5"), 0);
  EXPECT_EQ(run("gradcheck --component nothing --seed 5"), 2);
}

TEST_F(Cli, GenDataIsDeterministic) {
  ASSERT_EQ(run("gen-data --seed 3 --out " + path("a.gzds") + " --set train_count=10 --set test_count=4"), 0);
  ASSERT_EQ(run("gen-data --seed 3 --out " + path("b.gzds") + " --set train_count=10 --set test_count=4"), 0);
  EXPECT_EQ(slurp(path("a.gzds")), slurp(path("b.gzds")));
  EXPECT_TRUE(fs::exists(path("a.test.gzds")));
  EXPECT_NE(slurp(path("a.gzds")), slurp(path("a.test.gzds")));
}

TEST_F(Cli, TrainEvalPredict) {
  make_model();
  EXPECT_TRUE(fs::exists(path("m.csv")));
  EXPECT_EQ(run("eval --model " + path("m.gzc") + " --data " + path("t.gzds") + " --out " + path("r.csv") +
                " --baselines --train-data " + path("d.gzds")),
            0);
  const std::string report = slurp(path("r.csv"));
  for (const char* row : {"model:", "center", "random", "fixed_bias"}) EXPECT_NE(report.find(row), std::string::npos) << row;

  EXPECT_EQ(run("predict --model " + path("m.gzc") + " --data " + path("t.gzds") + " --index 0 --out " + path("p.pgm")),
            0);
  EXPECT_EQ(slurp(path("p.pgm")).substr(0, 11), "P5\n240 240\n");
  EXPECT_TRUE(fs::exists(path("p.csv")));
  EXPECT_EQ(run("predict --model " + path("m.gzc") + " --data " + path("t.gzds") + " --index 99 --out " + path("q.pgm")),
            2);
  EXPECT_EQ(run("export-heatmap --model " + path("m.gzc") + " --data " + path("t.gzds") + " --out-dir " + path("h") +
                " --first 1 --count 2"),
            0);
  EXPECT_TRUE(fs::exists(path("h/heatmap_1.pgm")));
  EXPECT_TRUE(fs::exists(path("h/heatmap_2.csv")));
  // Ablations need training data.
  EXPECT_EQ(run("eval --model " + path("m.gzc") + " --data " + path("t.gzds") + " --out " + path("r2.csv") +
                " --ablations"),
            2);
}

TEST_F(Cli, TrainingIsReproducible) {
  make_model();
  ASSERT_EQ(run("train --data " + path("d.gzds") + " --out " + path("m2.gzc") +
                " --seed 2 --set epochs=1 --set batch_size=8 --set k=7"),
            0);
  EXPECT_EQ(slurp(path("m.gzc")), slurp(path("m2.gzc")));
}

TEST_F(Cli, MissingOrCorruptFiles) {
  EXPECT_EQ(run("eval --model " + path("none.gzc") + " --data " + path("none.gzds") + " --out " + path("r.csv")), 3);
  std::ofstream(path("junk.gzc")) << "not a checkpoint";
  ASSERT_EQ(run("gen-data --seed 1 --out " + path("d.gzds") + " --set train_count=4 --set test_count=2"), 0);
  EXPECT_EQ(run("predict --model " + path("junk.gzc") + " --data " + path("d.gzds") + " --index 0 --out " +
                path("p.pgm")),
            3);
  EXPECT_EQ(run("train --data " + path("junk.gzc") + " --out " + path("m.gzc") + " --seed 0"), 3);
}
