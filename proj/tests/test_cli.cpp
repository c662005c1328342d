#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

namespace {

namespace fs = std::filesystem;

struct CliRun {
  int status = -1;
  std::string out;
};

CliRun run(const std::string& args) {
  const std::string cmd = std::string(DETA_CLI_PATH) + " " + args + " 2>&1";
  CliRun r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf{};
  while (fgets(buf.data(), buf.size(), pipe) != nullptr) r.out += buf.data();
  const int status = pclose(pipe);
  r.status = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::vector<nlohmann::json> read_jsonl(const fs::path& p) {
  std::ifstream in(p);
  std::vector<nlohmann::json> lines;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) lines.push_back(nlohmann::json::parse(line));
  return lines;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           (std::string("deta_cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "gen.json") << R"({"C": 3, "K": 5, "queries_per_class": 4, "seed": 7})";
    std::ofstream(dir_ / "adapt.json") << R"({"iterations": 3, "embed_dim": 16, "seed": 7})";
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

TEST_F(Cli, GenAdaptEvalPipeline) {
  CliRun r = run("gen --config " + path("gen.json") + " --out " + path("eps") + " --episodes 2");
  ASSERT_EQ(r.status, 0) << r.out;
  ASSERT_TRUE(fs::exists(dir_ / "eps" / "episode_0000.json"));
  ASSERT_TRUE(fs::exists(dir_ / "eps" / "episode_0001.json"));
  const auto ep = nlohmann::json::parse(std::ifstream(dir_ / "eps" / "episode_0001.json"));
  EXPECT_EQ(ep["meta"]["seed"], 8);
  EXPECT_EQ(ep["support"].size(), 15u);

  r = run("adapt --episode " + path("eps/episode_0000.json") + " --config " + path("adapt.json") + " --out " +
          path("model.json") + " --dump-weights " + path("weights.jsonl"));
  ASSERT_EQ(r.status, 0) << r.out;
  const auto model = nlohmann::json::parse(std::ifstream(dir_ / "model.json"));
  EXPECT_TRUE(model.contains("head"));
  EXPECT_TRUE(model.contains("bank"));
  const auto weights = read_jsonl(dir_ / "weights.jsonl");
  // Three iterations of 15 images x 4 regions, then 15 image lines each.
  EXPECT_EQ(weights.size(), 3u * (60 + 15));
  EXPECT_EQ(weights.front()["kind"], "region");
  EXPECT_EQ(weights.back()["iter"], 3);

  for (const std::string head : {"localncc", "ncc", "mcm"}) {
    r = run("eval --model " + path("model.json") + " --episode " + path("eps/episode_0000.json") + " --head " +
            head + " --out " + path(head + ".jsonl"));
    ASSERT_EQ(r.status, 0) << r.out;
    const auto lines = read_jsonl(dir_ / (head + ".jsonl"));
    ASSERT_EQ(lines.size(), 12u);
    for (const auto& l : lines) {
      EXPECT_EQ(l.size(), 5u);
      for (const char* k : {"query_id", "pred", "true", "noise", "score"}) EXPECT_TRUE(l.contains(k)) << k;
    }
  }
}

TEST_F(Cli, FriedmanPrintsBothStatistics) {
  const CliRun r = run("friedman --ranks 9.6,10.25,8.8,6.9,7.7,10.9,3.4,7.45,5.7,3.8,2.0,1.5 --n 10");
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("chi2 87.396"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("F_F 34.798"), std::string::npos) << r.out;
  std::ofstream(dir_ / "ranks.csv") << "10.8, 9.8, 7.9, 8.75, 7.9, 8.25, 7.85, 6.25, 3.9, 3.6, 1.8, 1.2\n";
  const CliRun f = run("friedman --ranks " + path("ranks.csv") + " --n 10");
  EXPECT_NE(f.out.find("chi2 83.585"), std::string::npos) << f.out;
}

TEST_F(Cli, BadRankSumFails) {
  const CliRun r = run("friedman --ranks 1,1,1 --n 4");
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.out.find("RankSumInvalid"), std::string::npos) << r.out;
}

TEST_F(Cli, BenchWritesOutputs) {
  std::ofstream(dir_ / "bench.json") << R"({"gen": {"C": 3, "K": 5, "queries_per_class": 4},
    "adapt": {"iterations": 3, "embed_dim": 16}, "ratios": [0.0, 0.3], "episodes": 2, "seed": 5})";
  const CliRun r = run("bench --config " + path("bench.json") + " --out " + path("bench") + " --csv");
  ASSERT_EQ(r.status, 0) << r.out;
  for (const char* f : {"summary.json", "queries.jsonl", "timing.json", "summary.csv"})
    EXPECT_TRUE(fs::exists(dir_ / "bench" / f)) << f;
  const auto summary = nlohmann::json::parse(std::ifstream(dir_ / "bench" / "summary.json"));
  EXPECT_EQ(summary["rows"].size(), 2u);
}

TEST_F(Cli, InvalidConfigFails) {
  std::ofstream(dir_ / "bad.json") << R"({"C": 1})";
  const CliRun r = run("gen --config " + path("bad.json") + " --out " + path("x"));
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.out.find("ConfigInvalid"), std::string::npos) << r.out;
}

TEST_F(Cli, CheckRunsSelectedCriteria) {
  const CliRun r = run("bench --check --only 1 4");
  EXPECT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("PASS  criterion 1"), std::string::npos);
  EXPECT_NE(r.out.find("PASS  criterion 4"), std::string::npos);
}

}  // namespace
