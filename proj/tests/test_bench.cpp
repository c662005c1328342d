#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <nlohmann/json.hpp>

#include "deta/bench.hpp"
#include "deta/model_io.hpp"
#include "test_helpers.hpp"

namespace deta {
namespace {

GenConfig small_gen(std::int64_t seed) {
  GenConfig g;
  g.num_classes = 3;
  g.shots = 5;
  g.queries_per_class = 5;
  g.seed = seed;
  return g;
}

AdaptConfig small_adapt(std::uint64_t seed) {
  AdaptConfig a;
  a.iterations = 4;
  a.embed_dim = 16;
  a.seed = seed;
  return a;
}

BenchConfig small_bench() {
  BenchConfig b;
  b.gen = small_gen(0);
  b.adapt = small_adapt(0);
  b.ratios = {0.0, 0.4};
  b.episodes = 2;
  b.seed = 11;
  return b;
}

Model adapted_model(const Episode& ep, const AdaptConfig& cfg) {
  AdaptResult r = adapt_task(ep, cfg);
  return {cfg, std::move(r.head), std::move(r.bank), std::move(r.accumulator)};
}

TEST(ModelFile, JsonRoundTrip) {
  const Episode ep = generate_episode(small_gen(1));
  const Model m = adapted_model(ep, small_adapt(1));
  const nlohmann::json j = model_to_json(m);
  for (const char* key : {"config", "head", "bank", "accumulator"}) EXPECT_TRUE(j.contains(key)) << key;
  const Model back = model_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_TRUE(back.head == m.head);
  EXPECT_EQ(back.bank, m.bank);
  EXPECT_EQ(back.accumulator, m.accumulator);
  EXPECT_EQ(to_json(back.config), to_json(m.config));
  EXPECT_EQ(evaluate_queries(back, ep, HeadKind::Mcm)[0].score, evaluate_queries(m, ep, HeadKind::Mcm)[0].score);
}

TEST(ModelFile, SchemaErrors) {
  const Model m = adapted_model(generate_episode(small_gen(2)), small_adapt(2));
  nlohmann::json j = model_to_json(m);
  j.erase("head");
  EXPECT_DETA_ERROR(model_from_json(j), ErrorCode::SchemaError);
  j = model_to_json(m);
  j["head"]["b1"] = "nope";
  EXPECT_DETA_ERROR(model_from_json(j), ErrorCode::SchemaError);
  EXPECT_DETA_ERROR(read_model("/nonexistent/model.json"), ErrorCode::IoError);
}

TEST(EvaluateQueries, LinesCarryTheExchangeKeysInOrder) {
  const Episode ep = generate_episode(small_gen(3));
  const Model m = adapted_model(ep, small_adapt(3));
  for (HeadKind head : {HeadKind::LocalNcc, HeadKind::Ncc, HeadKind::Mcm}) {
    const auto results = evaluate_queries(m, ep, head);
    ASSERT_EQ(results.size(), ep.query.size());
    for (std::size_t i = 0; i < results.size(); ++i) {
      const std::string line = to_jsonl(results[i]);
      EXPECT_EQ(line.find("{\"query_id\":"), 0u);
      const auto j = nlohmann::json::parse(line);
      std::vector<std::string> keys;
      for (const auto& [k, _] : j.items()) keys.push_back(k);
      EXPECT_EQ(j.size(), 5u);
      EXPECT_LT(line.find("\"pred\""), line.find("\"true\""));
      EXPECT_LT(line.find("\"true\""), line.find("\"noise\""));
      EXPECT_LT(line.find("\"noise\""), line.find("\"score\""));
      EXPECT_EQ(j["query_id"], ep.query[i].grid.id());
      EXPECT_EQ(j["true"], ep.query[i].label);
      EXPECT_EQ(j["noise"], std::string(to_string(ep.query[i].noise)));
      EXPECT_GE(j["pred"].get<int>(), 1);
      EXPECT_LE(j["pred"].get<int>(), ep.num_classes);
    }
  }
  for (const auto& r : evaluate_queries(m, ep, HeadKind::Mcm)) {
    EXPECT_GE(r.score, 1.0 / ep.num_classes - 1e-12);
    EXPECT_LE(r.score, 1.0);
  }
}

TEST(EvaluateQueries, HeadNames) {
  EXPECT_EQ(head_from_string("localncc"), HeadKind::LocalNcc);
  EXPECT_EQ(head_from_string("ncc"), HeadKind::Ncc);
  EXPECT_EQ(head_from_string("mcm"), HeadKind::Mcm);
  EXPECT_DETA_ERROR(head_from_string("energy"), ErrorCode::ConfigInvalid);
}

TEST(BenchConfig, JsonRoundTripAndValidation) {
  const BenchConfig b = small_bench();
  EXPECT_EQ(to_json(bench_config_from_json(to_json(b))), to_json(b));
  EXPECT_DETA_ERROR(bench_config_from_json(nlohmann::json{{"ratio", {0.1}}}), ErrorCode::ConfigInvalid);
  EXPECT_DETA_ERROR(bench_config_from_json(nlohmann::json{{"ratios", {1.0}}}), ErrorCode::ConfigInvalid);
  EXPECT_DETA_ERROR(bench_config_from_json(nlohmann::json{{"episodes", -1}}), ErrorCode::ConfigInvalid);
  const BenchConfig d;
  EXPECT_EQ(d.ratios, (std::vector<double>{0.0, 0.1, 0.3, 0.5, 0.7}));
  EXPECT_EQ(d.episodes, 100);
}

TEST(RunBenchmark, SummaryRowsAndRanges) {
  const BenchResult r = run_benchmark(small_bench());
  ASSERT_EQ(r.episodes.size(), 4u);
  EXPECT_EQ(r.episodes[0].ratio, 0.0);
  EXPECT_EQ(r.episodes[2].ratio, 0.4);
  EXPECT_EQ(r.episodes[3].seed, 12);
  for (const auto& e : r.episodes) {
    for (double acc : {e.acc_localncc, e.acc_ncc, e.acc_baseline, e.acc_raw}) {
      EXPECT_GE(acc, 0.0);
      EXPECT_LE(acc, 1.0);
    }
    EXPECT_FALSE(e.queries.empty());
    EXPECT_TRUE(std::isfinite(e.auroc));
  }
  const nlohmann::json s = bench_summary(r);
  ASSERT_EQ(s["rows"].size(), 2u);
  EXPECT_EQ(s["rows"][1]["episodes"], 2);
  EXPECT_TRUE(s["rows"][0]["localncc"].contains("ci95"));
  const std::string csv = bench_csv(r);
  EXPECT_EQ(csv.rfind("ratio,head,mean,ci95\n", 0), 0u);
}

TEST(RunBenchmark, EveryRatioEpisodeCountAppearsInTheSummary) {
  BenchConfig b = small_bench();
  b.ratios = {0.0, 0.1, 0.3, 0.5, 0.7};
  b.episodes = 1;
  EXPECT_EQ(bench_summary(run_benchmark(b))["rows"].size(), 5u);
}

TEST(RunBenchmark, ZeroEpisodesIsAnEmptyList) {
  BenchConfig b = small_bench();
  b.episodes = 0;
  EXPECT_DETA_ERROR(bench_summary(run_benchmark(b)), ErrorCode::EmptyList);
}

TEST(RunBenchmark, RepeatRunsAreIdentical) {
  const BenchConfig b = small_bench();
  EXPECT_EQ(bench_summary(run_benchmark(b)).dump(), bench_summary(run_benchmark(b)).dump());
  EXPECT_EQ(bench_queries_jsonl(run_benchmark(b)), bench_queries_jsonl(run_benchmark(b)));
}

TEST(BenchThreads, EnvironmentCapsWorkers) {
  ::setenv("DETA_BENCH_THREADS", "1", 1);
  EXPECT_EQ(bench_threads(), 1);
  ::setenv("DETA_BENCH_THREADS", "garbage", 1);
  EXPECT_GE(bench_threads(), 1);
  ::unsetenv("DETA_BENCH_THREADS");
  EXPECT_GE(bench_threads(), 1);
}

TEST(WriteBench, FilesOnDisk) {
  const auto dir = std::filesystem::temp_directory_path() / "deta_write_bench_test";
  std::filesystem::remove_all(dir);
  write_bench(run_benchmark(small_bench()), dir, true);
  for (const char* f : {"summary.json", "queries.jsonl", "timing.json", "summary.csv"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace deta
