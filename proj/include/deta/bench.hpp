#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "deta/adapt.hpp"
#include "deta/model_io.hpp"
#include "deta/synth.hpp"

namespace deta {

enum class HeadKind { LocalNcc, Ncc, Mcm };
HeadKind head_from_string(const std::string& name);

struct QueryResult {
  SampleId query_id = 0;
  int pred = 0;
  int truth = 0;
  NoiseKind noise = NoiseKind::Clean;
  double score = 0.0;
};

std::string to_jsonl(const QueryResult& r);

// localncc / ncc: score is the winning cosine.  mcm: prediction is the
// nearest weighted prototype and score its MCM value.
std::vector<QueryResult> evaluate_queries(const Model& model, const Episode& episode, HeadKind head,
                                          double temperature = 1.0);

struct BenchConfig {
  GenConfig gen;
  AdaptConfig adapt;
  std::vector<double> ratios{0.0, 0.1, 0.3, 0.5, 0.7};
  int episodes = 100;
  std::int64_t seed = 0;  // episode e uses seed + e for generation and adaptation
  double temperature = 1.0;
  bool ood = true;
};

BenchConfig bench_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BenchConfig& cfg);

struct EpisodeOutcome {
  double ratio = 0.0;
  int index = 0;
  std::int64_t seed = 0;
  double acc_localncc = 0.0;
  double acc_ncc = 0.0;
  double acc_baseline = 0.0;  // NCC through the initial head, before any adaptation step
  double acc_raw = 0.0;       // NCC on frozen features, no head
  // OOD query statistics from MCM on the adapted prototypes; NaN without OOD queries.
  double mcm_ood_mean = 0.0;
  double auroc = 0.0;
  double fpr95 = 0.0;
  std::vector<QueryResult> queries;  // LocalNCC predictions, MCM scores
  double seconds_gen = 0.0;
  double seconds_adapt = 0.0;
  double seconds_eval = 0.0;
};

// Adapts on one episode and scores it with every head.
EpisodeOutcome run_episode(const Episode& episode, const AdaptConfig& adapt, double temperature, bool ood);

struct BenchResult {
  BenchConfig config;
  std::vector<EpisodeOutcome> episodes;  // ordered by (ratio, index)
  double seconds_total = 0.0;
};

// DETA_BENCH_THREADS, when set to a positive integer, caps the worker count.
int bench_threads();
BenchResult run_benchmark(const BenchConfig& cfg);

// Deterministic: no timings.
nlohmann::json bench_summary(const BenchResult& result);
nlohmann::json bench_timing(const BenchResult& result);
std::string bench_csv(const BenchResult& result);
std::string bench_queries_jsonl(const BenchResult& result);
// summary.json, queries.jsonl, timing.json and optionally summary.csv.
void write_bench(const BenchResult& result, const std::filesystem::path& dir, bool csv);

}  // namespace deta
