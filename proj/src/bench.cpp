#include "deta/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "deta/episode_io.hpp"
#include "deta/error.hpp"
#include "deta/infer.hpp"
#include "deta/metrics.hpp"

namespace deta {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Eigen::MatrixXd query_features(const Episode& episode) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(episode.query.size()), episode.dim);
  for (std::size_t i = 0; i < episode.query.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = image_feature(episode.query[i].grid).transpose();
  }
  return x;
}

double max_cosine(const Centroids& centroids, const Eigen::Ref<const Feature>& e) {
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) best = std::max(best, cosine(centroids.row(c).transpose(), e));
  return best;
}

double accuracy(const std::vector<int>& pred, const Episode& episode) {
  int hits = 0;
  int total = 0;
  for (std::size_t i = 0; i < episode.query.size(); ++i) {
    if (episode.query[i].label == kOodLabel) continue;
    ++total;
    hits += pred[i] == episode.query[i].label ? 1 : 0;
  }
  if (total == 0) throw Error(ErrorCode::EmptyList, "episode has no in-distribution queries");
  return static_cast<double>(hits) / total;
}

json mean_ci_json(const std::vector<double>& v) {
  const MeanCi ci = accuracy_ci(v);
  return {{"mean", ci.mean}, {"ci95", ci.half_width}};
}

// Mean over finite entries; NaN when none.
double finite_mean(const std::vector<double>& v) {
  double s = 0.0;
  int n = 0;
  for (double x : v) {
    if (std::isfinite(x)) {
      s += x;
      ++n;
    }
  }
  return n ? s / n : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

HeadKind head_from_string(const std::string& name) {
  if (name == "localncc") return HeadKind::LocalNcc;
  if (name == "ncc") return HeadKind::Ncc;
  if (name == "mcm") return HeadKind::Mcm;
  throw Error(ErrorCode::ConfigInvalid, "unknown head '" + name + "'");
}

std::string to_jsonl(const QueryResult& r) {
  nlohmann::ordered_json line{{"query_id", r.query_id},
            {"pred", r.pred},
            {"true", r.truth},
            {"noise", std::string(to_string(r.noise))},
            {"score", r.score}};
  return line.dump();
}

std::vector<QueryResult> evaluate_queries(const Model& model, const Episode& episode, HeadKind head,
                                          double temperature) {
  Centroids centroids;
  switch (head) {
    case HeadKind::LocalNcc:
      centroids = local_centroids(model.head, model.bank, episode);
      break;
    case HeadKind::Ncc:
      centroids = image_centroids(model.head, episode);
      break;
    case HeadKind::Mcm:
      centroids = final_prototypes(model.head, episode, model.accumulator, model.config.threshold).matrix();
      break;
  }
  const HeadBatch q = head_forward_batch(model.head, query_features(episode));
  std::vector<QueryResult> out;
  out.reserve(episode.query.size());
  for (std::size_t i = 0; i < episode.query.size(); ++i) {
    const Feature e = q.embeddings.row(static_cast<Eigen::Index>(i)).transpose();
    QueryResult r;
    r.query_id = episode.query[i].grid.id();
    r.truth = episode.query[i].label;
    r.noise = episode.query[i].noise;
    r.pred = nearest_centroid(centroids, e);
    r.score = head == HeadKind::Mcm ? mcm_score(centroids, e, temperature) : max_cosine(centroids, e);
    out.push_back(r);
  }
  return out;
}

BenchConfig bench_config_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigInvalid, "bench config must be a JSON object");
  static const std::set<std::string> known{"gen", "adapt", "ratios", "episodes", "seed", "temperature", "ood"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw Error(ErrorCode::ConfigInvalid, "unknown bench key '" + key + "'");
  }
  BenchConfig cfg;
  if (j.contains("gen")) cfg.gen = gen_config_from_json(j.at("gen"));
  if (j.contains("adapt")) cfg.adapt = adapt_config_from_json(j.at("adapt"));
  try {
    cfg.ratios = j.value("ratios", cfg.ratios);
    cfg.episodes = j.value("episodes", cfg.episodes);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.temperature = j.value("temperature", cfg.temperature);
    cfg.ood = j.value("ood", cfg.ood);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, e.what());
  }
  if (cfg.episodes < 0) throw Error(ErrorCode::ConfigInvalid, "episodes must be >= 0");
  if (cfg.ratios.empty()) throw Error(ErrorCode::ConfigInvalid, "ratios must be non-empty");
  for (double r : cfg.ratios) {
    if (!(r >= 0.0 && r < 1.0)) throw Error(ErrorCode::ConfigInvalid, "ratios must lie in [0, 1)");
  }
  if (!(cfg.temperature > 0.0)) throw Error(ErrorCode::ConfigInvalid, "temperature must be > 0");
  return cfg;
}

json to_json(const BenchConfig& cfg) {
  return {{"gen", to_json(cfg.gen)},       {"adapt", to_json(cfg.adapt)},
          {"ratios", cfg.ratios},          {"episodes", cfg.episodes},
          {"seed", cfg.seed},              {"temperature", cfg.temperature},
          {"ood", cfg.ood}};
}

EpisodeOutcome run_episode(const Episode& episode, const AdaptConfig& adapt, double temperature, bool ood) {
  EpisodeOutcome out;
  auto t0 = Clock::now();
  const AdaptResult adapted = adapt_task(episode, adapt);
  out.seconds_adapt = seconds_since(t0);

  t0 = Clock::now();
  const Model model{adapt, adapted.head, adapted.bank, adapted.accumulator};
  out.queries = evaluate_queries(model, episode, HeadKind::LocalNcc, temperature);
  std::vector<int> pred_local;
  for (const auto& q : out.queries) pred_local.push_back(q.pred);
  out.acc_localncc = accuracy(pred_local, episode);

  const Eigen::MatrixXd qx = query_features(episode);
  const HeadParams initial = init_head(episode.dim, adapt.embed_dim, adapt.seed);
  const Centroids ncc = image_centroids(adapted.head, episode);
  const Centroids base = image_centroids(initial, episode);
  const Centroids raw = raw_image_centroids(episode);
  const HeadBatch q = head_forward_batch(adapted.head, qx);
  const HeadBatch q0 = head_forward_batch(initial, qx);
  std::vector<int> pred_ncc, pred_base, pred_raw;
  for (Eigen::Index i = 0; i < qx.rows(); ++i) {
    pred_ncc.push_back(nearest_centroid(ncc, q.embeddings.row(i).transpose()));
    pred_base.push_back(nearest_centroid(base, q0.embeddings.row(i).transpose()));
    pred_raw.push_back(nearest_centroid(raw, qx.row(i).transpose()));
  }
  out.acc_ncc = accuracy(pred_ncc, episode);
  out.acc_baseline = accuracy(pred_base, episode);
  out.acc_raw = accuracy(pred_raw, episode);

  const double nan = std::numeric_limits<double>::quiet_NaN();
  out.mcm_ood_mean = out.auroc = out.fpr95 = nan;
  if (ood) {
    const Centroids protos = final_prototypes(adapted.head, episode, adapted.accumulator, adapt.threshold).matrix();
    std::vector<double> id_scores;
    std::vector<double> ood_scores;
    for (std::size_t i = 0; i < episode.query.size(); ++i) {
      const double s = mcm_score(protos, q.embeddings.row(static_cast<Eigen::Index>(i)).transpose(), temperature);
      out.queries[i].score = s;
      (episode.query[i].label == kOodLabel ? ood_scores : id_scores).push_back(s);
    }
    if (!ood_scores.empty() && !id_scores.empty()) {
      double sum = 0.0;
      for (double s : ood_scores) sum += s;
      out.mcm_ood_mean = sum / static_cast<double>(ood_scores.size());
      out.auroc = auroc(id_scores, ood_scores);
      out.fpr95 = fpr_at_95_tpr(id_scores, ood_scores);
    }
  }
  out.seconds_eval = seconds_since(t0);
  return out;
}

int bench_threads() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n <= 0) n = 1;
  if (const char* env = std::getenv("DETA_BENCH_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && cap > 0) n = std::min<long>(n, cap);
  }
  return n;
}

BenchResult run_benchmark(const BenchConfig& cfg) {
  const auto start = Clock::now();
  BenchResult result;
  result.config = cfg;
  struct Job {
    double ratio;
    int index;
  };
  std::vector<Job> jobs;
  for (double r : cfg.ratios) {
    for (int e = 0; e < cfg.episodes; ++e) jobs.push_back({r, e});
  }
  result.episodes.resize(jobs.size());

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        const auto t0 = Clock::now();
        GenConfig gen = cfg.gen;
        gen.ood_ratio = jobs[i].ratio;
        gen.seed = cfg.seed + jobs[i].index;
        const Episode ep = generate_episode(gen);
        const double t_gen = seconds_since(t0);
        AdaptConfig adapt = cfg.adapt;
        adapt.seed = static_cast<std::uint64_t>(cfg.seed + jobs[i].index);
        EpisodeOutcome out = run_episode(ep, adapt, cfg.temperature, cfg.ood);
        out.ratio = jobs[i].ratio;
        out.index = jobs[i].index;
        out.seed = gen.seed;
        out.seconds_gen = t_gen;
        result.episodes[i] = std::move(out);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = jobs.size();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(bench_threads(), static_cast<int>(jobs.size())));
  {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  result.seconds_total = seconds_since(start);
  return result;
}

json bench_summary(const BenchResult& result) {
  json rows = json::array();
  for (double r : result.config.ratios) {
    std::vector<double> local, ncc, base, raw, mcm, au, fpr;
    std::vector<std::int64_t> seeds;
    for (const auto& e : result.episodes) {
      if (e.ratio != r) continue;
      local.push_back(e.acc_localncc);
      ncc.push_back(e.acc_ncc);
      base.push_back(e.acc_baseline);
      raw.push_back(e.acc_raw);
      mcm.push_back(e.mcm_ood_mean);
      au.push_back(e.auroc);
      fpr.push_back(e.fpr95);
      seeds.push_back(e.seed);
    }
    json row{{"ratio", r},
             {"episodes", local.size()},
             {"localncc", mean_ci_json(local)},
             {"ncc", mean_ci_json(ncc)},
             {"baseline", mean_ci_json(base)},
             {"raw", mean_ci_json(raw)},
             {"per_episode", {{"seed", seeds}, {"localncc", local}, {"ncc", ncc}, {"baseline", base}, {"raw", raw}}}};
    if (result.config.ood) {
      row["ood"] = {{"mcm_ood_mean", finite_mean(mcm)}, {"auroc", finite_mean(au)}, {"fpr95", finite_mean(fpr)}};
      row["per_episode"]["mcm_ood_mean"] = mcm;
      row["per_episode"]["auroc"] = au;
      row["per_episode"]["fpr95"] = fpr;
    }
    rows.push_back(std::move(row));
  }
  return {{"config", to_json(result.config)}, {"rows", std::move(rows)}};
}

json bench_timing(const BenchResult& result) {
  double gen = 0.0, adapt = 0.0, eval = 0.0;
  for (const auto& e : result.episodes) {
    gen += e.seconds_gen;
    adapt += e.seconds_adapt;
    eval += e.seconds_eval;
  }
  return {{"threads", bench_threads()},
          {"total_seconds", result.seconds_total},
          {"stage_seconds", {{"gen", gen}, {"adapt", adapt}, {"eval", eval}}}};
}

std::string bench_csv(const BenchResult& result) {
  const json summary = bench_summary(result);
  std::ostringstream out;
  out.precision(17);
  out << "ratio,head,mean,ci95\n";
  for (const auto& row : summary.at("rows")) {
    for (const char* head : {"localncc", "ncc", "baseline", "raw"}) {
      out << row.at("ratio").get<double>() << ',' << head << ',' << row.at(head).at("mean").get<double>() << ','
          << row.at(head).at("ci95").get<double>() << '\n';
    }
  }
  return out.str();
}

std::string bench_queries_jsonl(const BenchResult& result) {
  std::string out;
  for (const auto& e : result.episodes) {
    for (const auto& q : e.queries) {
      auto line = nlohmann::ordered_json::parse(to_jsonl(q));
      line["ratio"] = e.ratio;
      line["episode"] = e.index;
      out += line.dump() + "\n";
    }
  }
  return out;
}

void write_bench(const BenchResult& result, const std::filesystem::path& dir, bool csv) {
  write_text_file(dir / "summary.json", bench_summary(result).dump(2) + "\n");
  write_text_file(dir / "queries.jsonl", bench_queries_jsonl(result));
  write_text_file(dir / "timing.json", bench_timing(result).dump(2) + "\n");
  if (csv) write_text_file(dir / "summary.csv", bench_csv(result));
}

}  // namespace deta
