// deta: generate noisy episodes, adapt, evaluate and benchmark.
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "deta/adapt.hpp"
#include "deta/bench.hpp"
#include "deta/check/acceptance.hpp"
#include "deta/episode_io.hpp"
#include "deta/error.hpp"
#include "deta/friedman.hpp"
#include "deta/model_io.hpp"
#include "deta/synth.hpp"

namespace fs = std::filesystem;

namespace {

std::string episode_name(int i) {
  std::ostringstream s;
  s << "episode_" << std::setw(4) << std::setfill('0') << i << ".json";
  return s.str();
}

int cmd_gen(const std::string& config, const std::string& out_dir, int episodes) {
  const deta::GenConfig base = deta::gen_config_from_json(deta::read_json_file(config));
  for (int i = 0; i < episodes; ++i) {
    deta::GenConfig cfg = base;
    cfg.seed = base.seed + i;
    deta::write_episode(deta::generate_episode(cfg), fs::path(out_dir) / episode_name(i));
  }
  std::cout << "wrote " << episodes << " episode(s) to " << out_dir << "\n";
  return 0;
}

int cmd_adapt(const std::string& episode_path, const std::string& config, const std::string& out,
              const std::string& dump) {
  const deta::Episode episode = deta::read_episode(episode_path);
  const deta::AdaptConfig cfg =
      config.empty() ? deta::AdaptConfig{} : deta::adapt_config_from_json(deta::read_json_file(config));
  std::string dump_text;
  deta::IterationObserver observer;
  if (!dump.empty()) {
    observer = [&](const deta::IterationTrace& t) {
      dump_text += deta::weights_jsonl(t.iteration, *t.table, *t.accumulator);
    };
  }
  const deta::AdaptResult r = deta::adapt_task(episode, cfg, observer);
  deta::write_model({cfg, r.head, r.bank, r.accumulator}, out);
  if (!dump.empty()) deta::write_text_file(dump, dump_text);
  if (!r.losses.empty()) std::cout << "final loss " << r.losses.back() << "\n";
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& episode_path, const std::string& head,
             const std::string& out, double temperature) {
  const deta::Model model = deta::read_model(model_path);
  const deta::Episode episode = deta::read_episode(episode_path);
  const auto results = deta::evaluate_queries(model, episode, deta::head_from_string(head), temperature);
  std::string text;
  int hits = 0;
  int id_queries = 0;
  for (const auto& r : results) {
    text += deta::to_jsonl(r) + "\n";
    if (r.truth != deta::kOodLabel) {
      ++id_queries;
      hits += r.pred == r.truth ? 1 : 0;
    }
  }
  deta::write_text_file(out, text);
  if (id_queries > 0) std::cout << "accuracy " << static_cast<double>(hits) / id_queries << "\n";
  return 0;
}

int cmd_bench(const std::string& config, const std::string& out_dir, bool csv, int episodes) {
  deta::BenchConfig cfg;
  if (!config.empty()) cfg = deta::bench_config_from_json(deta::read_json_file(config));
  if (episodes >= 0) cfg.episodes = episodes;
  const deta::BenchResult result = deta::run_benchmark(cfg);
  deta::write_bench(result, out_dir, csv);
  const auto summary = deta::bench_summary(result);
  for (const auto& row : summary.at("rows")) {
    std::cout << "ratio " << row.at("ratio").get<double>() << "  localncc " << row.at("localncc").at("mean")
              << "  ncc " << row.at("ncc").at("mean") << "  baseline " << row.at("baseline").at("mean") << "\n";
  }
  return 0;
}

int cmd_check(const std::vector<int>& only) {
  const auto results = deta::check::run_acceptance(std::cout, only);
  const bool ok = std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
  std::cout << (ok ? "all criteria passed" : "some criteria FAILED") << "\n";
  return ok ? 0 : 1;
}

int cmd_friedman(const std::string& ranks, int n) {
  std::string text = ranks;
  if (fs::is_regular_file(ranks)) {
    std::ifstream in(ranks);
    std::stringstream buf;
    buf << in.rdbuf();
    text = buf.str();
    std::replace(text.begin(), text.end(), '\n', ',');
  }
  const auto r = deta::friedman(deta::parse_rank_list(text), n);
  std::cout << std::fixed << std::setprecision(3) << "k " << r.k << "  n " << r.n << "  chi2 " << r.chi2 << "  F_F "
            << r.ff << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Denoised few-shot task adaptation on patch-grid episodes"};
  app.require_subcommand(1);

  std::string gen_config, gen_out;
  int gen_episodes = 1;
  auto* gen = app.add_subcommand("gen", "Generate synthetic episodes");
  gen->add_option("--config", gen_config, "Flat JSON generator config")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--episodes", gen_episodes, "Episode count (seed, seed+1, ...)")->check(CLI::NonNegativeNumber);

  std::string ad_episode, ad_config, ad_out, ad_dump;
  auto* adapt = app.add_subcommand("adapt", "Adapt a projection head on one episode");
  adapt->add_option("--episode", ad_episode)->required()->check(CLI::ExistingFile);
  adapt->add_option("--config", ad_config, "JSON adaptation config (defaults if omitted)")->check(CLI::ExistingFile);
  adapt->add_option("--out", ad_out, "Model file")->required();
  adapt->add_option("--dump-weights", ad_dump, "JSON lines of region and image weights per iteration");

  std::string ev_model, ev_episode, ev_head = "localncc", ev_out;
  double ev_temperature = 1.0;
  auto* eval = app.add_subcommand("eval", "Score the queries of an episode");
  eval->add_option("--model", ev_model)->required()->check(CLI::ExistingFile);
  eval->add_option("--episode", ev_episode)->required()->check(CLI::ExistingFile);
  eval->add_option("--head", ev_head)->check(CLI::IsMember({"localncc", "ncc", "mcm"}));
  eval->add_option("--out", ev_out, "Results JSON lines")->required();
  eval->add_option("--temperature", ev_temperature, "MCM temperature")->check(CLI::PositiveNumber);

  std::string b_config, b_out = "bench_out";
  bool b_check = false, b_csv = false;
  int b_episodes = -1;
  std::vector<int> b_only;
  auto* bench = app.add_subcommand("bench", "Noise-ratio sweep, or the acceptance suite with --check");
  bench->add_option("--config", b_config, "JSON bench config")->check(CLI::ExistingFile);
  bench->add_option("--out", b_out, "Output directory");
  bench->add_option("--episodes", b_episodes, "Override episodes per ratio");
  bench->add_flag("--csv", b_csv, "Also write summary.csv");
  bench->add_flag("--check", b_check, "Run the acceptance criteria; exit 0 iff all pass");
  bench->add_option("--only", b_only, "With --check: criterion ids to run");

  std::string f_ranks;
  int f_n = 0;
  auto* fried = app.add_subcommand("friedman", "Friedman chi-square and F statistic from mean ranks");
  fried->add_option("--ranks", f_ranks, "Comma-separated mean ranks, or a file holding them")->required();
  fried->add_option("--n", f_n, "Number of datasets")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen(gen_config, gen_out, gen_episodes);
    if (*adapt) return cmd_adapt(ad_episode, ad_config, ad_out, ad_dump);
    if (*eval) return cmd_eval(ev_model, ev_episode, ev_head, ev_out, ev_temperature);
    if (*bench) return b_check ? cmd_check(b_only) : cmd_bench(b_config, b_out, b_csv, b_episodes);
    if (*fried) return cmd_friedman(f_ranks, f_n);
  } catch (const deta::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
