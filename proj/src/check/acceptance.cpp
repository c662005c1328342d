#include "deta/check/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "deta/adapt.hpp"
#include "deta/bench.hpp"
#include "deta/check/oracles.hpp"
#include "deta/cora.hpp"
#include "deta/friedman.hpp"
#include "deta/metrics.hpp"
#include "deta/synth.hpp"

namespace deta::check {
namespace {

using Clock = std::chrono::steady_clock;

// Tolerances and budgets of the acceptance gate.
constexpr double kFriedmanTol = 0.01;
constexpr double kFriedmanBudgetSeconds = 1e-3;
constexpr int kGradInstances = 60;
constexpr double kGradStep = 1e-5;
constexpr double kGradTol = 1e-4;
constexpr double kGradFloor = 1e-8;
constexpr double kGradBudgetSeconds = 10.0;
constexpr int kCoraInstances = 100;
constexpr double kCoraTol = 1e-9;
constexpr int kTrendEpisodes = 100;
constexpr double kTrendBudgetSeconds = 300.0;
constexpr double kSignAlpha = 0.05;
constexpr int kSeparationEpisodes = 100;
constexpr int kSeparationRequired = 95;
constexpr int kEntropyEpisodes = 100;
constexpr int kAurocInstances = 1000;
constexpr int kFprScores = 1000;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

CriterionResult friedman_exactness() {
  const std::vector<double> top{9.6, 10.25, 8.8, 6.9, 7.7, 10.9, 3.4, 7.45, 5.7, 3.8, 2.0, 1.5};
  const std::vector<double> down{10.8, 9.8, 7.9, 8.75, 7.9, 8.25, 7.85, 6.25, 3.9, 3.6, 1.8, 1.2};
  const auto t0 = Clock::now();
  const FriedmanResult a = friedman(top, 10);
  const FriedmanResult b = friedman(down, 10);
  const double secs = since(t0);
  const bool ok = std::abs(a.chi2 - 87.396) <= kFriedmanTol && std::abs(a.ff - 34.798) <= kFriedmanTol &&
                  std::abs(b.chi2 - 83.585) <= kFriedmanTol && std::abs(b.ff - 28.478) <= kFriedmanTol &&
                  secs < kFriedmanBudgetSeconds;
  return {1, "friedman-exactness", ok,
          "top chi2=" + fmt(a.chi2) + " F=" + fmt(a.ff) + "; down chi2=" + fmt(b.chi2) + " F=" + fmt(b.ff) +
              "; " + fmt(secs * 1e3, 3) + " ms",
          secs};
}

CriterionResult gradient_correctness() {
  const auto t0 = Clock::now();
  Rng rng = make_rng(2024, 1);
  double worst = 0.0;
  for (int i = 0; i < kGradInstances; ++i) {
    const auto inst = oracle::random_gradient_instance(rng);
    const HeadParams analytic = total_loss_and_grad(inst.params, inst.batch, inst.options).grad;
    const HeadParams numeric = oracle::finite_difference_gradient(inst.params, inst.batch, inst.options, kGradStep);
    worst = std::max(worst, oracle::max_relative_error(analytic.flatten(), numeric.flatten(), kGradFloor));
  }
  const double secs = since(t0);
  return {2, "gradient-correctness", worst < kGradTol && secs < kGradBudgetSeconds,
          std::to_string(kGradInstances) + " instances, max rel err " + fmt(worst, 3) + ", " + fmt(secs, 3) + " s",
          secs};
}

CriterionResult cora_oracle() {
  const auto t0 = Clock::now();
  Rng rng = make_rng(7, 2);
  double worst = 0.0;
  for (int i = 0; i < kCoraInstances; ++i) {
    const RegionWeightTable table = oracle::random_region_table(rng);
    const RegionWeightTable fast = compute_region_weights(table);
    const RegionWeightTable slow = oracle::region_weights(table);
    for (std::size_t r = 0; r < table.size(); ++r) {
      worst = std::max({worst, std::abs(fast[r].phi - slow[r].phi), std::abs(fast[r].psi - slow[r].psi),
                        std::abs(fast[r].phi_norm - slow[r].phi_norm), std::abs(fast[r].psi_norm - slow[r].psi_norm),
                        std::abs(fast[r].lambda - slow[r].lambda)});
    }
  }
  return {3, "cora-oracle", worst <= kCoraTol,
          std::to_string(kCoraInstances) + " instances, max abs diff " + fmt(worst, 3), since(t0)};
}

CriterionResult momentum_recurrence() {
  const auto t0 = Clock::now();
  const double eps = std::numeric_limits<double>::epsilon();
  AccumulatorState s;
  s.gamma = 0.7;
  s = accumulate_image_weights(s, {{1, {0.4, 0.8}}});
  const double first = s.omega.at(1);
  s = accumulate_image_weights(s, {{1, {1.0}}});
  const double second = s.omega.at(1);
  // Constant input is a fixed point.
  AccumulatorState f;
  double drift = 0.0;
  for (int t = 0; t < 50; ++t) {
    f = accumulate_image_weights(f, {{5, {0.37, 0.37}}});
    drift = std::max(drift, std::abs(f.omega.at(5) - 0.37));
  }
  const bool ok = std::abs(first - 0.6) <= 2 * eps && std::abs(second - 0.72) <= 2 * eps && s.t == 3 &&
                  drift <= 4 * eps;
  return {4, "momentum-recurrence", ok,
          "t1=" + fmt(first, 17) + " t2=" + fmt(second, 17) + " fixed-point drift=" + fmt(drift, 3), since(t0)};
}

CriterionResult noise_trend() {
  const auto t0 = Clock::now();
  BenchConfig cfg;
  cfg.episodes = kTrendEpisodes;
  cfg.ood = false;
  const BenchResult r = run_benchmark(cfg);
  std::vector<double> means;
  std::vector<double> local_03, base_03;
  for (double ratio : cfg.ratios) {
    double sum = 0.0;
    int n = 0;
    for (const auto& e : r.episodes) {
      if (e.ratio != ratio) continue;
      sum += e.acc_localncc;
      ++n;
      if (ratio == 0.3) {
        local_03.push_back(e.acc_localncc);
        base_03.push_back(e.acc_baseline);
      }
    }
    means.push_back(sum / n);
  }
  bool monotone = true;
  for (std::size_t i = 1; i < means.size(); ++i) monotone = monotone && means[i] <= means[i - 1];
  const SignTest st = sign_test(local_03, base_03);
  const double base_mean = std::accumulate(base_03.begin(), base_03.end(), 0.0) / base_03.size();
  const double local_mean = std::accumulate(local_03.begin(), local_03.end(), 0.0) / local_03.size();
  const double secs = since(t0);
  std::string detail = "mean acc by ratio:";
  for (double m : means) detail += " " + fmt(m, 5);
  detail += (monotone ? " (monotone)" : " (NOT monotone)");
  detail += "; ratio 0.3 adapted " + fmt(local_mean, 5) + " vs baseline " + fmt(base_mean, 5) + ", sign test " +
            std::to_string(st.wins) + "/" + std::to_string(st.losses) + "/" + std::to_string(st.ties) +
            " p=" + fmt(st.p_value, 3) + "; " + fmt(secs, 3) + " s";
  return {5, "noise-degradation-trend", monotone && st.p_value < kSignAlpha && secs < kTrendBudgetSeconds, detail,
          secs};
}

CriterionResult cora_separation() {
  const auto t0 = Clock::now();
  int separated = 0;
  for (int e = 0; e < kSeparationEpisodes; ++e) {
    GenConfig g;
    g.clutter_ratio = 0.3;
    g.ood_ratio = 0.3;
    g.seed = e;
    const SynthEpisode se = generate_episode_detailed(g);
    const Episode& ep = se.episode;
    Rng rng = make_rng(static_cast<std::uint64_t>(e), 0x5e9);
    RegionWeightTable regions;
    const AdaptConfig defaults;
    const int side = defaults.side_for(ep.height, ep.width);
    for (const auto& s : ep.support) {
      for (auto& crop : crop_random_regions(s.grid, defaults.regions_per_image, side, rng)) {
        RegionRecord rec;
        rec.sample_id = s.grid.id();
        rec.class_label = s.label;
        rec.box = crop.box;
        rec.feature = std::move(crop.feature);
        regions.push_back(std::move(rec));
      }
    }
    const RegionWeightTable table = compute_region_weights(std::move(regions));
    double clean_sum = 0.0, ood_sum = 0.0;
    int clean_n = 0, ood_n = 0;
    for (const auto& r : table) {
      const Sample& s = *ep.find_support(r.sample_id);
      if (s.noise == NoiseKind::Ood) {
        ood_sum += r.lambda;
        ++ood_n;
        continue;
      }
      const auto& mask = se.background.at(r.sample_id);
      int object = 0;
      for (int row = r.box.row0; row < r.box.row1; ++row)
        for (int col = r.box.col0; col < r.box.col1; ++col) object += mask[row * ep.width + col] ? 0 : 1;
      if (2 * object >= r.box.area()) {
        clean_sum += r.lambda;
        ++clean_n;
      }
    }
    if (clean_n > 0 && ood_n > 0 && clean_sum / clean_n > ood_sum / ood_n) ++separated;
  }
  return {6, "cora-separation", separated >= kSeparationRequired,
          std::to_string(separated) + "/" + std::to_string(kSeparationEpisodes) + " episodes separated", since(t0)};
}

CriterionResult entropy_effect() {
  const auto t0 = Clock::now();
  std::vector<double> mcm_off, mcm_on, au_off, au_on;
  for (int e = 0; e < kEntropyEpisodes; ++e) {
    GenConfig g;
    g.ood_ratio = 0.3;
    g.seed = e;
    const Episode ep = generate_episode(g);
    AdaptConfig a;
    a.seed = static_cast<std::uint64_t>(e);
    a.beta = 0.0;
    const EpisodeOutcome off = run_episode(ep, a, 1.0, true);
    a.beta = 0.3;
    const EpisodeOutcome on = run_episode(ep, a, 1.0, true);
    mcm_off.push_back(off.mcm_ood_mean);
    mcm_on.push_back(on.mcm_ood_mean);
    au_off.push_back(off.auroc);
    au_on.push_back(on.auroc);
  }
  const SignTest st = sign_test(mcm_off, mcm_on);  // win: score dropped with the entropy term
  const double au0 = std::accumulate(au_off.begin(), au_off.end(), 0.0) / au_off.size();
  const double au1 = std::accumulate(au_on.begin(), au_on.end(), 0.0) / au_on.size();
  const double m0 = std::accumulate(mcm_off.begin(), mcm_off.end(), 0.0) / mcm_off.size();
  const double m1 = std::accumulate(mcm_on.begin(), mcm_on.end(), 0.0) / mcm_on.size();
  return {7, "entropy-loss-effect", st.p_value < kSignAlpha && au1 > au0,
          "OOD MCM " + fmt(m0, 8) + " -> " + fmt(m1, 8) + ", sign test " + std::to_string(st.wins) + "/" +
              std::to_string(st.losses) + "/" + std::to_string(st.ties) + " p=" + fmt(st.p_value, 3) + "; AUROC " +
              fmt(au0, 8) + " -> " + fmt(au1, 8),
          since(t0)};
}

CriterionResult metric_oracles() {
  const auto t0 = Clock::now();
  Rng rng = make_rng(11, 3);
  std::uniform_int_distribution<int> size(1, 30);
  std::uniform_int_distribution<int> level(0, 10);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int mismatches = 0;
  for (int i = 0; i < kAurocInstances; ++i) {
    const bool discrete = i % 2 == 0;  // coarse scores force ties
    auto draw = [&] { return discrete ? level(rng) / 10.0 : unit(rng); };
    std::vector<double> id(size(rng)), ood(size(rng));
    for (double& s : id) s = draw();
    for (double& s : ood) s = draw();
    if (std::abs(auroc(id, ood) - oracle::pairwise_auroc(id, ood)) > 1e-12) ++mismatches;
  }
  std::vector<double> scores(kFprScores);
  for (double& s : scores) s = unit(rng);
  const double fpr = fpr_at_95_tpr(scores, scores);
  return {8, "metric-oracles", mismatches == 0 && fpr >= 0.94 && fpr <= 0.96,
          std::to_string(mismatches) + " AUROC mismatches in " + std::to_string(kAurocInstances) +
              "; FPR95 on identical scores " + fmt(fpr),
          since(t0)};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

CriterionResult determinism() {
  const auto t0 = Clock::now();
  BenchConfig cfg;
  cfg.episodes = 3;
  const auto root = std::filesystem::temp_directory_path() /
                    ("deta_determinism_" + std::to_string(Clock::now().time_since_epoch().count()));
  write_bench(run_benchmark(cfg), root / "a", false);
  write_bench(run_benchmark(cfg), root / "b", false);
  const std::string a = slurp(root / "a" / "summary.json");
  const std::string b = slurp(root / "b" / "summary.json");
  std::filesystem::remove_all(root);
  return {9, "bench-determinism", !a.empty() && a == b,
          std::string(a == b ? "identical" : "DIFFERENT") + " summaries (" + std::to_string(a.size()) + " bytes)",
          since(t0)};
}

}  // namespace

const std::vector<CriterionSpec>& acceptance_criteria() {
  static const std::vector<CriterionSpec> all{
      {1, "friedman-exactness", friedman_exactness}, {2, "gradient-correctness", gradient_correctness},
      {3, "cora-oracle", cora_oracle},               {4, "momentum-recurrence", momentum_recurrence},
      {5, "noise-degradation-trend", noise_trend},   {6, "cora-separation", cora_separation},
      {7, "entropy-loss-effect", entropy_effect},    {8, "metric-oracles", metric_oracles},
      {9, "bench-determinism", determinism},
  };
  return all;
}

std::string format_line(const CriterionResult& r) {
  std::ostringstream s;
  s << (r.passed ? "PASS" : "FAIL") << "  criterion " << r.id << "  " << r.name << "  " << r.detail;
  return s.str();
}

std::vector<CriterionResult> run_acceptance(std::ostream& out, const std::vector<int>& only) {
  std::vector<CriterionResult> results;
  for (const auto& c : acceptance_criteria()) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    CriterionResult r;
    try {
      r = c.run();
    } catch (const std::exception& e) {
      r = {c.id, c.name, false, std::string("threw: ") + e.what(), 0.0};
    }
    out << format_line(r) << std::endl;
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace deta::check
