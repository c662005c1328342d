#include "deta/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "deta/error.hpp"

namespace deta {
namespace {

void require_nonempty(std::span<const double> v, const char* what) {
  if (v.empty()) throw Error(ErrorCode::EmptyList, what);
}

}  // namespace

MeanCi accuracy_ci(std::span<const double> values) {
  require_nonempty(values, "no accuracies to aggregate");
  const double n = static_cast<double>(values.size());
  MeanCi out;
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() == 1) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.half_width = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return out;
}

double fpr_at_95_tpr(std::span<const double> id_scores, std::span<const double> ood_scores) {
  require_nonempty(id_scores, "no ID scores");
  require_nonempty(ood_scores, "no OOD scores");
  std::vector<double> id(id_scores.begin(), id_scores.end());
  std::sort(id.begin(), id.end(), std::greater<>());
  const auto need = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(id.size()) - 1e-9));
  const double threshold = id[std::max<std::size_t>(need, 1) - 1];
  const auto fp = std::count_if(ood_scores.begin(), ood_scores.end(), [&](double s) { return s >= threshold; });
  return static_cast<double>(fp) / static_cast<double>(ood_scores.size());
}

double auroc(std::span<const double> id_scores, std::span<const double> ood_scores) {
  require_nonempty(id_scores, "no ID scores");
  require_nonempty(ood_scores, "no OOD scores");
  // Mann-Whitney U with midranks over the pooled sample.
  struct Item {
    double score;
    bool is_id;
  };
  std::vector<Item> all;
  all.reserve(id_scores.size() + ood_scores.size());
  for (double s : id_scores) all.push_back({s, true});
  for (double s : ood_scores) all.push_back({s, false});
  std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.score < b.score; });
  double id_rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (all[t].is_id) id_rank_sum += midrank;
    }
    i = j;
  }
  const double n_id = static_cast<double>(id_scores.size());
  const double n_ood = static_cast<double>(ood_scores.size());
  const double u = id_rank_sum - n_id * (n_id + 1.0) / 2.0;
  return u / (n_id * n_ood);
}

double binomial_upper_tail(int wins, int n) {
  if (n <= 0 || wins <= 0) return 1.0;
  if (wins > n) return 0.0;
  // Sum in log space; n stays small (episode counts).
  double p = 0.0;
  for (int k = wins; k <= n; ++k) {
    const double log_term = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) - n * std::log(2.0);
    p += std::exp(log_term);
  }
  return std::min(p, 1.0);
}

SignTest sign_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::ConfigInvalid, "sign test needs paired samples");
  require_nonempty(a, "no pairs for the sign test");
  SignTest out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) {
      ++out.wins;
    } else if (a[i] < b[i]) {
      ++out.losses;
    } else {
      ++out.ties;
    }
  }
  out.p_value = binomial_upper_tail(out.wins, out.wins + out.losses);
  return out;
}

}  // namespace deta
