#include "deta/friedman.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "deta/error.hpp"

namespace deta {

FriedmanResult friedman(std::span<const double> mean_ranks, int n) {
  const int k = static_cast<int>(mean_ranks.size());
  if (k < 2) throw Error(ErrorCode::RankSumInvalid, "need at least 2 methods");
  if (n < 2) throw Error(ErrorCode::RankSumInvalid, "need at least 2 datasets");
  double sum = 0.0;
  double sum_sq = 0.0;
  for (double r : mean_ranks) {
    sum += r;
    sum_sq += r * r;
  }
  const double kd = k;
  const double expected = kd * (kd + 1.0) / 2.0;
  if (std::abs(sum - expected) > 1e-6) {
    std::ostringstream msg;
    msg << "mean ranks sum to " << sum << ", expected " << expected;
    throw Error(ErrorCode::RankSumInvalid, msg.str());
  }
  FriedmanResult out;
  out.k = k;
  out.n = n;
  out.chi2 = 12.0 * n / (kd * (kd + 1.0)) * (sum_sq - kd * (kd + 1.0) * (kd + 1.0) / 4.0);
  // Tiny negative values are rounding on perfectly tied ranks.
  if (std::abs(out.chi2) < 1e-12) out.chi2 = 0.0;
  const double denom = n * (kd - 1.0) - out.chi2;
  out.ff = denom > 0.0 ? (n - 1.0) * out.chi2 / denom : std::numeric_limits<double>::infinity();
  return out;
}

FriedmanResult friedman_from_rank_matrix(const std::vector<std::vector<double>>& ranks) {
  if (ranks.empty()) throw Error(ErrorCode::EmptyList, "empty rank matrix");
  const std::size_t k = ranks.front().size();
  std::vector<double> mean(k, 0.0);
  for (const auto& row : ranks) {
    if (row.size() != k) throw Error(ErrorCode::RankSumInvalid, "ragged rank matrix");
    for (std::size_t j = 0; j < k; ++j) mean[j] += row[j];
  }
  for (double& m : mean) m /= static_cast<double>(ranks.size());
  return friedman(mean, static_cast<int>(ranks.size()));
}

std::vector<double> parse_rank_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item.substr(first), &used);
    } catch (const std::exception&) {
      throw Error(ErrorCode::RankSumInvalid, "not a number: '" + item + "'");
    }
    if (item.find_first_not_of(" \t\r\n", first + used) != std::string::npos) {
      throw Error(ErrorCode::RankSumInvalid, "not a number: '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace deta
