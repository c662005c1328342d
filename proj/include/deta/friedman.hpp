#pragma once

#include <span>
#include <string>
#include <vector>

namespace deta {

struct FriedmanResult {
  double chi2 = 0.0;
  double ff = 0.0;  // Iman-Davenport F statistic
  int k = 0;
  int n = 0;
};

// `mean_ranks` holds the average rank of each of k methods over n datasets.
FriedmanResult friedman(std::span<const double> mean_ranks, int n);
// Rows are datasets, columns methods; entries are ranks within the row.
FriedmanResult friedman_from_rank_matrix(const std::vector<std::vector<double>>& ranks);

// Parses "9.6, 10.25,8.8" style lists.
std::vector<double> parse_rank_list(const std::string& text);

}  // namespace deta
