#pragma once

#include <span>
#include <vector>

namespace deta {

struct MeanCi {
  double mean = 0.0;
  double half_width = 0.0;  // 1.96 * sample sd / sqrt(n)
};

MeanCi accuracy_ci(std::span<const double> values);

// Threshold is the largest score that keeps at least 95% of ID scores at or
// above it; returns the share of OOD scores at or above that threshold.
double fpr_at_95_tpr(std::span<const double> id_scores, std::span<const double> ood_scores);

// P(id > ood) + 0.5 P(id == ood), computed from ranks.
double auroc(std::span<const double> id_scores, std::span<const double> ood_scores);

struct SignTest {
  int wins = 0;
  int losses = 0;
  int ties = 0;
  double p_value = 1.0;  // one-sided, H1: wins are more likely than losses
};

// Pairs where a[i] > b[i] count as wins; ties are dropped.
SignTest sign_test(std::span<const double> a, std::span<const double> b);
// P(X >= wins) for X ~ Binomial(n, 1/2).
double binomial_upper_tail(int wins, int n);

}  // namespace deta
