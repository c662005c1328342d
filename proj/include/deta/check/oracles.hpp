#pragma once

// Slow reference implementations used to cross-check the library.  They
// share no code with the routines they check beyond the data types.

#include <span>
#include <vector>

#include "deta/cora.hpp"
#include "deta/head.hpp"
#include "deta/losses.hpp"
#include "deta/random.hpp"

namespace deta::oracle {

// Region weights by direct nested loops and a plain (unshifted) softmax.
RegionWeightTable region_weights(const RegionWeightTable& regions);

// Central differences of total_loss over every head parameter.
HeadParams finite_difference_gradient(const HeadParams& params, const LossBatch& batch, const LossOptions& options,
                                      double step);

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor);

double pairwise_auroc(std::span<const double> id_scores, std::span<const double> ood_scores);
// Scans every candidate threshold and keeps the largest one with TPR >= 0.95.
double enumerated_fpr95(std::span<const double> id_scores, std::span<const double> ood_scores);

// Random instances for the property suites.
struct GradientInstance {
  HeadParams params;
  LossBatch batch;
  LossOptions options;
};
GradientInstance random_gradient_instance(Rng& rng);
RegionWeightTable random_region_table(Rng& rng);

}  // namespace deta::oracle
