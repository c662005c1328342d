#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "deta/head.hpp"

namespace deta {

// Lower bound applied to probabilities before taking a log.
inline constexpr double kSoftmaxFloor = 1e-12;

struct WeightedImage {
  Feature embedding;
  int label = 0;
  double omega = 0.0;
};

// Class prototypes as explicit linear combinations of image embeddings,
// so the loss gradient can be routed back to every contributing image.
struct Prototypes {
  std::vector<Feature> mu;           // mu[c - 1]
  Eigen::MatrixXd coefficients;      // C x n_images
  std::vector<bool> fallback;        // class fell back to the unweighted mean
  std::vector<bool> degenerate;      // prototype norm still <= kNormEps

  int num_classes() const { return static_cast<int>(mu.size()); }
  Eigen::MatrixXd matrix() const;    // C x m, one prototype per row
};

// mu_c = (1/N_c) sum_{y_i = c} w_i e_i with w_i = omega_i, or 0 when
// omega_i < threshold; N_c counts the surviving images.  A class whose
// images are all filtered, or whose weighted mean cancels to zero, uses the
// plain mean of its image embeddings instead.
Prototypes weighted_prototypes(std::span<const WeightedImage> images, int num_classes, double threshold);
Prototypes weighted_prototypes(const Eigen::MatrixXd& embeddings, std::span<const int> labels,
                               std::span<const double> omegas, int num_classes, double threshold);

// Softmax over cosine similarity to each prototype.
Eigen::VectorXd class_posteriors(const Eigen::Ref<const Feature>& embedding, const Prototypes& prototypes);

double shannon_entropy(const Eigen::Ref<const Eigen::VectorXd>& p);

// Rows of `region_embeddings` are region embeddings; the denominator is the
// number of rows even when weights below the threshold are zeroed.
double clean_prototype_loss(const Eigen::MatrixXd& region_embeddings, std::span<const double> lambdas,
                            std::span<const int> labels, const Prototypes& prototypes, double threshold);

// Minus the mean posterior entropy over the noisy regions; 0 for an empty set.
double noise_entropy_loss(const Eigen::MatrixXd& noisy_embeddings, const Prototypes& prototypes);

// Everything one adaptation step needs, expressed in frozen-backbone features.
struct LossBatch {
  Eigen::MatrixXd region_features;  // rows: cropped regions
  std::vector<int> region_labels;
  std::vector<double> region_lambdas;
  Eigen::MatrixXd image_features;   // rows: support images, then augmented ones
  std::vector<int> image_labels;
  std::vector<double> image_omegas;
  int num_classes = 0;
};

struct LossOptions {
  double beta = 0.3;
  double threshold = 0.3;
  // Treat prototypes as constants in the backward pass.
  bool detach_prototypes = false;
};

struct LossAndGrad {
  double loss = 0.0;
  double clean = 0.0;
  double noise = 0.0;
  std::size_t noisy_regions = 0;
  HeadParams grad;
};

// L = L_clean + beta * L_noise and its exact gradient w.r.t. the head,
// differentiating through region embeddings, image embeddings and prototypes.
LossAndGrad total_loss_and_grad(const HeadParams& params, const LossBatch& batch, const LossOptions& options);
double total_loss(const HeadParams& params, const LossBatch& batch, const LossOptions& options);

}  // namespace deta
