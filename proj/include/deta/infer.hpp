#pragma once

#include <span>
#include <vector>

#include "deta/cora.hpp"
#include "deta/episode.hpp"
#include "deta/head.hpp"
#include "deta/losses.hpp"

namespace deta {

// One centroid per class, row c - 1.  Centroids are plain means of unit
// embeddings and are not renormalised.
using Centroids = Eigen::MatrixXd;

// Mean head embedding of every bank region of each class, re-pooled from
// the support grid it was cropped from.
Centroids local_centroids(const HeadParams& params, const MemoryBank& bank, const Episode& episode);
// Mean head embedding of the support images of each class.
Centroids image_centroids(const HeadParams& params, const Episode& episode);
// Same, on frozen features with no head (the no-adaptation baseline).
Centroids raw_image_centroids(const Episode& episode);

// argmax_c cos(embedding, centroid_c), 1-based; ties go to the lowest class.
int nearest_centroid(const Centroids& centroids, const Eigen::Ref<const Feature>& embedding);

int local_ncc_predict(const HeadParams& params, const MemoryBank& bank, const Episode& episode,
                      const PatchGrid& query);
int ncc_predict(const HeadParams& params, const Episode& episode, const PatchGrid& query);
int ncc_predict_raw(const Episode& episode, const PatchGrid& query);

// max_c softmax_c(z / temperature).  Invariant to adding a constant to every logit.
double max_softmax(std::span<const double> logits, double temperature = 1.0);

// max_c softmax_c(cos(embedding, centroid_c) / temperature)
double mcm_score(const Centroids& centroids, const Eigen::Ref<const Feature>& embedding, double temperature = 1.0);
double mcm_score(const HeadParams& params, const Prototypes& prototypes, const PatchGrid& query,
                 double temperature = 1.0);

}  // namespace deta
