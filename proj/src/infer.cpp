#include "deta/infer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "deta/error.hpp"

namespace deta {
namespace {

Eigen::MatrixXd stack_features(const std::vector<Feature>& rows, int dim) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return m;
}

Centroids class_means(const Eigen::MatrixXd& rows, const std::vector<int>& labels, int num_classes) {
  Centroids out = Centroids::Zero(num_classes, rows.cols());
  std::vector<int> counts(num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out.row(labels[i] - 1) += rows.row(static_cast<Eigen::Index>(i));
    ++counts[labels[i] - 1];
  }
  for (int c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) throw Error(ErrorCode::TooFewSamples, "class " + std::to_string(c + 1) + " has no support image");
    out.row(c) /= counts[c];
  }
  return out;
}

Eigen::MatrixXd support_features(const Episode& episode, std::vector<int>& labels) {
  std::vector<Feature> rows;
  for (const auto& s : episode.support) {
    rows.push_back(image_feature(s.grid));
    labels.push_back(s.label);
  }
  return stack_features(rows, episode.dim);
}

}  // namespace

Centroids local_centroids(const HeadParams& params, const MemoryBank& bank, const Episode& episode) {
  std::vector<Feature> rows;
  std::vector<int> labels;
  for (int c = 1; c <= episode.num_classes; ++c) {
    const auto& entries = bank.entries(c);
    if (entries.empty()) throw Error(ErrorCode::EmptyBankClass, "no bank entries for class " + std::to_string(c));
    for (const auto& e : entries) {
      const Sample* s = episode.find_support(e.sample_id);
      if (s == nullptr) {
        throw Error(ErrorCode::SchemaError, "bank refers to unknown sample " + std::to_string(e.sample_id));
      }
      rows.push_back(pool_region(s->grid, e.box));
      labels.push_back(c);
    }
  }
  const HeadBatch b = head_forward_batch(params, stack_features(rows, episode.dim));
  return class_means(b.embeddings, labels, episode.num_classes);
}

Centroids image_centroids(const HeadParams& params, const Episode& episode) {
  std::vector<int> labels;
  const HeadBatch b = head_forward_batch(params, support_features(episode, labels));
  return class_means(b.embeddings, labels, episode.num_classes);
}

Centroids raw_image_centroids(const Episode& episode) {
  std::vector<int> labels;
  Eigen::MatrixXd x = support_features(episode, labels);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double n = x.row(i).norm();
    if (n <= kNormEps) throw Error(ErrorCode::ZeroVector, "zero support feature");
    x.row(i) /= n;
  }
  return class_means(x, labels, episode.num_classes);
}

int nearest_centroid(const Centroids& centroids, const Eigen::Ref<const Feature>& embedding) {
  int best = 0;
  double best_cos = -std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    if (centroids.row(c).norm() <= kNormEps) {
      throw Error(ErrorCode::DegeneratePrototype, "zero centroid for class " + std::to_string(c + 1));
    }
    const double s = cosine(centroids.row(c).transpose(), embedding);
    if (s > best_cos) {
      best_cos = s;
      best = static_cast<int>(c);
    }
  }
  return best + 1;
}

int local_ncc_predict(const HeadParams& params, const MemoryBank& bank, const Episode& episode,
                      const PatchGrid& query) {
  return nearest_centroid(local_centroids(params, bank, episode), head_forward(params, image_feature(query)));
}

int ncc_predict(const HeadParams& params, const Episode& episode, const PatchGrid& query) {
  return nearest_centroid(image_centroids(params, episode), head_forward(params, image_feature(query)));
}

int ncc_predict_raw(const Episode& episode, const PatchGrid& query) {
  return nearest_centroid(raw_image_centroids(episode), image_feature(query));
}

double max_softmax(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw Error(ErrorCode::ConfigInvalid, "temperature must be > 0");
  if (logits.empty()) throw Error(ErrorCode::EmptyList, "max_softmax of no logits");
  const double top = *std::max_element(logits.begin(), logits.end());
  // max softmax = 1 / sum exp((z_c - z_max) / T)
  double sum = 0.0;
  for (double z : logits) sum += std::exp((z - top) / temperature);
  return 1.0 / sum;
}

double mcm_score(const Centroids& centroids, const Eigen::Ref<const Feature>& embedding, double temperature) {
  std::vector<double> cos(static_cast<std::size_t>(centroids.rows()));
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) cos[c] = cosine(centroids.row(c).transpose(), embedding);
  return max_softmax(cos, temperature);
}

double mcm_score(const HeadParams& params, const Prototypes& prototypes, const PatchGrid& query, double temperature) {
  return mcm_score(prototypes.matrix(), head_forward(params, image_feature(query)), temperature);
}

}  // namespace deta
