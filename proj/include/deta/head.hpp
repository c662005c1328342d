#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "deta/episode.hpp"

namespace deta {

inline constexpr int kDefaultEmbedDim = 128;

// Two-layer ReLU projection head: e = normalize(W2' relu(W1' x + b1) + b2).
struct HeadParams {
  Eigen::MatrixXd w1;  // d x h
  Eigen::VectorXd b1;  // h
  Eigen::MatrixXd w2;  // h x m
  Eigen::VectorXd b2;  // m

  int input_dim() const { return static_cast<int>(w1.rows()); }
  int hidden_dim() const { return static_cast<int>(w1.cols()); }
  int embed_dim() const { return static_cast<int>(w2.cols()); }

  static HeadParams zeros(int input_dim, int hidden_dim, int embed_dim);
  HeadParams zeros_like() const { return zeros(input_dim(), hidden_dim(), embed_dim()); }

  // this += scale * other
  void axpy(double scale, const HeadParams& other);

  std::size_t size() const;
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& flat);
  bool all_finite() const;

  bool operator==(const HeadParams& other) const;
};

// Hidden width max(d, m); weights uniform in +-sqrt(6 / (fan_in + fan_out)),
// biases zero.
HeadParams init_head(int input_dim, int embed_dim, std::uint64_t seed);

Feature head_forward(const HeadParams& params, const Eigen::Ref<const Feature>& feature);

// Activations of a batch whose rows are input features; kept for backward.
struct HeadBatch {
  Eigen::MatrixXd inputs;      // n x d
  Eigen::MatrixXd pre_hidden;  // n x h
  Eigen::MatrixXd hidden;      // n x h
  Eigen::MatrixXd pre_norm;    // n x m
  Eigen::VectorXd norms;       // n
  Eigen::MatrixXd embeddings;  // n x m, unit rows
};

HeadBatch head_forward_batch(const HeadParams& params, const Eigen::MatrixXd& inputs);

// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(embeddings).
void head_backward_batch(const HeadParams& params, const HeadBatch& batch, const Eigen::MatrixXd& grad_embeddings,
                         HeadParams& grad);

}  // namespace deta
