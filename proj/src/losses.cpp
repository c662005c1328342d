#include "deta/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "deta/error.hpp"

namespace deta {
namespace {

void check_prototypes(const Prototypes& protos) {
  for (std::size_t c = 0; c < protos.mu.size(); ++c) {
    if (protos.degenerate[c] || !(protos.mu[c].norm() > kNormEps)) {
      throw Error(ErrorCode::DegeneratePrototype, "prototype of class " + std::to_string(c + 1) + " has zero norm");
    }
  }
}

// Row-wise softmax.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p = logits.colwise() - logits.rowwise().maxCoeff();
  p = p.array().exp().matrix();
  return p.array().colwise() / p.rowwise().sum().array();
}

Eigen::MatrixXd cosine_matrix(const Eigen::MatrixXd& rows, const Eigen::MatrixXd& protos) {
  const Eigen::VectorXd rn = rows.rowwise().norm();
  const Eigen::VectorXd pn = protos.rowwise().norm();
  return rn.cwiseInverse().asDiagonal() * (rows * protos.transpose()) * pn.cwiseInverse().asDiagonal();
}

double entropy_row(const Eigen::Ref<const Eigen::RowVectorXd>& p) {
  double h = 0.0;
  for (Eigen::Index c = 0; c < p.size(); ++c) {
    if (p[c] > 0.0) h -= p[c] * std::log(p[c]);
  }
  return h;
}

double clipped_weight(double lambda, double threshold) { return lambda < threshold ? 0.0 : lambda; }

struct Forward {
  HeadBatch regions;
  HeadBatch images;
  Prototypes prototypes;
  Eigen::MatrixXd proto_matrix;  // C x m
  Eigen::MatrixXd cosines;       // regions x C
  Eigen::MatrixXd posteriors;    // regions x C
  double clean = 0.0;
  double noise = 0.0;
  std::size_t noisy = 0;
};

Forward forward(const HeadParams& params, const LossBatch& batch, const LossOptions& opt) {
  const auto n_regions = static_cast<std::size_t>(batch.region_features.rows());
  if (batch.region_labels.size() != n_regions || batch.region_lambdas.size() != n_regions) {
    throw Error(ErrorCode::ConfigInvalid, "region labels/weights do not match region features");
  }
  if (n_regions == 0) throw Error(ErrorCode::ConfigInvalid, "loss needs at least one region");
  Forward f;
  f.regions = head_forward_batch(params, batch.region_features);
  f.images = head_forward_batch(params, batch.image_features);
  f.prototypes = weighted_prototypes(f.images.embeddings, batch.image_labels, batch.image_omegas, batch.num_classes,
                                     opt.threshold);
  check_prototypes(f.prototypes);
  f.proto_matrix = f.prototypes.matrix();
  f.cosines = cosine_matrix(f.regions.embeddings, f.proto_matrix);
  f.posteriors = softmax_rows(f.cosines);

  double clean_sum = 0.0;
  double entropy_sum = 0.0;
  for (std::size_t i = 0; i < n_regions; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const double w = clipped_weight(batch.region_lambdas[i], opt.threshold);
    if (w > 0.0) {
      const double p = f.posteriors(row, batch.region_labels[i] - 1);
      clean_sum += w * std::log(std::max(p, kSoftmaxFloor));
    }
    if (batch.region_lambdas[i] < opt.threshold) {
      entropy_sum += entropy_row(f.posteriors.row(row));
      ++f.noisy;
    }
  }
  f.clean = -clean_sum / static_cast<double>(n_regions);
  f.noise = f.noisy == 0 ? 0.0 : -entropy_sum / static_cast<double>(f.noisy);
  return f;
}

}  // namespace

Eigen::MatrixXd Prototypes::matrix() const {
  if (mu.empty()) return {};
  Eigen::MatrixXd m(static_cast<Eigen::Index>(mu.size()), mu.front().size());
  for (std::size_t c = 0; c < mu.size(); ++c) m.row(static_cast<Eigen::Index>(c)) = mu[c].transpose();
  return m;
}

Prototypes weighted_prototypes(const Eigen::MatrixXd& embeddings, std::span<const int> labels,
                               std::span<const double> omegas, int num_classes, double threshold) {
  const auto n = static_cast<std::size_t>(embeddings.rows());
  if (labels.size() != n || omegas.size() != n) {
    throw Error(ErrorCode::ConfigInvalid, "image labels/weights do not match image embeddings");
  }
  Prototypes out;
  out.coefficients = Eigen::MatrixXd::Zero(num_classes, static_cast<Eigen::Index>(n));
  out.fallback.assign(num_classes, false);
  out.degenerate.assign(num_classes, false);
  for (int c = 1; c <= num_classes; ++c) {
    std::vector<std::size_t> members;
    int surviving = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (labels[j] != c) continue;
      members.push_back(j);
      if (omegas[j] >= threshold && omegas[j] != 0.0) ++surviving;
    }
    if (members.empty()) {
      throw Error(ErrorCode::TooFewSamples, "class " + std::to_string(c) + " has no images");
    }
    auto row = out.coefficients.row(c - 1);
    for (auto j : members) {
      if (surviving > 0 && omegas[j] >= threshold) row[static_cast<Eigen::Index>(j)] = omegas[j] / surviving;
    }
    Feature mu = (row * embeddings).transpose();
    if (surviving == 0 || !(mu.norm() > kNormEps)) {
      out.fallback[c - 1] = true;
      row.setZero();
      for (auto j : members) row[static_cast<Eigen::Index>(j)] = 1.0 / static_cast<double>(members.size());
      mu = (row * embeddings).transpose();
    }
    out.degenerate[c - 1] = !(mu.norm() > kNormEps);
    out.mu.push_back(std::move(mu));
  }
  return out;
}

Prototypes weighted_prototypes(std::span<const WeightedImage> images, int num_classes, double threshold) {
  if (images.empty()) throw Error(ErrorCode::TooFewSamples, "no images for prototypes");
  Eigen::MatrixXd emb(static_cast<Eigen::Index>(images.size()), images.front().embedding.size());
  std::vector<int> labels;
  std::vector<double> omegas;
  for (std::size_t j = 0; j < images.size(); ++j) {
    emb.row(static_cast<Eigen::Index>(j)) = images[j].embedding.transpose();
    labels.push_back(images[j].label);
    omegas.push_back(images[j].omega);
  }
  return weighted_prototypes(emb, labels, omegas, num_classes, threshold);
}

Eigen::VectorXd class_posteriors(const Eigen::Ref<const Feature>& embedding, const Prototypes& prototypes) {
  check_prototypes(prototypes);
  const Eigen::MatrixXd row = embedding.transpose();
  return softmax_rows(cosine_matrix(row, prototypes.matrix())).row(0).transpose();
}

double shannon_entropy(const Eigen::Ref<const Eigen::VectorXd>& p) { return entropy_row(p.transpose()); }

double clean_prototype_loss(const Eigen::MatrixXd& region_embeddings, std::span<const double> lambdas,
                            std::span<const int> labels, const Prototypes& prototypes, double threshold) {
  const auto n = static_cast<std::size_t>(region_embeddings.rows());
  if (lambdas.size() != n || labels.size() != n) {
    throw Error(ErrorCode::ConfigInvalid, "region labels/weights do not match region embeddings");
  }
  if (n == 0) return 0.0;
  check_prototypes(prototypes);
  const Eigen::MatrixXd p = softmax_rows(cosine_matrix(region_embeddings, prototypes.matrix()));
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = clipped_weight(lambdas[i], threshold);
    if (w > 0.0) sum += w * std::log(std::max(p(static_cast<Eigen::Index>(i), labels[i] - 1), kSoftmaxFloor));
  }
  return -sum / static_cast<double>(n);
}

double noise_entropy_loss(const Eigen::MatrixXd& noisy_embeddings, const Prototypes& prototypes) {
  if (noisy_embeddings.rows() == 0) return 0.0;
  check_prototypes(prototypes);
  const Eigen::MatrixXd p = softmax_rows(cosine_matrix(noisy_embeddings, prototypes.matrix()));
  double sum = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) sum += entropy_row(p.row(i));
  return -sum / static_cast<double>(p.rows());
}

double total_loss(const HeadParams& params, const LossBatch& batch, const LossOptions& options) {
  const Forward f = forward(params, batch, options);
  return f.clean + options.beta * f.noise;
}

LossAndGrad total_loss_and_grad(const HeadParams& params, const LossBatch& batch, const LossOptions& opt) {
  const Forward f = forward(params, batch, opt);
  LossAndGrad out;
  out.clean = f.clean;
  out.noise = f.noise;
  out.loss = f.clean + opt.beta * f.noise;
  out.noisy_regions = f.noisy;
  if (!std::isfinite(out.loss)) throw Error(ErrorCode::NonFiniteLoss, "adaptation loss is not finite");

  const Eigen::Index n = f.posteriors.rows();
  const Eigen::Index classes = f.posteriors.cols();
  const double inv_regions = 1.0 / static_cast<double>(n);

  // d(loss)/d(cosine) per region and class.
  Eigen::MatrixXd g_cos = Eigen::MatrixXd::Zero(n, classes);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = f.posteriors.row(i);
    const double lambda = batch.region_lambdas[static_cast<std::size_t>(i)];
    const double w = clipped_weight(lambda, opt.threshold);
    const int y = batch.region_labels[static_cast<std::size_t>(i)] - 1;
    if (w > 0.0 && p[y] >= kSoftmaxFloor) {
      g_cos.row(i) += w * inv_regions * p;
      g_cos(i, y) -= w * inv_regions;
    }
    if (lambda < opt.threshold && opt.beta != 0.0) {
      // d(-H)/dz_c = p_c (log p_c + H)
      const double h = entropy_row(p);
      const double scale = opt.beta / static_cast<double>(f.noisy);
      for (Eigen::Index c = 0; c < classes; ++c) {
        if (p[c] > 0.0) g_cos(i, c) += scale * p[c] * (std::log(p[c]) + h);
      }
    }
  }

  const Eigen::MatrixXd& r = f.regions.embeddings;
  const Eigen::MatrixXd& mu = f.proto_matrix;
  const Eigen::VectorXd r_inv = r.rowwise().norm().cwiseInverse();
  const Eigen::VectorXd mu_inv = mu.rowwise().norm().cwiseInverse();
  const Eigen::VectorXd g_dot_cos_rows = g_cos.cwiseProduct(f.cosines).rowwise().sum();
  const Eigen::VectorXd g_dot_cos_cols = g_cos.cwiseProduct(f.cosines).colwise().sum().transpose();

  const Eigen::MatrixXd g_r = r_inv.asDiagonal() * (g_cos * mu_inv.asDiagonal() * mu) -
                              (g_dot_cos_rows.cwiseProduct(r_inv.cwiseAbs2())).asDiagonal() * r;

  out.grad = params.zeros_like();
  head_backward_batch(params, f.regions, g_r, out.grad);
  if (!opt.detach_prototypes) {
    const Eigen::MatrixXd g_mu = mu_inv.asDiagonal() * ((g_cos.transpose() * r_inv.asDiagonal()) * r) -
                                 (g_dot_cos_cols.cwiseProduct(mu_inv.cwiseAbs2())).asDiagonal() * mu;
    const Eigen::MatrixXd g_images = f.prototypes.coefficients.transpose() * g_mu;
    head_backward_batch(params, f.images, g_images, out.grad);
  }
  return out;
}

}  // namespace deta
