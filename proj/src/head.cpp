#include "deta/head.hpp"

#include <algorithm>
#include <cmath>

#include "deta/error.hpp"
#include "deta/random.hpp"

namespace deta {

HeadParams HeadParams::zeros(int input_dim, int hidden_dim, int embed_dim) {
  HeadParams p;
  p.w1 = Eigen::MatrixXd::Zero(input_dim, hidden_dim);
  p.b1 = Eigen::VectorXd::Zero(hidden_dim);
  p.w2 = Eigen::MatrixXd::Zero(hidden_dim, embed_dim);
  p.b2 = Eigen::VectorXd::Zero(embed_dim);
  return p;
}

void HeadParams::axpy(double scale, const HeadParams& other) {
  w1 += scale * other.w1;
  b1 += scale * other.b1;
  w2 += scale * other.w2;
  b2 += scale * other.b2;
}

std::size_t HeadParams::size() const {
  return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size());
}

Eigen::VectorXd HeadParams::flatten() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(size()));
  flat << w1.reshaped(), b1, w2.reshaped(), b2;
  return flat;
}

void HeadParams::unflatten(const Eigen::VectorXd& flat) {
  if (flat.size() != static_cast<Eigen::Index>(size())) {
    throw Error(ErrorCode::ConfigInvalid, "flat parameter vector has the wrong length");
  }
  Eigen::Index at = 0;
  auto take = [&](auto& block) {
    block.reshaped() = flat.segment(at, block.size());
    at += block.size();
  };
  take(w1);
  take(b1);
  take(w2);
  take(b2);
}

bool HeadParams::all_finite() const {
  return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
}

bool HeadParams::operator==(const HeadParams& o) const {
  return w1.rows() == o.w1.rows() && w1.cols() == o.w1.cols() && w2.rows() == o.w2.rows() &&
         w2.cols() == o.w2.cols() && w1 == o.w1 && b1 == o.b1 && w2 == o.w2 && b2 == o.b2;
}

HeadParams init_head(int input_dim, int embed_dim, std::uint64_t seed) {
  if (input_dim < 1 || embed_dim < 1) throw Error(ErrorCode::ConfigInvalid, "head dimensions must be positive");
  const int hidden = std::max(input_dim, embed_dim);
  HeadParams p = HeadParams::zeros(input_dim, hidden, embed_dim);
  Rng rng = make_rng(seed, 0x4845'4144);
  auto fill = [&](Eigen::MatrixXd& m) {
    const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
  };
  fill(p.w1);
  fill(p.w2);
  return p;
}

HeadBatch head_forward_batch(const HeadParams& params, const Eigen::MatrixXd& inputs) {
  if (inputs.cols() != params.input_dim()) {
    throw Error(ErrorCode::ConfigInvalid, "feature length does not match the head input dimension");
  }
  HeadBatch b;
  b.inputs = inputs;
  b.pre_hidden = (inputs * params.w1).rowwise() + params.b1.transpose();
  b.hidden = b.pre_hidden.cwiseMax(0.0);
  b.pre_norm = (b.hidden * params.w2).rowwise() + params.b2.transpose();
  b.norms = b.pre_norm.rowwise().norm();
  for (Eigen::Index i = 0; i < b.norms.size(); ++i) {
    if (!std::isfinite(b.norms[i])) throw Error(ErrorCode::NonFiniteLoss, "projection overflowed");
    if (!(b.norms[i] > kNormEps)) throw Error(ErrorCode::ZeroEmbedding, "projection collapsed to zero");
  }
  b.embeddings = b.norms.cwiseInverse().asDiagonal() * b.pre_norm;
  return b;
}

Feature head_forward(const HeadParams& params, const Eigen::Ref<const Feature>& feature) {
  Eigen::MatrixXd row = feature.transpose();
  return head_forward_batch(params, row).embeddings.row(0).transpose();
}

void head_backward_batch(const HeadParams& params, const HeadBatch& b, const Eigen::MatrixXd& grad_embeddings,
                         HeadParams& grad) {
  // Through the normalisation: (g - e (e.g)) / |u|.
  const Eigen::VectorXd radial = (b.embeddings.cwiseProduct(grad_embeddings)).rowwise().sum();
  const Eigen::MatrixXd g_pre_norm =
      b.norms.cwiseInverse().asDiagonal() * (grad_embeddings - radial.asDiagonal() * b.embeddings);
  grad.w2.noalias() += b.hidden.transpose() * g_pre_norm;
  grad.b2 += g_pre_norm.colwise().sum().transpose();
  const Eigen::MatrixXd g_hidden = g_pre_norm * params.w2.transpose();
  const Eigen::MatrixXd g_pre_hidden = g_hidden.cwiseProduct((b.pre_hidden.array() > 0.0).cast<double>().matrix());
  grad.w1.noalias() += b.inputs.transpose() * g_pre_hidden;
  grad.b1 += g_pre_hidden.colwise().sum().transpose();
}

}  // namespace deta
