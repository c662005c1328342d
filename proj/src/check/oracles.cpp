#include "deta/check/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace deta::oracle {
namespace {

double dot(const Feature& a, const Feature& b) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double cos_naive(const Feature& a, const Feature& b) { return dot(a, b) / std::sqrt(dot(a, a) * dot(b, b)); }

}  // namespace

RegionWeightTable region_weights(const RegionWeightTable& regions) {
  RegionWeightTable out = regions;
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    double in_sum = 0.0, out_sum = 0.0;
    int in_n = 0, out_n = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (out[j].class_label == out[i].class_label) {
        if (out[j].sample_id == out[i].sample_id) continue;  // same image, including itself
        in_sum += cos_naive(out[i].feature, out[j].feature);
        ++in_n;
      } else {
        out_sum += cos_naive(out[i].feature, out[j].feature);
        ++out_n;
      }
    }
    out[i].phi = in_sum / in_n;
    out[i].psi = out_sum / out_n;
  }
  std::map<int, std::pair<double, double>> totals;
  for (const auto& r : out) {
    totals[r.class_label].first += std::exp(r.phi);
    totals[r.class_label].second += std::exp(r.psi);
  }
  for (auto& r : out) {
    r.phi_norm = std::exp(r.phi) / totals[r.class_label].first;
    r.psi_norm = std::exp(r.psi) / totals[r.class_label].second;
    r.lambda = r.phi_norm / r.psi_norm;
  }
  return out;
}

HeadParams finite_difference_gradient(const HeadParams& params, const LossBatch& batch, const LossOptions& options,
                                      double step) {
  const Eigen::VectorXd x0 = params.flatten();
  Eigen::VectorXd g(x0.size());
  HeadParams probe = params;
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    Eigen::VectorXd x = x0;
    x[i] = x0[i] + step;
    probe.unflatten(x);
    const double up = total_loss(probe, batch, options);
    x[i] = x0[i] - step;
    probe.unflatten(x);
    const double down = total_loss(probe, batch, options);
    g[i] = (up - down) / (2.0 * step);
  }
  HeadParams out = params.zeros_like();
  out.unflatten(g);
  return out;
}

double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

double pairwise_auroc(std::span<const double> id_scores, std::span<const double> ood_scores) {
  double wins = 0.0;
  for (double s : id_scores) {
    for (double o : ood_scores) {
      if (s > o) {
        wins += 1.0;
      } else if (s == o) {
        wins += 0.5;
      }
    }
  }
  return wins / (static_cast<double>(id_scores.size()) * static_cast<double>(ood_scores.size()));
}

double enumerated_fpr95(std::span<const double> id_scores, std::span<const double> ood_scores) {
  double best = -INFINITY;
  for (double t : id_scores) {
    std::size_t kept = 0;
    for (double s : id_scores) kept += s >= t ? 1 : 0;
    if (20 * kept >= 19 * id_scores.size() && t > best) best = t;
  }
  std::size_t fp = 0;
  for (double o : ood_scores) fp += o >= best ? 1 : 0;
  return static_cast<double>(fp) / static_cast<double>(ood_scores.size());
}

GradientInstance random_gradient_instance(Rng& rng) {
  std::uniform_int_distribution<int> pick(2, 3);
  std::uniform_int_distribution<int> small(1, 3);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> weight(0.05, 1.6);

  const int classes = pick(rng);
  const int dim = 4;
  const int embed = 5;
  GradientInstance inst;
  inst.params = init_head(dim, embed, rng());
  // Non-zero biases so the bias gradients are exercised away from the origin.
  for (Eigen::Index i = 0; i < inst.params.b1.size(); ++i) inst.params.b1[i] = 0.1 * normal(rng);
  for (Eigen::Index i = 0; i < inst.params.b2.size(); ++i) inst.params.b2[i] = 0.1 * normal(rng);

  std::vector<Feature> regions, images;
  LossBatch& b = inst.batch;
  b.num_classes = classes;
  for (int c = 1; c <= classes; ++c) {
    const int n_images = small(rng);
    const int n_regions = small(rng);
    for (int i = 0; i < n_images; ++i) {
      Feature x(dim);
      for (int k = 0; k < dim; ++k) x[k] = normal(rng);
      images.push_back(x);
      b.image_labels.push_back(c);
      b.image_omegas.push_back(weight(rng));
      for (int r = 0; r < n_regions; ++r) {
        Feature z = x;
        for (int k = 0; k < dim; ++k) z[k] += 0.5 * normal(rng);
        regions.push_back(z);
        b.region_labels.push_back(c);
        b.region_lambdas.push_back(weight(rng));
      }
    }
    // Keep at least one image per class above the threshold.
    b.image_omegas[b.image_omegas.size() - 1] = 1.0;
  }
  b.region_features.resize(static_cast<Eigen::Index>(regions.size()), dim);
  for (std::size_t i = 0; i < regions.size(); ++i) b.region_features.row(static_cast<Eigen::Index>(i)) = regions[i];
  b.image_features.resize(static_cast<Eigen::Index>(images.size()), dim);
  for (std::size_t i = 0; i < images.size(); ++i) b.image_features.row(static_cast<Eigen::Index>(i)) = images[i];
  inst.options = {0.3, 0.3, false};
  return inst;
}

RegionWeightTable random_region_table(Rng& rng) {
  std::uniform_int_distribution<int> classes_d(2, 4);
  std::uniform_int_distribution<int> images_d(2, 3);
  std::uniform_int_distribution<int> regions_d(1, 3);
  std::uniform_int_distribution<int> dim_d(2, 6);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int classes = classes_d(rng);
  const int dim = dim_d(rng);
  RegionWeightTable table;
  SampleId id = 0;
  for (int c = 1; c <= classes; ++c) {
    const int n_images = images_d(rng);
    for (int i = 0; i < n_images; ++i, ++id) {
      const int n_regions = regions_d(rng);
      for (int r = 0; r < n_regions; ++r) {
        RegionRecord rec;
        rec.sample_id = id;
        rec.class_label = c;
        rec.box = {r, 0, r + 1, 1};
        rec.feature = Feature(dim);
        for (int k = 0; k < dim; ++k) rec.feature[k] = normal(rng);
        table.push_back(std::move(rec));
      }
    }
  }
  return table;
}

}  // namespace deta::oracle
