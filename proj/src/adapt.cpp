#include "deta/adapt.hpp"

#include <cmath>
#include <map>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "deta/augment.hpp"
#include "deta/error.hpp"

namespace deta {
namespace {

constexpr std::uint64_t kStreamCrop = 11;
constexpr std::uint64_t kStreamSwap = 12;

void check(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ConfigInvalid, what);
}

Eigen::MatrixXd stack(const std::vector<Feature>& rows, int dim) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return m;
}

}  // namespace

void AdaptConfig::validate() const {
  check(iterations >= 1, "iterations must be >= 1");
  check(regions_per_image >= 1, "regions_per_image must be >= 1");
  check(region_side >= 0, "region_side must be >= 0");
  check(threshold > 0.0, "threshold must be > 0");
  check(beta >= 0.0, "beta must be >= 0");
  check(momentum >= 0.0 && momentum <= 1.0, "momentum must lie in [0, 1]");
  check(learning_rate > 0.0, "learning_rate must be > 0");
  check(intraswap_per_class >= 0, "intraswap_per_class must be >= 0");
  check(embed_dim >= 1, "embed_dim must be >= 1");
}

int AdaptConfig::side_for(int height, int width) const {
  return region_side > 0 ? region_side : default_region_side(height, width);
}

AdaptConfig adapt_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigInvalid, "adapt config must be a JSON object");
  static const std::set<std::string> known{"iterations", "regions_per_image", "region_side", "threshold", "beta",
                                           "momentum", "learning_rate", "intraswap_per_class", "embed_dim",
                                           "detach_prototypes", "seed"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw Error(ErrorCode::ConfigInvalid, "unknown adapt key '" + key + "'");
  }
  AdaptConfig cfg;
  try {
    cfg.iterations = j.value("iterations", cfg.iterations);
    cfg.regions_per_image = j.value("regions_per_image", cfg.regions_per_image);
    cfg.region_side = j.value("region_side", cfg.region_side);
    cfg.threshold = j.value("threshold", cfg.threshold);
    cfg.beta = j.value("beta", cfg.beta);
    cfg.momentum = j.value("momentum", cfg.momentum);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.intraswap_per_class = j.value("intraswap_per_class", cfg.intraswap_per_class);
    cfg.embed_dim = j.value("embed_dim", cfg.embed_dim);
    cfg.detach_prototypes = j.value("detach_prototypes", cfg.detach_prototypes);
    cfg.seed = j.value("seed", cfg.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const AdaptConfig& cfg) {
  return {{"iterations", cfg.iterations},
          {"regions_per_image", cfg.regions_per_image},
          {"region_side", cfg.region_side},
          {"threshold", cfg.threshold},
          {"beta", cfg.beta},
          {"momentum", cfg.momentum},
          {"learning_rate", cfg.learning_rate},
          {"intraswap_per_class", cfg.intraswap_per_class},
          {"embed_dim", cfg.embed_dim},
          {"detach_prototypes", cfg.detach_prototypes},
          {"seed", cfg.seed}};
}

AdaptResult adapt_task(const Episode& episode, const AdaptConfig& cfg, const IterationObserver& observer) {
  cfg.validate();
  episode.validate();
  if (episode.support.empty()) throw Error(ErrorCode::TooFewSamples, "empty support set");
  const int side = cfg.side_for(episode.height, episode.width);
  const auto& support = episode.support;

  AdaptResult result;
  result.head = init_head(episode.dim, cfg.embed_dim, cfg.seed);
  result.bank = MemoryBank(2 * episode.shots);
  result.accumulator.gamma = cfg.momentum;

  Rng crop_rng = make_rng(cfg.seed, kStreamCrop);
  Rng swap_rng = make_rng(cfg.seed, kStreamSwap);

  std::map<SampleId, std::size_t> index_of;
  std::map<int, std::vector<std::size_t>> by_class;
  std::vector<Feature> image_features;
  for (std::size_t i = 0; i < support.size(); ++i) {
    index_of[support[i].grid.id()] = i;
    by_class[support[i].label].push_back(i);
    image_features.push_back(image_feature(support[i].grid));
  }
  const LossOptions loss_opt{cfg.beta, cfg.threshold, cfg.detach_prototypes};

  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    RegionWeightTable regions;
    regions.reserve(support.size() * cfg.regions_per_image);
    for (const auto& s : support) {
      for (auto& crop : crop_random_regions(s.grid, cfg.regions_per_image, side, crop_rng)) {
        RegionRecord rec;
        rec.sample_id = s.grid.id();
        rec.class_label = s.label;
        rec.box = crop.box;
        rec.feature = std::move(crop.feature);
        regions.push_back(std::move(rec));
      }
    }
    const RegionWeightTable table = compute_region_weights(std::move(regions));
    const Partition split = partition(table, cfg.threshold);

    std::map<SampleId, std::vector<double>> lambdas;
    for (const auto& r : table) lambdas[r.sample_id].push_back(r.lambda);
    result.accumulator = accumulate_image_weights(result.accumulator, lambdas);
    const RegionWeightTable clean = select(table, split.clean);
    result.bank = update_memory_bank(result.bank, clean, episode.shots);

    LossBatch batch;
    batch.num_classes = episode.num_classes;
    std::vector<Feature> region_rows;
    for (const auto& r : table) {
      region_rows.push_back(r.feature);
      batch.region_labels.push_back(r.class_label);
      batch.region_lambdas.push_back(r.lambda);
    }
    std::vector<Feature> image_rows = image_features;
    for (const auto& s : support) {
      batch.image_labels.push_back(s.label);
      batch.image_omegas.push_back(result.accumulator.omega.at(s.grid.id()));
    }

    // IntraSwap images only feed the prototypes.
    for (const auto& [label, members] : by_class) {
      const auto& entries = result.bank.entries(label);
      std::vector<std::size_t> bases;
      for (auto i : members) {
        if (result.accumulator.omega.at(support[i].grid.id()) >= cfg.threshold) bases.push_back(i);
      }
      if (entries.empty() || bases.empty()) continue;
      for (int n = 0; n < cfg.intraswap_per_class; ++n) {
        const Sample& base = support[bases[uniform_index(swap_rng, static_cast<int>(bases.size()))]];
        const BankEntry& entry = entries[uniform_index(swap_rng, static_cast<int>(entries.size()))];
        const Sample& donor = support[index_of.at(entry.sample_id)];
        const PatchGrid mixed = intraswap(base.grid, base.label, entry, donor.grid, donor.label);
        image_rows.push_back(image_feature(mixed));
        batch.image_labels.push_back(label);
        batch.image_omegas.push_back(result.accumulator.omega.at(base.grid.id()));
      }
    }
    batch.region_features = stack(region_rows, episode.dim);
    batch.image_features = stack(image_rows, episode.dim);

    const LossAndGrad step = total_loss_and_grad(result.head, batch, loss_opt);
    if (!std::isfinite(step.loss)) throw Error(ErrorCode::NonFiniteLoss, "loss is not finite");
    result.head.axpy(-cfg.learning_rate, step.grad);
    if (!result.head.all_finite()) throw Error(ErrorCode::NonFiniteLoss, "head parameters diverged");
    result.losses.push_back(step.loss);

    if (observer) {
      observer({iter, &table, &result.accumulator, &result.bank, step.loss, step.noisy_regions});
    }
  }
  return result;
}

Prototypes final_prototypes(const HeadParams& head, const Episode& episode, const AccumulatorState& accumulator,
                            double threshold) {
  std::vector<Feature> rows;
  std::vector<int> labels;
  std::vector<double> omegas;
  for (const auto& s : episode.support) {
    rows.push_back(image_feature(s.grid));
    labels.push_back(s.label);
    const auto it = accumulator.omega.find(s.grid.id());
    omegas.push_back(it == accumulator.omega.end() ? 1.0 : it->second);
  }
  const HeadBatch b = head_forward_batch(head, stack(rows, episode.dim));
  return weighted_prototypes(b.embeddings, labels, omegas, episode.num_classes, threshold);
}

}  // namespace deta
