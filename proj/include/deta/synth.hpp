#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "deta/episode.hpp"

namespace deta {

// Parameters of the Gaussian-cluster episode generator.
//
// Geometry: the C class "object" means form a centred regular simplex with
// pairwise distance `cluster_sep`; the shared background mean and the OOD
// class means have the same norm.  The background is orthogonal to every
// class mean.  OOD means are random directions inside the span of the class
// means, so an unseen class partially resembles several task classes.
struct GenConfig {
  int num_classes = 5;
  int shots = 10;
  int queries_per_class = 15;
  int dim = 16;
  int height = 8;
  int width = 8;
  int n_ood_classes = 10;
  double cluster_sep = 4.0;
  double patch_noise_sd = 1.0;
  // Per-image offset shared by all object patches of one sample.
  double instance_sd = 0.0;
  double clutter_ratio = 0.3;
  double ood_ratio = 0.3;
  double query_ood_ratio = 0.2;
  std::int64_t seed = 0;

  void validate() const;
};

GenConfig gen_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GenConfig& cfg);

// Per-patch background flags (row-major), keyed by sample id.
using BackgroundMasks = std::map<SampleId, std::vector<std::uint8_t>>;

struct SynthEpisode {
  Episode episode;
  BackgroundMasks background;
};

// floor(ratio * count) with a tolerance for products like 0.3 * 10.
int noise_count(double ratio, int count);

SynthEpisode generate_episode_detailed(const GenConfig& cfg);
Episode generate_episode(const GenConfig& cfg);

// Replaces floor(alpha * K) support samples of every class by pool samples
// that keep the (wrong) class label.  Pool grids are consumed in order.
Episode inject_ood_noise(const Episode& episode, double alpha, const std::vector<PatchGrid>& ood_pool,
                         std::uint64_t seed);

}  // namespace deta
