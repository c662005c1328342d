#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "deta/cora.hpp"
#include "deta/episode.hpp"
#include "deta/head.hpp"
#include "deta/losses.hpp"

namespace deta {

struct AdaptConfig {
  int iterations = 40;
  int regions_per_image = 4;
  int region_side = 0;  // 0: ceil(min(H, W) / 2)
  double threshold = 0.3;
  double beta = 0.3;
  double momentum = 0.7;
  double learning_rate = 0.01;
  int intraswap_per_class = 1;
  int embed_dim = kDefaultEmbedDim;
  bool detach_prototypes = false;
  std::uint64_t seed = 0;

  void validate() const;
  int side_for(int height, int width) const;
};

AdaptConfig adapt_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AdaptConfig& cfg);

struct AdaptResult {
  HeadParams head;
  MemoryBank bank;
  AccumulatorState accumulator;
  std::vector<double> losses;  // one per iteration
};

struct IterationTrace {
  int iteration = 0;
  const RegionWeightTable* table = nullptr;
  const AccumulatorState* accumulator = nullptr;
  const MemoryBank* bank = nullptr;
  double loss = 0.0;
  std::size_t noisy_regions = 0;
};

using IterationObserver = std::function<void(const IterationTrace&)>;

// Crops regions from the support set, weights them, refreshes the image
// weights and the memory bank, then takes one gradient step on the head,
// `iterations` times.  Only support grids and labels are read.
AdaptResult adapt_task(const Episode& episode, const AdaptConfig& cfg, const IterationObserver& observer = {});

// Prototypes from the final image weights (no augmentation), as used by the
// MCM head after adaptation.
Prototypes final_prototypes(const HeadParams& head, const Episode& episode, const AccumulatorState& accumulator,
                            double threshold);

}  // namespace deta
