#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "deta/cora.hpp"
#include "deta/episode.hpp"

namespace deta {

// Same-class region swap: patches inside the stored box come from the donor
// grid, everything else from the base.  The result keeps the base's id and
// label.
PatchGrid intraswap(const PatchGrid& base, int base_label, const BankEntry& donor_entry, const PatchGrid& donor,
                    int donor_label);

struct MixedSample {
  PatchGrid grid;
  Eigen::VectorXd soft_label;  // length C
};

// x = M * a + (1 - M) * b per patch, y = w * onehot(a) + (1 - w) * onehot(b).
// `keep_a` is a row-major H*W mask (1 = patch from a).
MixedSample cutmix_masked(const PatchGrid& a, int label_a, const PatchGrid& b, int label_b,
                          std::span<const std::uint8_t> keep_a, double mix_weight, int num_classes);

// The box marks the patches pasted from b.
MixedSample cutmix(const PatchGrid& a, int label_a, const PatchGrid& b, int label_b, const RegionBox& box,
                   double mix_weight, int num_classes);

// Mixing weight for CutMix, Uniform(0, 1).
double sample_mix_weight(Rng& rng);

}  // namespace deta
