#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "deta/episode.hpp"

namespace deta {

// One cropped region and the relevance statistics computed for it.
struct RegionRecord {
  SampleId sample_id = 0;
  int class_label = 0;
  RegionBox box;
  Feature feature;
  double phi = 0.0;       // mean cosine to in-class regions of other images
  double psi = 0.0;       // mean cosine to out-of-class regions
  double phi_norm = 0.0;  // softmax of phi within the class
  double psi_norm = 0.0;  // softmax of psi within the class
  double lambda = 0.0;    // phi_norm / psi_norm
};

using RegionWeightTable = std::vector<RegionRecord>;

// Fills phi, psi, their in-class softmax and lambda for every record.
// Records are grouped by (class_label, sample_id); order is preserved.
RegionWeightTable compute_region_weights(RegionWeightTable regions);

struct Partition {
  std::vector<std::size_t> clean;  // lambda >= threshold
  std::vector<std::size_t> noisy;  // lambda <  threshold
};

Partition partition(const RegionWeightTable& table, double threshold);

RegionWeightTable select(const RegionWeightTable& table, std::span<const std::size_t> indices);

// Momentum accumulator over per-image weights.  `t` is the index of the
// next update, starting at 1.
struct AccumulatorState {
  std::map<SampleId, double> omega;
  int t = 1;
  double gamma = 0.7;

  bool operator==(const AccumulatorState&) const = default;
};

AccumulatorState accumulate_image_weights(const AccumulatorState& state,
                                          const std::map<SampleId, std::vector<double>>& region_lambdas);

struct BankEntry {
  SampleId sample_id = 0;
  RegionBox box;
  double weight = 0.0;

  bool operator==(const BankEntry&) const = default;
};

// Per-class store of the highest-weight clean regions, kept as boxes.
class MemoryBank {
 public:
  MemoryBank() = default;
  explicit MemoryBank(int capacity) : capacity_(capacity) {}

  int capacity() const { return capacity_; }
  const std::vector<BankEntry>& entries(int label) const;
  const std::map<int, std::vector<BankEntry>>& classes() const { return classes_; }
  std::size_t size() const;

  // Replaces a class's entries verbatim (deserialisation).
  void set_entries(int label, std::vector<BankEntry> entries);

  bool operator==(const MemoryBank&) const = default;

 private:
  int capacity_ = 0;
  std::map<int, std::vector<BankEntry>> classes_;
};

// Merges clean regions into the bank: duplicates of (sample_id, box) keep the
// larger weight, then every class is cut back to its 2K best entries.
MemoryBank update_memory_bank(const MemoryBank& bank, std::span<const RegionRecord> clean_regions, int shots);

// JSON-lines dump of one iteration: a line per region, then a line per image.
std::string weights_jsonl(int iteration, const RegionWeightTable& table, const AccumulatorState& state);

}  // namespace deta
