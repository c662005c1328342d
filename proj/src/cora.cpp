#include "deta/cora.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <tuple>

#include <nlohmann/json.hpp>

#include "deta/error.hpp"

namespace deta {
namespace {

// Softmax over a subset with max subtraction.
void softmax_into(const std::vector<std::size_t>& idx, const std::vector<double>& in, std::vector<double>& out) {
  double peak = -std::numeric_limits<double>::infinity();
  for (auto i : idx) peak = std::max(peak, in[i]);
  double total = 0.0;
  for (auto i : idx) total += std::exp(in[i] - peak);
  for (auto i : idx) out[i] = std::exp(in[i] - peak) / total;
}

}  // namespace

RegionWeightTable compute_region_weights(RegionWeightTable regions) {
  std::map<int, std::vector<std::size_t>> by_class;
  std::map<int, std::set<SampleId>> samples_per_class;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    by_class[regions[i].class_label].push_back(i);
    samples_per_class[regions[i].class_label].insert(regions[i].sample_id);
  }
  if (by_class.size() < 2) {
    throw Error(ErrorCode::TooFewClasses, "out-of-class set is empty with fewer than two classes");
  }
  for (const auto& [label, ids] : samples_per_class) {
    if (ids.size() < 2) {
      throw Error(ErrorCode::TooFewSamples, "class " + std::to_string(label) + " needs regions from two images");
    }
  }

  const std::size_t n = regions.size();
  const int dim = static_cast<int>(regions.front().feature.size());
  Eigen::MatrixXd unit(dim, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double norm = regions[i].feature.norm();
    if (norm <= kNormEps) throw Error(ErrorCode::ZeroVector, "region feature has zero norm");
    unit.col(static_cast<Eigen::Index>(i)) = regions[i].feature / norm;
  }
  const Eigen::MatrixXd sim = (unit.transpose() * unit).cwiseMax(-1.0).cwiseMin(1.0);

  std::vector<double> phi(n, 0.0);
  std::vector<double> psi(n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    double in_sum = 0.0;
    double out_sum = 0.0;
    std::size_t in_count = 0;
    std::size_t out_count = 0;
    for (std::size_t b = 0; b < n; ++b) {
      const double s = sim(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
      if (regions[b].class_label != regions[a].class_label) {
        out_sum += s;
        ++out_count;
      } else if (regions[b].sample_id != regions[a].sample_id) {
        in_sum += s;
        ++in_count;
      }
    }
    phi[a] = in_sum / static_cast<double>(in_count);
    psi[a] = out_sum / static_cast<double>(out_count);
  }

  std::vector<double> phi_norm(n, 0.0);
  std::vector<double> psi_norm(n, 0.0);
  for (const auto& [label, idx] : by_class) {
    softmax_into(idx, phi, phi_norm);
    softmax_into(idx, psi, psi_norm);
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = regions[i];
    r.phi = phi[i];
    r.psi = psi[i];
    r.phi_norm = phi_norm[i];
    r.psi_norm = psi_norm[i];
    r.lambda = phi_norm[i] / psi_norm[i];
  }
  return regions;
}

Partition partition(const RegionWeightTable& table, double threshold) {
  if (!(threshold > 0.0)) throw Error(ErrorCode::ConfigInvalid, "threshold must be positive");
  Partition p;
  for (std::size_t i = 0; i < table.size(); ++i) {
    (table[i].lambda < threshold ? p.noisy : p.clean).push_back(i);
  }
  return p;
}

RegionWeightTable select(const RegionWeightTable& table, std::span<const std::size_t> indices) {
  RegionWeightTable out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(table.at(i));
  return out;
}

AccumulatorState accumulate_image_weights(const AccumulatorState& state,
                                          const std::map<SampleId, std::vector<double>>& region_lambdas) {
  if (state.t < 1) throw Error(ErrorCode::ConfigInvalid, "accumulator iteration index starts at 1");
  AccumulatorState next = state;
  for (const auto& [id, lambdas] : region_lambdas) {
    if (lambdas.empty()) throw Error(ErrorCode::ConfigInvalid, "image without regions in this iteration");
    const double mean = std::accumulate(lambdas.begin(), lambdas.end(), 0.0) / static_cast<double>(lambdas.size());
    if (state.t == 1) {
      next.omega[id] = mean;
      continue;
    }
    const auto prev = state.omega.find(id);
    if (prev == state.omega.end()) {
      throw Error(ErrorCode::MissingPrevState, "no accumulated weight for sample " + std::to_string(id));
    }
    next.omega[id] = state.gamma * prev->second + (1.0 - state.gamma) * mean;
  }
  ++next.t;
  return next;
}

const std::vector<BankEntry>& MemoryBank::entries(int label) const {
  static const std::vector<BankEntry> empty;
  const auto it = classes_.find(label);
  return it == classes_.end() ? empty : it->second;
}

std::size_t MemoryBank::size() const {
  std::size_t n = 0;
  for (const auto& [_, e] : classes_) n += e.size();
  return n;
}

void MemoryBank::set_entries(int label, std::vector<BankEntry> entries) { classes_[label] = std::move(entries); }

MemoryBank update_memory_bank(const MemoryBank& bank, std::span<const RegionRecord> clean_regions, int shots) {
  if (shots < 1) throw Error(ErrorCode::ConfigInvalid, "bank capacity needs K >= 1");
  const int capacity = 2 * shots;
  using Key = std::tuple<SampleId, int, int, int, int>;
  std::map<int, std::map<Key, double>> merged;
  auto put = [&](int label, SampleId id, const RegionBox& box, double w) {
    auto [it, inserted] = merged[label].try_emplace(Key{id, box.row0, box.col0, box.row1, box.col1}, w);
    if (!inserted) it->second = std::max(it->second, w);
  };
  for (const auto& [label, entries] : bank.classes())
    for (const auto& e : entries) put(label, e.sample_id, e.box, e.weight);
  for (const auto& r : clean_regions) put(r.class_label, r.sample_id, r.box, r.lambda);

  MemoryBank out(capacity);
  for (auto& [label, by_key] : merged) {
    std::vector<BankEntry> entries;
    entries.reserve(by_key.size());
    for (const auto& [key, w] : by_key) {
      const auto& [id, r0, c0, r1, c1] = key;
      entries.push_back({id, RegionBox{r0, c0, r1, c1}, w});
    }
    // Map order already sorts equal weights by (id, box).
    std::stable_sort(entries.begin(), entries.end(),
                     [](const BankEntry& a, const BankEntry& b) { return a.weight > b.weight; });
    if (entries.size() > static_cast<std::size_t>(capacity)) entries.resize(capacity);
    out.set_entries(label, std::move(entries));
  }
  return out;
}

std::string weights_jsonl(int iteration, const RegionWeightTable& table, const AccumulatorState& state) {
  std::string out;
  for (const auto& r : table) {
    nlohmann::json line{{"iter", iteration},
                        {"kind", "region"},
                        {"sample_id", r.sample_id},
                        {"label", r.class_label},
                        {"box", {r.box.row0, r.box.col0, r.box.row1, r.box.col1}},
                        {"lambda", r.lambda}};
    out += line.dump() + "\n";
  }
  for (const auto& [id, w] : state.omega) {
    nlohmann::json line{{"iter", iteration}, {"kind", "image"}, {"sample_id", id}, {"omega", w}};
    out += line.dump() + "\n";
  }
  return out;
}

}  // namespace deta
