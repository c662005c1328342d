#include "deta/augment.hpp"

#include <cmath>
#include <string>

#include "deta/error.hpp"

namespace deta {
namespace {

void require_same_shape(const PatchGrid& a, const PatchGrid& b) {
  if (a.height() != b.height() || a.width() != b.width() || a.dim() != b.dim()) {
    throw Error(ErrorCode::BoxOutOfBounds, "grids have different shapes");
  }
}

void check_label(int label, int num_classes) {
  if (label < 1 || label > num_classes) throw Error(ErrorCode::ConfigInvalid, "label outside 1..C");
}

}  // namespace

PatchGrid intraswap(const PatchGrid& base, int base_label, const BankEntry& donor_entry, const PatchGrid& donor,
                    int donor_label) {
  if (base_label != donor_label) {
    throw Error(ErrorCode::ClassMismatch, "intraswap needs two images of the same class");
  }
  if (donor.id() != donor_entry.sample_id) {
    throw Error(ErrorCode::ConfigInvalid, "donor grid " + std::to_string(donor.id()) +
                                              " does not match bank entry " + std::to_string(donor_entry.sample_id));
  }
  const RegionBox& box = donor_entry.box;
  if (!base.contains(box) || !donor.contains(box)) {
    throw Error(ErrorCode::BoxOutOfBounds, "bank box does not fit both grids");
  }
  require_same_shape(base, donor);
  PatchGrid out = base;
  for (int r = box.row0; r < box.row1; ++r)
    for (int c = box.col0; c < box.col1; ++c) out.patch(r, c) = donor.patch(r, c);
  return out;
}

MixedSample cutmix_masked(const PatchGrid& a, int label_a, const PatchGrid& b, int label_b,
                          std::span<const std::uint8_t> keep_a, double mix_weight, int num_classes) {
  require_same_shape(a, b);
  check_label(label_a, num_classes);
  check_label(label_b, num_classes);
  if (keep_a.size() != static_cast<std::size_t>(a.height()) * a.width()) {
    throw Error(ErrorCode::BoxOutOfBounds, "mask size does not match the grid");
  }
  if (!(mix_weight >= 0.0 && mix_weight <= 1.0)) throw Error(ErrorCode::ConfigInvalid, "mix weight outside [0, 1]");
  MixedSample out{a, Eigen::VectorXd::Zero(num_classes)};
  for (int r = 0; r < a.height(); ++r)
    for (int c = 0; c < a.width(); ++c)
      if (!keep_a[static_cast<std::size_t>(r) * a.width() + c]) out.grid.patch(r, c) = b.patch(r, c);
  out.soft_label[label_a - 1] += mix_weight;
  out.soft_label[label_b - 1] += 1.0 - mix_weight;
  return out;
}

MixedSample cutmix(const PatchGrid& a, int label_a, const PatchGrid& b, int label_b, const RegionBox& box,
                   double mix_weight, int num_classes) {
  if (!a.contains(box)) throw Error(ErrorCode::BoxOutOfBounds, "cutmix box outside the grid");
  std::vector<std::uint8_t> keep(static_cast<std::size_t>(a.height()) * a.width(), 1);
  for (int r = box.row0; r < box.row1; ++r)
    for (int c = box.col0; c < box.col1; ++c) keep[static_cast<std::size_t>(r) * a.width() + c] = 0;
  return cutmix_masked(a, label_a, b, label_b, keep, mix_weight, num_classes);
}

double sample_mix_weight(Rng& rng) {
  // Open interval: nextafter keeps 0 out of the support.
  return std::uniform_real_distribution<double>(std::nextafter(0.0, 1.0), 1.0)(rng);
}

}  // namespace deta
