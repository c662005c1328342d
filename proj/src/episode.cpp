#include "deta/episode.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "deta/error.hpp"

namespace deta {

PatchGrid::PatchGrid(SampleId id, int height, int width, int dim)
    : PatchGrid(id, height, width, dim,
                std::vector<double>(static_cast<std::size_t>(std::max(height, 0)) *
                                    std::max(width, 0) * std::max(dim, 0))) {}

PatchGrid::PatchGrid(SampleId id, int height, int width, int dim, std::vector<double> data)
    : id_(id), height_(height), width_(width), dim_(dim), data_(std::move(data)) {
  if (height < 1 || width < 1 || dim < 1) {
    throw Error(ErrorCode::ConfigInvalid, "patch grid needs H, W, d >= 1");
  }
  if (data_.size() != static_cast<std::size_t>(height) * width * dim) {
    throw Error(ErrorCode::SchemaError, "patch data size does not match H*W*d");
  }
}

bool PatchGrid::contains(const RegionBox& box) const {
  return box.row0 >= 0 && box.col0 >= 0 && box.row0 < box.row1 && box.col0 < box.col1 &&
         box.row1 <= height_ && box.col1 <= width_;
}

std::string_view to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::Clean: return "clean";
    case NoiseKind::Id: return "id";
    case NoiseKind::Ood: return "ood";
  }
  return "clean";
}

NoiseKind noise_from_string(std::string_view text) {
  if (text == "clean") return NoiseKind::Clean;
  if (text == "id") return NoiseKind::Id;
  if (text == "ood") return NoiseKind::Ood;
  throw Error(ErrorCode::SchemaError, "unknown noise tag '" + std::string(text) + "'");
}

const Sample* Episode::find_support(SampleId id) const {
  for (const auto& s : support) {
    if (s.grid.id() == id) return &s;
  }
  return nullptr;
}

void Episode::validate() const {
  if (num_classes < 1 || shots < 1 || dim < 1 || height < 1 || width < 1) {
    throw Error(ErrorCode::SchemaError, "episode dimensions must be positive");
  }
  std::set<SampleId> ids;
  auto check = [&](const Sample& s, bool is_support) {
    const auto& g = s.grid;
    if (g.height() != height || g.width() != width || g.dim() != dim) {
      throw Error(ErrorCode::SchemaError, "sample " + std::to_string(g.id()) + " has wrong shape");
    }
    if (!ids.insert(g.id()).second) {
      throw Error(ErrorCode::SchemaError, "duplicate sample id " + std::to_string(g.id()));
    }
    const int lo = is_support ? 1 : kOodLabel;
    if (s.label < lo || s.label > num_classes) {
      throw Error(ErrorCode::SchemaError, "label out of range for sample " + std::to_string(g.id()));
    }
  };
  for (const auto& s : support) check(s, true);
  for (const auto& s : query) check(s, false);
}

double cosine(const Eigen::Ref<const Feature>& u, const Eigen::Ref<const Feature>& v) {
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu <= kNormEps || nv <= kNormEps) {
    throw Error(ErrorCode::ZeroVector, "cosine of a zero-norm vector");
  }
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

Feature pool_region(const PatchGrid& grid, const RegionBox& box) {
  if (!grid.contains(box)) {
    throw Error(ErrorCode::BoxOutOfBounds, "region box outside the patch grid");
  }
  Feature sum = Feature::Zero(grid.dim());
  for (int r = box.row0; r < box.row1; ++r) {
    for (int c = box.col0; c < box.col1; ++c) sum += grid.patch(r, c);
  }
  return sum / static_cast<double>(box.area());
}

Feature image_feature(const PatchGrid& grid) { return pool_region(grid, grid.full_box()); }

int default_region_side(int height, int width) { return (std::min(height, width) + 1) / 2; }

std::vector<CroppedRegion> crop_random_regions(const PatchGrid& grid, int count, int side, Rng& rng) {
  if (count < 1) throw Error(ErrorCode::ConfigInvalid, "need at least one region per image");
  if (side < 1 || side > std::min(grid.height(), grid.width())) {
    throw Error(ErrorCode::SideTooLarge, "region side " + std::to_string(side) + " does not fit the grid");
  }
  std::vector<CroppedRegion> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const int r0 = uniform_index(rng, grid.height() - side + 1);
    const int c0 = uniform_index(rng, grid.width() - side + 1);
    RegionBox box{r0, c0, r0 + side, c0 + side};
    out.push_back({box, pool_region(grid, box)});
  }
  return out;
}

}  // namespace deta
