#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "deta/random.hpp"

namespace deta {

using Feature = Eigen::VectorXd;
using SampleId = std::int64_t;

// Guard applied to every norm before dividing by it.
inline constexpr double kNormEps = 1e-12;

// Half-open patch-index rectangle [row0, row1) x [col0, col1).
struct RegionBox {
  int row0 = 0;
  int col0 = 0;
  int row1 = 0;
  int col1 = 0;

  int rows() const { return row1 - row0; }
  int cols() const { return col1 - col0; }
  int area() const { return rows() * cols(); }
  bool contains(int r, int c) const { return r >= row0 && r < row1 && c >= col0 && c < col1; }

  auto operator<=>(const RegionBox&) const = default;
};

// H x W grid of d-dimensional patch features standing in for an image that
// has already been passed through a frozen backbone.
class PatchGrid {
 public:
  PatchGrid() = default;
  PatchGrid(SampleId id, int height, int width, int dim);
  PatchGrid(SampleId id, int height, int width, int dim, std::vector<double> data);

  SampleId id() const { return id_; }
  void set_id(SampleId id) { id_ = id; }
  int height() const { return height_; }
  int width() const { return width_; }
  int dim() const { return dim_; }

  Eigen::Map<const Feature> patch(int row, int col) const {
    return Eigen::Map<const Feature>(data_.data() + offset(row, col), dim_);
  }
  Eigen::Map<Feature> patch(int row, int col) {
    return Eigen::Map<Feature>(data_.data() + offset(row, col), dim_);
  }

  std::span<const double> data() const { return data_; }
  RegionBox full_box() const { return {0, 0, height_, width_}; }
  bool contains(const RegionBox& box) const;

  bool operator==(const PatchGrid&) const = default;

 private:
  std::size_t offset(int row, int col) const {
    return (static_cast<std::size_t>(row) * width_ + col) * dim_;
  }

  SampleId id_ = 0;
  int height_ = 0;
  int width_ = 0;
  int dim_ = 0;
  std::vector<double> data_;
};

enum class NoiseKind { Clean, Id, Ood };

std::string_view to_string(NoiseKind kind);
NoiseKind noise_from_string(std::string_view text);

// Query label used for samples that belong to no task class.
inline constexpr int kOodLabel = 0;

struct Sample {
  PatchGrid grid;
  int label = kOodLabel;  // 1..C, or kOodLabel for OOD queries
  NoiseKind noise = NoiseKind::Clean;  // evaluation-only ground truth

  bool operator==(const Sample&) const = default;
};

struct EpisodeMeta {
  std::int64_t seed = 0;
  double ood_ratio = 0.0;
  double clutter_ratio = 0.0;

  bool operator==(const EpisodeMeta&) const = default;
};

// One C-way K-shot task.  Adaptation code reads grids and labels only; the
// `noise` fields exist for scoring.
struct Episode {
  int dim = 0;
  int height = 0;
  int width = 0;
  int num_classes = 0;
  int shots = 0;
  std::vector<Sample> support;
  std::vector<Sample> query;
  EpisodeMeta meta;

  const Sample* find_support(SampleId id) const;
  // Throws SchemaError when sizes, labels or ids are inconsistent.
  void validate() const;

  bool operator==(const Episode&) const = default;
};

struct CroppedRegion {
  RegionBox box;
  Feature feature;
};

double cosine(const Eigen::Ref<const Feature>& u, const Eigen::Ref<const Feature>& v);

Feature pool_region(const PatchGrid& grid, const RegionBox& box);
Feature image_feature(const PatchGrid& grid);

// ceil(min(H, W) / 2)
int default_region_side(int height, int width);

std::vector<CroppedRegion> crop_random_regions(const PatchGrid& grid, int count, int side, Rng& rng);

}  // namespace deta
