#include <cmath>
#include <set>

#include "deta/episode.hpp"
#include "test_helpers.hpp"

namespace deta {
namespace {

using testing::grid_of;
using testing::uniform_grid;
using testing::vec;

TEST(Cosine, IdentityOrthogonalAndDiagonal) {
  EXPECT_DOUBLE_EQ(cosine(vec({1, 0}), vec({1, 0})), 1.0);
  EXPECT_DOUBLE_EQ(cosine(vec({1, 0}), vec({0, 1})), 0.0);
  EXPECT_NEAR(cosine(vec({1, 1}), vec({1, 0})), 0.70710678118654752, 1e-9);
}

TEST(Cosine, ZeroVectorIsRejected) {
  EXPECT_DETA_ERROR(cosine(vec({0, 0}), vec({1, 0})), ErrorCode::ZeroVector);
  EXPECT_DETA_ERROR(cosine(vec({1, 0}), vec({1e-13, 0})), ErrorCode::ZeroVector);
}

TEST(Cosine, SymmetricAndScaleInvariant) {
  Rng rng = make_rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    Feature u(5), v(5);
    for (int j = 0; j < 5; ++j) {
      u(j) = n(rng);
      v(j) = n(rng);
    }
    const double c = cosine(u, v);
    EXPECT_NEAR(c, cosine(v, u), 1e-15);
    EXPECT_NEAR(c, cosine(3.7 * u, v), 1e-12);
    EXPECT_NEAR(c, cosine(u, 0.01 * v), 1e-12);
    EXPECT_LE(std::abs(c), 1.0);
  }
}

TEST(PoolRegion, SingletonConstantAndMean) {
  const PatchGrid g = grid_of(1, 2, 2, {{0}, {2}, {4}, {6}});
  EXPECT_DOUBLE_EQ(pool_region(g, {1, 0, 2, 1})(0), 4.0);
  EXPECT_DOUBLE_EQ(pool_region(g, {0, 0, 2, 2})(0), 3.0);
  const PatchGrid u = uniform_grid(2, 4, 5, {1.5, -2.0});
  const Feature p = pool_region(u, {1, 2, 3, 5});
  EXPECT_DOUBLE_EQ(p(0), 1.5);
  EXPECT_DOUBLE_EQ(p(1), -2.0);
}

TEST(PoolRegion, OutOfBoundsBoxes) {
  const PatchGrid g = uniform_grid(1, 3, 3, {1.0});
  EXPECT_DETA_ERROR(pool_region(g, {0, 0, 4, 1}), ErrorCode::BoxOutOfBounds);
  EXPECT_DETA_ERROR(pool_region(g, {1, 1, 1, 2}), ErrorCode::BoxOutOfBounds);
  EXPECT_DETA_ERROR(pool_region(g, {-1, 0, 1, 1}), ErrorCode::BoxOutOfBounds);
}

TEST(PoolRegion, AreaWeightedOverDisjointSubBoxes) {
  Rng rng = make_rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> data(6 * 7 * 3);
  for (double& x : data) x = n(rng);
  const PatchGrid g(1, 6, 7, 3, data);
  const RegionBox whole{1, 1, 6, 6};
  const RegionBox top{1, 1, 3, 6}, bottom_left{3, 1, 6, 4}, bottom_right{3, 4, 6, 6};
  const Feature combined = (top.area() * pool_region(g, top) + bottom_left.area() * pool_region(g, bottom_left) +
                            bottom_right.area() * pool_region(g, bottom_right)) /
                           whole.area();
  EXPECT_LT((combined - pool_region(g, whole)).norm(), 1e-12);
}

TEST(ImageFeature, FullGridMean) {
  const PatchGrid g = grid_of(1, 2, 1, {{1}, {3}});
  EXPECT_DOUBLE_EQ(image_feature(g)(0), 2.0);
  EXPECT_EQ(image_feature(g), pool_region(g, g.full_box()));
  EXPECT_DOUBLE_EQ(image_feature(uniform_grid(3, 5, 5, {0.25}))(0), 0.25);
}

TEST(CropRandomRegions, CountSizeAndBounds) {
  const PatchGrid g = uniform_grid(1, 8, 8, {1.0, 2.0});
  Rng rng = make_rng(9);
  const auto crops = crop_random_regions(g, 4, 4, rng);
  ASSERT_EQ(crops.size(), 4u);
  for (const auto& c : crops) {
    EXPECT_EQ(c.box.rows(), 4);
    EXPECT_EQ(c.box.cols(), 4);
    EXPECT_TRUE(g.contains(c.box));
    EXPECT_EQ(c.feature, pool_region(g, c.box));
  }
}

TEST(CropRandomRegions, FullSideGivesFullGrid) {
  const PatchGrid g = uniform_grid(1, 5, 5, {1.0});
  Rng rng = make_rng(1);
  for (const auto& c : crop_random_regions(g, 3, 5, rng)) EXPECT_EQ(c.box, g.full_box());
}

TEST(CropRandomRegions, SeededDeterminism) {
  const PatchGrid g = uniform_grid(1, 8, 6, {1.0});
  Rng a = make_rng(42, 11), b = make_rng(42, 11);
  const auto x = crop_random_regions(g, 6, 3, a);
  const auto y = crop_random_regions(g, 6, 3, b);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(x[i].box, y[i].box);
}

TEST(CropRandomRegions, OffsetsCoverEveryPosition) {
  const PatchGrid g = uniform_grid(1, 4, 4, {1.0});
  Rng rng = make_rng(2);
  std::set<std::pair<int, int>> seen;
  for (const auto& c : crop_random_regions(g, 400, 2, rng)) seen.insert({c.box.row0, c.box.col0});
  EXPECT_EQ(seen.size(), 9u);
}

TEST(CropRandomRegions, SideTooLarge) {
  const PatchGrid g = uniform_grid(1, 4, 6, {1.0});
  Rng rng = make_rng(0);
  EXPECT_DETA_ERROR(crop_random_regions(g, 1, 5, rng), ErrorCode::SideTooLarge);
  EXPECT_DETA_ERROR(crop_random_regions(g, 1, 0, rng), ErrorCode::SideTooLarge);
}

TEST(DefaultRegionSide, HalfOfShortSideRoundedUp) {
  EXPECT_EQ(default_region_side(8, 8), 4);
  EXPECT_EQ(default_region_side(7, 9), 4);
  EXPECT_EQ(default_region_side(1, 1), 1);
}

TEST(NoiseKind, RoundTripsAndRejectsUnknownTags) {
  for (NoiseKind k : {NoiseKind::Clean, NoiseKind::Id, NoiseKind::Ood}) EXPECT_EQ(noise_from_string(to_string(k)), k);
  EXPECT_DETA_ERROR(noise_from_string("dirty"), ErrorCode::SchemaError);
}

TEST(PatchGrid, RejectsMismatchedData) {
  EXPECT_DETA_ERROR(PatchGrid(1, 2, 2, 2, std::vector<double>(7)), ErrorCode::SchemaError);
}

}  // namespace
}  // namespace deta
