#include <algorithm>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

#include "deta/check/oracles.hpp"
#include "deta/cora.hpp"
#include "test_helpers.hpp"

namespace deta {
namespace {

using testing::vec;

RegionRecord region(int label, SampleId id, Feature f, RegionBox box = {0, 0, 1, 1}) {
  RegionRecord r;
  r.class_label = label;
  r.sample_id = id;
  r.feature = std::move(f);
  r.box = box;
  return r;
}

RegionWeightTable hand_table() {
  return {region(1, 1, vec({1, 0})),  region(1, 1, vec({1, 1})),   region(1, 2, vec({2, 0.5})),
          region(1, 2, vec({0, 1})),  region(2, 3, vec({0, 1})),   region(2, 3, vec({-1, 1})),
          region(2, 4, vec({0.5, 2})), region(2, 4, vec({1, -1}))};
}

TEST(RegionWeights, HandInstanceMatchesDirectEvaluation) {
  const RegionWeightTable t = compute_region_weights(hand_table());
  // Values from a direct evaluation of the defining sums in numpy.
  const double phi[] = {0.48507125007266594, 0.7822998534495458, 0.913817712928938,  0.35355339059327373,
                        0.1315178594793922,  -0.24275212228623672, 0.7423191277864292, -0.8535533905932737};
  const double psi[] = {0.06063390625908324, 0.3911499267247729, 0.17828096508261265, 0.49253562503633297,
                        0.48741060155572014, -0.12862393885688161, 0.6351898215470817, 0.12862393885688161};
  const double lambda[] = {1.062733255097227,  1.0279399129044984, 1.450551075013007, 0.6049705823640394,
                           0.870552388037774,  1.108643525163273,  1.3831931571775242, 0.4653749159434979};
  ASSERT_EQ(t.size(), 8u);
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_NEAR(t[i].phi, phi[i], 1e-12) << i;
    EXPECT_NEAR(t[i].psi, psi[i], 1e-12) << i;
    EXPECT_NEAR(t[i].lambda, lambda[i], 1e-12) << i;
  }
}

TEST(RegionWeights, IdenticalFeaturesGiveUnitLambda) {
  RegionWeightTable in;
  for (int c = 1; c <= 3; ++c)
    for (SampleId s = 0; s < 3; ++s)
      for (int r = 0; r < 2; ++r) in.push_back(region(c, c * 10 + s, vec({0.3, -1.2, 2.0})));
  for (const auto& r : compute_region_weights(in)) {
    EXPECT_NEAR(r.lambda, 1.0, 1e-12);
    EXPECT_NEAR(r.phi_norm, 1.0 / 6.0, 1e-12);
  }
}

TEST(RegionWeights, ErrorCases) {
  RegionWeightTable one_class{region(1, 1, vec({1, 0})), region(1, 2, vec({0, 1}))};
  EXPECT_DETA_ERROR(compute_region_weights(one_class), ErrorCode::TooFewClasses);
  RegionWeightTable single_image{region(1, 1, vec({1, 0})), region(1, 1, vec({1, 1})), region(2, 2, vec({0, 1})),
                                 region(2, 3, vec({1, 1}))};
  EXPECT_DETA_ERROR(compute_region_weights(single_image), ErrorCode::TooFewSamples);
  RegionWeightTable zero{region(1, 1, vec({0, 0})), region(1, 2, vec({1, 1})), region(2, 3, vec({0, 1})),
                         region(2, 4, vec({1, 1}))};
  EXPECT_DETA_ERROR(compute_region_weights(zero), ErrorCode::ZeroVector);
}

TEST(RegionWeights, RandomInstancesMatchOracle) {
  Rng rng = make_rng(21);
  for (int i = 0; i < 200; ++i) {
    const RegionWeightTable in = oracle::random_region_table(rng);
    const RegionWeightTable fast = compute_region_weights(in);
    const RegionWeightTable slow = oracle::region_weights(in);
    for (std::size_t r = 0; r < in.size(); ++r) {
      EXPECT_NEAR(fast[r].lambda, slow[r].lambda, 1e-9);
      EXPECT_NEAR(fast[r].phi_norm, slow[r].phi_norm, 1e-12);
      EXPECT_NEAR(fast[r].psi_norm, slow[r].psi_norm, 1e-12);
    }
  }
}

TEST(RegionWeights, RangesAndSoftmaxSums) {
  Rng rng = make_rng(22);
  for (int i = 0; i < 100; ++i) {
    const RegionWeightTable t = compute_region_weights(oracle::random_region_table(rng));
    std::map<int, std::pair<double, double>> sums;
    for (const auto& r : t) {
      EXPECT_GE(r.phi, -1.0 - 1e-12);
      EXPECT_LE(r.phi, 1.0 + 1e-12);
      EXPECT_GE(r.psi, -1.0 - 1e-12);
      EXPECT_LE(r.psi, 1.0 + 1e-12);
      EXPECT_GT(r.phi_norm, 0.0);
      EXPECT_LT(r.phi_norm, 1.0);
      EXPECT_GT(r.psi_norm, 0.0);
      EXPECT_LT(r.psi_norm, 1.0);
      EXPECT_GT(r.lambda, 0.0);
      sums[r.class_label].first += r.phi_norm;
      sums[r.class_label].second += r.psi_norm;
    }
    for (const auto& [label, s] : sums) {
      EXPECT_NEAR(s.first, 1.0, 1e-12);
      EXPECT_NEAR(s.second, 1.0, 1e-12);
    }
  }
}

TEST(RegionWeights, InvariantUnderGlobalPositiveScaling) {
  Rng rng = make_rng(23);
  for (int i = 0; i < 50; ++i) {
    RegionWeightTable in = oracle::random_region_table(rng);
    RegionWeightTable scaled = in;
    for (auto& r : scaled) r.feature *= 42.5;
    const auto a = compute_region_weights(in);
    const auto b = compute_region_weights(scaled);
    for (std::size_t r = 0; r < a.size(); ++r) EXPECT_NEAR(a[r].lambda, b[r].lambda, 1e-12);
  }
}

TEST(RegionWeights, LabelPermutationEquivariance) {
  Rng rng = make_rng(24);
  for (int i = 0; i < 50; ++i) {
    RegionWeightTable in = oracle::random_region_table(rng);
    int classes = 0;
    for (const auto& r : in) classes = std::max(classes, r.class_label);
    RegionWeightTable relabelled = in;
    for (auto& r : relabelled) r.class_label = classes + 1 - r.class_label;
    const auto a = compute_region_weights(in);
    const auto b = compute_region_weights(relabelled);
    for (std::size_t r = 0; r < a.size(); ++r) {
      EXPECT_EQ(b[r].class_label, classes + 1 - a[r].class_label);
      EXPECT_NEAR(a[r].lambda, b[r].lambda, 1e-12);
    }
  }
}

TEST(Partition, StrictThreshold) {
  RegionWeightTable t(3);
  t[0].lambda = 0.2;
  t[1].lambda = 0.5;
  t[2].lambda = 1.3;
  const Partition p = partition(t, 0.3);
  EXPECT_EQ(p.noisy, (std::vector<std::size_t>{0}));
  EXPECT_EQ(p.clean, (std::vector<std::size_t>{1, 2}));
  t[0].lambda = 0.3;
  EXPECT_EQ(partition(t, 0.3).clean.size(), 3u);
  EXPECT_DETA_ERROR(partition(t, 0.0), ErrorCode::ConfigInvalid);
}

TEST(Partition, CoversEveryRegionOnce) {
  Rng rng = make_rng(25);
  const RegionWeightTable t = compute_region_weights(oracle::random_region_table(rng));
  for (double thr : {0.1, 0.5, 1.0, 2.0}) {
    const Partition p = partition(t, thr);
    std::vector<std::size_t> all = p.clean;
    all.insert(all.end(), p.noisy.begin(), p.noisy.end());
    std::sort(all.begin(), all.end());
    ASSERT_EQ(all.size(), t.size());
    for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
    EXPECT_EQ(select(t, p.clean).size(), p.clean.size());
  }
}

TEST(Accumulator, FirstStepIsTheMean) {
  const AccumulatorState s = accumulate_image_weights({}, {{7, {0.4, 0.8}}});
  EXPECT_NEAR(s.omega.at(7), 0.6, 1e-15);
  EXPECT_EQ(s.t, 2);
}

TEST(Accumulator, MomentumStep) {
  AccumulatorState s;
  s.gamma = 0.7;
  s = accumulate_image_weights(s, {{1, {0.6}}});
  s = accumulate_image_weights(s, {{1, {1.0}}});
  EXPECT_NEAR(s.omega.at(1), 0.72, 1e-15);
}

TEST(Accumulator, ConstantInputIsAFixedPoint) {
  AccumulatorState s;
  for (int t = 0; t < 20; ++t) {
    s = accumulate_image_weights(s, {{1, {0.9, 0.9, 0.9}}, {2, {1.7}}});
    EXPECT_DOUBLE_EQ(s.omega.at(1), 0.9);
    EXPECT_DOUBLE_EQ(s.omega.at(2), 1.7);
  }
}

TEST(Accumulator, ConvexCombinationOfPreviousAndCurrent) {
  Rng rng = make_rng(26);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  AccumulatorState s;
  s = accumulate_image_weights(s, {{1, {u(rng)}}});
  for (int t = 0; t < 100; ++t) {
    const double prev = s.omega.at(1);
    const double a = u(rng), b = u(rng);
    s = accumulate_image_weights(s, {{1, {a, b}}});
    const double mean = 0.5 * (a + b);
    EXPECT_GE(s.omega.at(1), std::min(prev, mean) - 1e-15);
    EXPECT_LE(s.omega.at(1), std::max(prev, mean) + 1e-15);
  }
}

TEST(Accumulator, UnseenSampleAfterFirstStep) {
  AccumulatorState s = accumulate_image_weights({}, {{1, {0.5}}});
  EXPECT_DETA_ERROR(accumulate_image_weights(s, {{2, {0.5}}}), ErrorCode::MissingPrevState);
  EXPECT_DETA_ERROR(accumulate_image_weights(s, {{1, {}}}), ErrorCode::ConfigInvalid);
}

RegionRecord clean(int label, SampleId id, int row, double lambda) {
  RegionRecord r = region(label, id, vec({1}), {row, 0, row + 1, 1});
  r.lambda = lambda;
  return r;
}

TEST(MemoryBank, StoresAndSorts) {
  const std::vector<RegionRecord> in{clean(1, 1, 0, 0.5), clean(1, 2, 0, 1.5), clean(1, 3, 0, 0.9)};
  const MemoryBank b = update_memory_bank(MemoryBank(4), in, 2);
  const auto& e = b.entries(1);
  ASSERT_EQ(e.size(), 3u);
  EXPECT_EQ(e[0].weight, 1.5);
  EXPECT_EQ(e[1].weight, 0.9);
  EXPECT_EQ(e[2].weight, 0.5);
  EXPECT_EQ(b.capacity(), 4);
}

TEST(MemoryBank, DropsTheLowestBeyondCapacity) {
  std::vector<RegionRecord> in;
  for (int i = 0; i < 5; ++i) in.push_back(clean(1, i, 0, 0.1 * (i + 1)));
  const MemoryBank b = update_memory_bank(MemoryBank(4), in, 2);
  ASSERT_EQ(b.entries(1).size(), 4u);
  for (const auto& e : b.entries(1)) EXPECT_NE(e.sample_id, 0);
}

TEST(MemoryBank, DuplicatesKeepTheLargerWeight) {
  MemoryBank b = update_memory_bank(MemoryBank(4), std::vector<RegionRecord>{clean(1, 1, 0, 0.5)}, 2);
  b = update_memory_bank(b, std::vector<RegionRecord>{clean(1, 1, 0, 0.9)}, 2);
  ASSERT_EQ(b.entries(1).size(), 1u);
  EXPECT_EQ(b.entries(1)[0].weight, 0.9);
  b = update_memory_bank(b, std::vector<RegionRecord>{clean(1, 1, 0, 0.2)}, 2);
  EXPECT_EQ(b.entries(1)[0].weight, 0.9);
}

TEST(MemoryBank, InvariantsUnderRandomReplay) {
  Rng rng = make_rng(27);
  std::uniform_int_distribution<int> label(1, 3), id(0, 6), row(0, 3);
  std::uniform_real_distribution<double> w(0.0, 2.0);
  MemoryBank bank(6);
  for (int step = 0; step < 200; ++step) {
    std::vector<RegionRecord> in;
    for (int i = 0; i < 5; ++i) in.push_back(clean(label(rng), id(rng), row(rng), w(rng)));
    bank = update_memory_bank(bank, in, 3);
    for (const auto& [c, entries] : bank.classes()) {
      EXPECT_LE(entries.size(), 6u);
      for (std::size_t i = 1; i < entries.size(); ++i) EXPECT_GE(entries[i - 1].weight, entries[i].weight);
      for (std::size_t i = 0; i < entries.size(); ++i)
        for (std::size_t j = i + 1; j < entries.size(); ++j)
          EXPECT_FALSE(entries[i].sample_id == entries[j].sample_id && entries[i].box == entries[j].box);
    }
  }
}

TEST(WeightsJsonl, OneLinePerRegionThenPerImage) {
  const RegionWeightTable t = compute_region_weights(hand_table());
  std::map<SampleId, std::vector<double>> lambdas;
  for (const auto& r : t) lambdas[r.sample_id].push_back(r.lambda);
  const AccumulatorState s = accumulate_image_weights({}, lambdas);
  const std::string out = weights_jsonl(1, t, s);
  std::vector<nlohmann::json> lines;
  std::size_t start = 0;
  for (std::size_t nl; (nl = out.find('\n', start)) != std::string::npos; start = nl + 1)
    lines.push_back(nlohmann::json::parse(out.substr(start, nl - start)));
  ASSERT_EQ(lines.size(), 12u);
  EXPECT_EQ(lines[0]["kind"], "region");
  EXPECT_EQ(lines[0]["box"].size(), 4u);
  EXPECT_NEAR(lines[0]["lambda"].get<double>(), t[0].lambda, 1e-15);
  EXPECT_EQ(lines[8]["kind"], "image");
  EXPECT_NEAR(lines[8]["omega"].get<double>(), s.omega.at(1), 1e-15);
}

}  // namespace
}  // namespace deta
