#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "evitransfer/error.hpp"
#include "evitransfer/resampling.hpp"
#include "support.hpp"

using namespace evt;

namespace {

// Majority blob around (0,0), minority blob around (10,10).
LabeledDataset blobs(std::size_t majority, std::size_t minority, std::uint64_t seed,
                     double spread = 0.5) {
  Rng rng(seed);
  Matrix x(majority + minority, 2);
  std::vector<int> y;
  for (std::size_t i = 0; i < majority + minority; ++i) {
    const bool minor = i >= majority;
    x(i, 0) = (minor ? 10.0 : 0.0) + spread * rng.normal();
    x(i, 1) = (minor ? 10.0 : 0.0) + spread * rng.normal();
    y.push_back(minor ? 1 : 0);
  }
  return LabeledDataset(std::move(x), std::move(y));
}

// Distance from p to the segment ab.
double segment_distance(std::span<const double> p, std::span<const double> a,
                        std::span<const double> b) {
  double ab2 = 0.0, t = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    ab2 += (b[i] - a[i]) * (b[i] - a[i]);
    t += (p[i] - a[i]) * (b[i] - a[i]);
  }
  t = ab2 == 0.0 ? 0.0 : std::clamp(t / ab2, 0.0, 1.0);
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = a[i] + t * (b[i] - a[i]);
    d += (p[i] - q) * (p[i] - q);
  }
  return std::sqrt(d);
}

}  // namespace

TEST(Smote, IdenticalMinorityPointsAreReproduced) {
  LabeledDataset ds(Matrix{{0, 0}, {1, 1}, {2, 2}, {5, 5}, {5, 5}}, {0, 0, 0, 1, 1});
  const auto out = smote_oversample(ds, {1, 1.0}, 1);
  EXPECT_EQ(out.class_counts().at(1), 3u);
  for (std::size_t i = ds.rows(); i < out.rows(); ++i) {
    EXPECT_EQ(out.features(i, 0), 5.0);
    EXPECT_EQ(out.features(i, 1), 5.0);
    EXPECT_EQ(out.origin[i], -1);
  }
}

TEST(Smote, SyntheticPointsLieOnTheSegment) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    LabeledDataset ds(Matrix{{0, 0}, {2, 0}, {7, 7}, {8, 8}, {9, 9}, {7, 9}}, {1, 1, 0, 0, 0, 0});
    const auto out = smote_oversample(ds, {1, 1.0}, seed);
    for (std::size_t i = ds.rows(); i < out.rows(); ++i) {
      EXPECT_EQ(out.features(i, 1), 0.0);
      EXPECT_GE(out.features(i, 0), 0.0);
      EXPECT_LE(out.features(i, 0), 2.0);
    }
  }
}

TEST(Smote, TargetCountAndRawRowsPreserved) {
  const auto ds = blobs(500, 50, 2);
  const auto out = smote_oversample(ds, {5, 1.0}, 3);
  EXPECT_EQ(out.class_counts().at(1), 500u);
  EXPECT_EQ(out.class_counts().at(0), 500u);
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    EXPECT_EQ(out.origin[i], static_cast<std::ptrdiff_t>(i));
    EXPECT_EQ(out.labels[i], ds.labels[i]);
  }
}

TEST(Smote, EverySyntheticPointIsOnAMinorityNeighbourSegment) {
  const auto ds = blobs(200, 30, 4, 2.0);
  const std::size_t k = 3;
  const auto out = smote_oversample(ds, {k, 1.0}, 5);
  std::vector<std::size_t> minority;
  for (std::size_t i = 0; i < ds.rows(); ++i)
    if (ds.labels[i] == 1) minority.push_back(i);
  for (std::size_t i = ds.rows(); i < out.rows(); ++i) {
    double best = 1e300;
    for (auto a : minority)
      for (auto b : minority) best = std::min(best, segment_distance(out.features.row(i),
                                                                    ds.features.row(a),
                                                                    ds.features.row(b)));
    EXPECT_LT(best, 1e-9);
  }
}

TEST(Smote, TooFewMinorityRowsForK) {
  LabeledDataset ds(Matrix{{0}, {1}, {2}, {3}}, {0, 0, 0, 1});
  try {
    smote_oversample(ds, {1, 1.0}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Count);
  }
}

TEST(Undersample, ReducesMajorityToMinorityCount) {
  // Class sizes of the reanalysis record: 57584 samples of which 3136 severe.
  const std::size_t minority = 3136, majority = 57584 - 3136;
  Matrix x(minority + majority, 1);
  std::vector<int> y(minority + majority, 0);
  for (std::size_t i = 0; i < minority; ++i) y[i * 17 % y.size()] = 1;
  LabeledDataset ds(std::move(x), y);
  ASSERT_EQ(ds.class_counts().at(1), minority);
  const auto out = random_undersample(ds, 1.0, 6);
  EXPECT_EQ(out.class_counts().at(0), minority);
  EXPECT_EQ(out.class_counts().at(1), minority);
}

TEST(Undersample, BalancedInputIsUnchanged) {
  const auto ds = blobs(40, 40, 7);
  const auto out = random_undersample(ds, 1.0, 8);
  EXPECT_EQ(out.features, ds.features);
  EXPECT_EQ(out.labels, ds.labels);
}

TEST(Undersample, SameSeedSameSelection) {
  const auto ds = blobs(300, 20, 9);
  const auto a = random_undersample(ds, 1.0, 10);
  const auto b = random_undersample(ds, 1.0, 10);
  const auto c = random_undersample(ds, 1.0, 11);
  EXPECT_EQ(a.origin, b.origin);
  EXPECT_NE(a.origin, c.origin);
  EXPECT_TRUE(std::is_sorted(a.origin.begin(), a.origin.end()));
}

TEST(Undersample, TargetBeyondMajorityIsACountError) {
  const auto ds = blobs(30, 20, 12);
  EXPECT_THROW(random_undersample(ds, 2.0, 0), Error);
}

TEST(Enn, SeparatedBlobsAreUntouched) {
  const auto ds = blobs(50, 20, 13);
  EXPECT_EQ(enn_edit(ds, {3}).rows(), ds.rows());
}

TEST(Enn, PlantedMajorityPointIsRemoved) {
  auto ds = blobs(50, 20, 14);
  ds.features = vstack(ds.features, Matrix{{10.0, 10.0}});
  ds.labels.push_back(0);
  ds.origin.push_back(static_cast<std::ptrdiff_t>(ds.rows() - 1));
  const auto out = enn_edit(ds, {3});
  EXPECT_EQ(out.rows(), ds.rows() - 1);
  for (auto o : out.origin) EXPECT_NE(o, static_cast<std::ptrdiff_t>(ds.rows() - 1));
}

TEST(Enn, KOneIsNearestNeighbourDisagreement) {
  Rng rng(15);
  Matrix x(80, 2);
  std::vector<int> y(80);
  for (std::size_t i = 0; i < 80; ++i) {
    x(i, 0) = rng.uniform(0, 4);
    x(i, 1) = rng.uniform(0, 4);
    y[i] = i < 30 ? 1 : 0;
  }
  LabeledDataset ds(x, y);
  std::set<std::ptrdiff_t> expected;
  for (std::size_t i = 0; i < 80; ++i) {
    std::size_t nn = i;
    double best = 1e300;
    for (std::size_t j = 0; j < 80; ++j) {
      if (j == i) continue;
      const double d = squared_distance(x.row(i), x.row(j));
      if (d < best) best = d, nn = j;
    }
    if (!(y[i] == 0 && y[nn] != 0)) expected.insert(static_cast<std::ptrdiff_t>(i));
  }
  const auto out = enn_edit(ds, {1});
  EXPECT_EQ(std::set<std::ptrdiff_t>(out.origin.begin(), out.origin.end()), expected);
}

TEST(Enn, MinorityRowsAreNeverRemoved) {
  Rng rng(16);
  Matrix x(100, 2);
  std::vector<int> y(100);
  for (std::size_t i = 0; i < 100; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
    y[i] = i % 5 == 0 ? 1 : 0;
  }
  const auto out = enn_edit(LabeledDataset(x, y), {3});
  EXPECT_EQ(out.class_counts().at(1), 20u);
}

TEST(SmoteEnn, NoDisagreementEqualsSmoteAlone) {
  const auto ds = blobs(60, 20, 17);
  const auto smote = smote_oversample(ds, {5, 1.0}, 18);
  const auto both = smoteenn(ds, {5, 1.0}, {3}, 18);
  EXPECT_EQ(both.features, smote.features);
  EXPECT_EQ(both.labels, smote.labels);
}

TEST(SmoteEnn, PlantedNoisyPointSurvivesSmoteButNotTheCombination) {
  auto ds = blobs(60, 20, 19);
  ds.features = vstack(ds.features, Matrix{{10.0, 10.0}});
  ds.labels.push_back(0);
  ds.origin.push_back(static_cast<std::ptrdiff_t>(ds.rows() - 1));
  const auto planted = static_cast<std::ptrdiff_t>(ds.rows() - 1);
  const auto smote = smote_oversample(ds, {5, 1.0}, 20);
  const auto both = smoteenn(ds, {5, 1.0}, {3}, 20);
  EXPECT_NE(std::find(smote.origin.begin(), smote.origin.end(), planted), smote.origin.end());
  EXPECT_EQ(std::find(both.origin.begin(), both.origin.end(), planted), both.origin.end());
  EXPECT_EQ(smoteenn(ds, {5, 1.0}, {3}, 20).features, both.features);
}

TEST(Dataset, ClassRolesNeedTwoClasses) {
  LabeledDataset ds(Matrix{{0}, {1}}, {1, 1});
  EXPECT_THROW(class_roles(ds), Error);
}
