#include <gtest/gtest.h>

#include "semstab/align.hpp"
#include "semstab/metrics.hpp"
#include "../support/fixtures.hpp"

using namespace semstab;
using namespace semstab::testing;

namespace {

double max_abs(const RowMatrix& m) { return m.cwiseAbs().maxCoeff(); }

EmbeddingMatrix random_embedding(SplitMix64& rng, int year, Eigen::Index rows, Eigen::Index cols) {
  return make_matrix(year, word_list(static_cast<std::size_t>(rows)), random_matrix(rng, rows, cols));
}

}  // namespace

TEST(Procrustes, IdenticalMatricesGiveIdentity) {
  SplitMix64 rng(1);
  auto base = random_embedding(rng, 2019, 40, 8);
  auto map = procrustes(base, base);
  EXPECT_LT(max_abs(map.rotation - RowMatrix::Identity(8, 8)), 1e-10);
  EXPECT_LT(map.residual, 1e-10);
  EXPECT_EQ(map.shared_size, 40u);
  EXPECT_FALSE(map.warning);
}

TEST(Procrustes, RecoversAnExactRotation) {
  SplitMix64 rng(2);
  auto base = random_embedding(rng, 2019, 200, 50);
  const RowMatrix R = random_orthogonal(rng, 50);
  auto target = base;
  target.year = 2020;
  target.vectors = base.vectors * R;
  auto map = procrustes(base, target);
  EXPECT_LT(max_abs(map.rotation - R.transpose()), 1e-8);
  EXPECT_LT(map.residual, 1e-8);
  EXPECT_LT(max_abs(map.rotation.transpose() * map.rotation - RowMatrix::Identity(50, 50)), 1e-8);
  EXPECT_NEAR(std::abs(map.rotation.determinant()), 1.0, 1e-6);
}

TEST(Procrustes, NoisyRotationShrinksResidual) {
  SplitMix64 rng(3);
  auto base = random_embedding(rng, 2019, 200, 50);
  auto target = base;
  target.vectors = base.vectors * random_orthogonal(rng, 50);
  for (Eigen::Index i = 0; i < target.vectors.size(); ++i) target.vectors.data()[i] += 0.01 * normal(rng);
  auto map = procrustes(base, target);
  // Oracle: Frobenius norms computed directly from the fixture.
  const double before = (target.vectors - base.vectors).norm();
  const double after = (target.vectors * map.rotation - base.vectors).norm();
  EXPECT_NEAR(map.unaligned_residual, before, 1e-9);
  EXPECT_NEAR(map.residual, after, 1e-9);
  EXPECT_LE(after * 5, before);
}

TEST(Procrustes, BeatsRandomOrthogonalMatrices) {
  SplitMix64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    auto base = random_embedding(rng, 2019, 6, 3);
    auto target = random_embedding(rng, 2020, 6, 3);
    auto map = procrustes(base, target);
    for (int i = 0; i < 1000; ++i) {
      const RowMatrix Q = random_orthogonal(rng, 3);
      ASSERT_LE(map.residual, (target.vectors * Q - base.vectors).norm() + 1e-12);
    }
  }
}

TEST(Procrustes, PreservesCosinesAndNeighbours) {
  SplitMix64 rng(5);
  auto base = random_embedding(rng, 2019, 30, 6);
  auto target = random_embedding(rng, 2020, 30, 6);
  auto map = procrustes(base, target);
  auto rotated = target;
  rotated.vectors = target.vectors * map.rotation;
  for (std::size_t i = 0; i < 30; ++i)
    for (std::size_t j = 0; j < 30; ++j)
      if (i != j) ASSERT_NEAR(cosine(rotated.row(i), rotated.row(j)), cosine(target.row(i), target.row(j)), 1e-10);
  for (const auto& w : {"w0", "w7", "w29"}) EXPECT_EQ(knn(w, rotated, 5).words, knn(w, target, 5).words);
}

TEST(Procrustes, UsesOnlySharedTokens) {
  auto base = make_matrix(2019, {"a", "b", "c"}, RowMatrix::Identity(3, 3));
  auto target = make_matrix(2020, {"c", "x", "b", "a"}, RowMatrix::Zero(4, 3));
  target.vectors.row(0) << 0, 0, 1;
  target.vectors.row(1) << 5, 5, 5;
  target.vectors.row(2) << 0, 1, 0;
  target.vectors.row(3) << 1, 0, 0;
  auto map = procrustes(base, target);
  EXPECT_EQ(map.shared_size, 3u);
  EXPECT_LT(map.residual, 1e-12);
}

TEST(Procrustes, TooFewSharedTokensIsAnError) {
  auto base = make_matrix(2019, {"a", "b"}, RowMatrix::Identity(2, 2));
  auto target = make_matrix(2020, {"a", "z"}, RowMatrix::Identity(2, 2));
  EXPECT_THROW(procrustes(base, target), Error);
}

TEST(Procrustes, WarnsWhenUnderdetermined) {
  SplitMix64 rng(6);
  auto base = random_embedding(rng, 2019, 4, 8);
  auto target = random_embedding(rng, 2020, 4, 8);
  EXPECT_TRUE(procrustes(base, target).warning.has_value());
}

TEST(AlignSeries, SingleMatrixGetsIdentity) {
  SplitMix64 rng(7);
  auto s = align_series({random_embedding(rng, 2019, 10, 4)}, 2019);
  ASSERT_EQ(s.maps.size(), 1u);
  EXPECT_TRUE(s.maps[0].rotation == RowMatrix::Identity(4, 4));
}

TEST(AlignSeries, IdenticalPairAlignsWithIdentity) {
  SplitMix64 rng(8);
  auto a = random_embedding(rng, 2019, 20, 4);
  auto b = a;
  b.year = 2020;
  auto s = align_series({a, b}, 2019);
  EXPECT_LT(max_abs(s.maps[1].rotation - RowMatrix::Identity(4, 4)), 1e-10);
}

TEST(AlignSeries, RotatedThirdYearAlignsExactly) {
  SplitMix64 rng(9);
  auto a = random_embedding(rng, 2019, 50, 5);
  auto b = random_embedding(rng, 2020, 50, 5);
  auto c = a;
  c.year = 2021;
  c.vectors = a.vectors * random_orthogonal(rng, 5);
  auto s = align_series({c, a, b}, 2019);
  EXPECT_EQ(s.matrices[0].year, 2019);
  EXPECT_EQ(s.matrices[2].year, 2021);
  EXPECT_LT(s.maps[2].residual, 1e-8);
  EXPECT_LT(max_abs(s.matrices[2].vectors - s.matrices[0].vectors), 1e-8);
}

TEST(AlignSeries, RestrictsToSharedVocabularyInBaseOrder) {
  auto a = make_matrix(2019, {"x", "a", "b", "c"}, RowMatrix::Random(4, 2));
  auto b = make_matrix(2020, {"c", "b", "a", "y"}, RowMatrix::Random(4, 2));
  auto s = align_series({a, b}, 2019);
  for (const auto& m : s.matrices) EXPECT_EQ(m.vocabulary.tokens(), (std::vector<std::string>{"a", "b", "c"}));
}

TEST(AlignSeries, EachYearAlignsToBaseDirectly) {
  SplitMix64 rng(10);
  auto a = random_embedding(rng, 2019, 40, 4);
  auto b = random_embedding(rng, 2020, 40, 4);
  auto c = random_embedding(rng, 2021, 40, 4);
  auto s = align_series({a, b, c}, 2019);
  EXPECT_LT(max_abs(s.maps[2].rotation - procrustes(a, c).rotation), 1e-12);
}

TEST(AlignSeries, Preconditions) {
  SplitMix64 rng(11);
  auto a = random_embedding(rng, 2019, 10, 3);
  auto b = random_embedding(rng, 2020, 10, 3);
  EXPECT_THROW(align_series({a, b}, 2018), Error);
  b.provenance = Provenance::contextual_ingested;
  EXPECT_THROW(align_series({a, b}, 2019), Error);
  auto c = make_matrix(2020, {"zz", "yy"}, RowMatrix::Random(2, 3));
  EXPECT_THROW(align_series({a, c}, 2019), Error);
}

TEST(ZScore, TwoPointColumn) {
  auto m = make_matrix(2020, {"a", "b"}, RowMatrix(2, 1));
  m.vectors << 1, 3;
  auto z = zscore(m);
  EXPECT_DOUBLE_EQ(z.vectors(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(z.vectors(1, 0), 1.0);
  EXPECT_TRUE(z.standardized);
}

TEST(ZScore, MomentsAndIdempotence) {
  SplitMix64 rng(12);
  auto m = random_embedding(rng, 2020, 100, 7);
  m.vectors = (m.vectors * 3.0).array() + 5.0;
  auto z = zscore(m);
  for (Eigen::Index c = 0; c < 7; ++c) {
    const double mean = z.vectors.col(c).mean();
    EXPECT_LT(std::abs(mean), 1e-9);
    EXPECT_NEAR(std::sqrt((z.vectors.col(c).array() - mean).square().mean()), 1.0, 1e-9);
  }
  EXPECT_LT(max_abs(zscore(z).vectors - z.vectors), 1e-9);
}

TEST(ZScore, ConstantColumnNamesDimension) {
  auto m = make_matrix(2020, {"a", "b", "c"}, RowMatrix(3, 2));
  m.vectors << 1, 2, 5, 2, 7, 2;
  try {
    zscore(m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("zero variance in dimension 1"), std::string::npos) << e.what();
    EXPECT_EQ(e.kind(), ErrorKind::numeric);
  }
}

TEST(ZScore, PreservesPerDimensionArgmax) {
  SplitMix64 rng(13);
  auto m = random_embedding(rng, 2020, 60, 9);
  auto z = zscore(m);
  for (Eigen::Index c = 0; c < 9; ++c) {
    Eigen::Index a = 0, b = 0;
    m.vectors.col(c).maxCoeff(&a);
    z.vectors.col(c).maxCoeff(&b);
    EXPECT_EQ(a, b);
  }
}

TEST(ZScore, WholeMatrixMode) {
  SplitMix64 rng(14);
  auto m = random_embedding(rng, 2020, 30, 4);
  auto z = zscore(m, ZScoreMode::whole_matrix);
  const double mean = z.vectors.mean();
  EXPECT_LT(std::abs(mean), 1e-12);
  EXPECT_NEAR(std::sqrt((z.vectors.array() - mean).square().mean()), 1.0, 1e-12);
}

TEST(ZScore, NeedsTwoRows) {
  auto m = make_matrix(2020, {"a"}, RowMatrix::Ones(1, 3));
  EXPECT_THROW(zscore(m), Error);
}

TEST(UnitRows, NormalizesBeforeAlignment) {
  SplitMix64 rng(15);
  auto a = random_embedding(rng, 2019, 30, 4);
  auto b = a;
  b.year = 2020;
  b.vectors *= 7.0;
  AlignOptions opts;
  opts.normalize_rows = true;
  auto s = align_series({a, b}, 2019, opts);
  for (const auto& m : s.matrices)
    for (Eigen::Index r = 0; r < m.vectors.rows(); ++r) EXPECT_NEAR(m.vectors.row(r).norm(), 1.0, 1e-12);
  EXPECT_LT(s.maps[1].residual, 1e-10);
}
