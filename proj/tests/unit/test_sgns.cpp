#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include "semstab/metrics.hpp"
#include "semstab/sgns.hpp"
#include "../support/fixtures.hpp"

using namespace semstab;
using semstab::testing::sun_config;
using semstab::testing::sun_corpus;

namespace {

using Pairs = std::vector<std::pair<std::uint32_t, std::uint32_t>>;

// Positive PMI count vectors over a symmetric window, then cosine.
double ppmi_cosine(const TimeSlice& slice, const std::string& a, const std::string& b, int window) {
  std::map<std::string, std::map<std::string, double>> co;
  std::map<std::string, double> row_sum, col_sum;
  double total = 0;
  for (const auto& doc : slice.documents) {
    for (std::size_t i = 0; i < doc.size(); ++i) {
      for (std::size_t j = 0; j < doc.size(); ++j) {
        if (i == j || (i > j ? i - j : j - i) > static_cast<std::size_t>(window)) continue;
        co[doc[i]][doc[j]] += 1;
        row_sum[doc[i]] += 1;
        col_sum[doc[j]] += 1;
        total += 1;
      }
    }
  }
  std::set<std::string> contexts;
  for (const auto& [c, n] : col_sum) contexts.insert(c);
  auto vec = [&](const std::string& w) {
    std::vector<double> v;
    for (const auto& c : contexts) {
      const double n = co[w][c];
      const double pmi = n > 0 ? std::log(n * total / (row_sum[w] * col_sum[c])) : 0.0;
      v.push_back(std::max(0.0, pmi));
    }
    return v;
  };
  return cosine(vec(a), vec(b));
}

TimeSlice wide_vocab_slice(int words, int repeats) {
  SplitMix64 rng(5);
  std::vector<std::string> bag;
  for (int w = 0; w < words; ++w)
    for (int r = 0; r < repeats; ++r) bag.push_back("tok" + std::to_string(w));
  for (std::size_t i = bag.size(); i > 1; --i) std::swap(bag[i - 1], bag[rng.below(i)]);
  std::vector<std::vector<std::string>> docs;
  for (std::size_t i = 0; i < bag.size(); i += 20)
    docs.emplace_back(bag.begin() + static_cast<std::ptrdiff_t>(i),
                      bag.begin() + static_cast<std::ptrdiff_t>(std::min(bag.size(), i + 20)));
  return make_slice(2020, std::move(docs));
}

}  // namespace

TEST(SgnsConfig, DefaultsFollowTheReferenceSetup) {
  SgnsConfig c;
  EXPECT_EQ(c.dimension, 100);
  EXPECT_EQ(c.window, 5);
  EXPECT_EQ(c.negatives, 5);
  EXPECT_EQ(c.epochs, 5);
  EXPECT_DOUBLE_EQ(c.initial_learning_rate, 0.025);
  EXPECT_DOUBLE_EQ(c.subsample_threshold, 1e-3);
  EXPECT_EQ(c.threads, 1);
  EXPECT_NO_THROW(c.validate());
}

TEST(SgnsConfig, RejectsInvalidValues) {
  auto bad = [](auto mutate) {
    SgnsConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), Error);
  };
  bad([](SgnsConfig& c) { c.dimension = 1; });
  bad([](SgnsConfig& c) { c.window = 0; });
  bad([](SgnsConfig& c) { c.negatives = 0; });
  bad([](SgnsConfig& c) { c.epochs = 0; });
  bad([](SgnsConfig& c) { c.initial_learning_rate = 0; });
  bad([](SgnsConfig& c) { c.subsample_threshold = -1; });
}

TEST(ContextPairs, SingleTokenHasNoContext) {
  SplitMix64 rng(1);
  const std::vector<std::uint32_t> doc{0};
  EXPECT_TRUE(context_pairs(doc, 5, rng).empty());
}

TEST(ContextPairs, TwoTokensPairBothWays) {
  SplitMix64 rng(1);
  const std::vector<std::uint32_t> doc{0, 1};
  auto pairs = context_pairs(doc, 1, rng);
  std::sort(pairs.begin(), pairs.end());
  EXPECT_EQ(pairs, (Pairs{{0, 1}, {1, 0}}));
}

TEST(ContextPairs, PinnedWindowEnumeratesAllOrderedPairs) {
  const std::vector<std::uint32_t> doc{0, 1, 2};
  auto pairs = context_pairs(doc, 2, [](int w) { return w; });
  std::sort(pairs.begin(), pairs.end());
  EXPECT_EQ(pairs, (Pairs{{0, 1}, {0, 2}, {1, 0}, {1, 2}, {2, 0}, {2, 1}}));
}

TEST(ContextPairs, EffectiveWindowStaysInRange) {
  SplitMix64 rng(9);
  std::vector<std::uint32_t> doc(50);
  for (std::uint32_t i = 0; i < 50; ++i) doc[i] = i;
  std::set<int> seen;
  for_each_context(
      doc, 4,
      [&](int w) {
        int b = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(w)));
        seen.insert(b);
        return b;
      },
      [&](std::size_t pos, std::uint32_t c, std::uint32_t o) {
        EXPECT_EQ(c, pos);
        EXPECT_NE(c, o);
        EXPECT_LE(c > o ? c - o : o - c, 4u);
      });
  EXPECT_EQ(seen, (std::set<int>{1, 2, 3, 4}));
}

TEST(AliasTable, MatchesTargetDistribution) {
  const std::vector<double> weights{1.0, std::pow(8.0, 0.75), std::pow(27.0, 0.75), 0.5, 3.0};
  AliasTable table(weights);
  SplitMix64 rng(2);
  const int n = 200000;
  std::vector<double> observed(weights.size(), 0);
  for (int i = 0; i < n; ++i) observed[table.sample(rng)] += 1;
  double total = 0;
  for (double w : weights) total += w;
  double chi2 = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double expected = n * weights[i] / total;
    chi2 += (observed[i] - expected) * (observed[i] - expected) / expected;
  }
  boost::math::chi_squared dist(static_cast<double>(weights.size() - 1));
  EXPECT_GT(1 - boost::math::cdf(dist, chi2), 0.001) << chi2;
}

TEST(Train, InsufficientDataIsAnError) {
  auto slice = make_slice(2020, {{"a", "b", "a", "b"}});
  try {
    train(slice, build_vocab(slice, 1), SgnsConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("insufficient data"), std::string::npos);
    EXPECT_EQ(e.kind(), ErrorKind::data);
  }
}

TEST(Train, ShapeAndProvenance) {
  auto slice = wide_vocab_slice(120, 50);
  auto vocab = build_vocab(slice, 5);
  ASSERT_EQ(vocab.size(), 120u);
  SgnsConfig c;
  c.dimension = 50;
  c.epochs = 1;
  auto m = train(slice, vocab, c);
  EXPECT_EQ(m.vectors.rows(), 120);
  EXPECT_EQ(m.vectors.cols(), 50);
  EXPECT_EQ(m.provenance, Provenance::static_trained);
  EXPECT_FALSE(m.standardized);
  EXPECT_EQ(m.year, 2020);
  EXPECT_EQ(m.vocabulary, vocab);
  for (Eigen::Index r = 0; r < m.vectors.rows(); ++r) EXPECT_GT(m.vectors.row(r).norm(), 0.0);
}

TEST(Train, SameSeedIsBitwiseIdentical) {
  auto slice = sun_corpus(1);
  auto vocab = build_vocab(slice, 5);
  auto a = train(slice, vocab, sun_config(3));
  auto b = train(slice, vocab, sun_config(3));
  EXPECT_TRUE(a.vectors == b.vectors);
  auto c = train(slice, vocab, sun_config(4));
  EXPECT_FALSE(a.vectors == c.vectors);
}

TEST(Train, LossIsFiniteAndDecreases) {
  auto slice = sun_corpus(2);
  TrainStats stats;
  train(slice, build_vocab(slice, 5), sun_config(2), &stats);
  ASSERT_EQ(stats.epoch_loss.size(), 5u);
  for (double l : stats.epoch_loss) EXPECT_TRUE(std::isfinite(l));
  EXPECT_LT(stats.epoch_loss.back(), stats.epoch_loss.front());
  EXPECT_GT(stats.pairs, 0u);
}

TEST(Train, IdenticalContextsGiveSimilarVectors) {
  auto slice = sun_corpus(1);
  // Count-based oracle on the same corpus.
  EXPECT_GT(ppmi_cosine(slice, "sunA", "sunB", 2), 0.9);
  auto m = train(slice, build_vocab(slice, 5), sun_config(1));
  EXPECT_GT(cosine(m.row("sunA"), m.row("sunB")), 0.6);
}

TEST(Train, DistributionalGapOverTenSeeds) {
  double same = 0, other = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto slice = sun_corpus(seed);
    auto m = train(slice, build_vocab(slice, 5), sun_config(seed));
    same += cosine(m.row("sunA"), m.row("sunB"));
    other += cosine(m.row("sunA"), m.row("rock"));
  }
  EXPECT_GE(same / 10 - other / 10, 0.3);
}

TEST(Train, ParallelModeKeepsDistributionalProperties) {
  double same = 0, other = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto slice = sun_corpus(seed);
    auto cfg = sun_config(seed);
    cfg.threads = 2;
    auto m = train(slice, build_vocab(slice, 5), cfg);
    ASSERT_TRUE(m.vectors.allFinite());
    same += cosine(m.row("sunA"), m.row("sunB"));
    other += cosine(m.row("sunA"), m.row("rock"));
  }
  EXPECT_GT(same / 5, 0.6);
  EXPECT_GE(same / 5 - other / 5, 0.3);
}

TEST(Train, SubsamplingStillTrains) {
  auto slice = sun_corpus(1);
  auto cfg = sun_config(1);
  cfg.subsample_threshold = 1e-3;
  cfg.epochs = 10;
  auto m = train(slice, build_vocab(slice, 5), cfg);
  EXPECT_TRUE(m.vectors.allFinite());
  EXPECT_GT(cosine(m.row("sunA"), m.row("sunB")), cosine(m.row("sunA"), m.row("rock")));
}
