#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "semstab/store.hpp"
#include "../support/fixtures.hpp"
#include "../support/tempdir.hpp"

using namespace semstab;
using namespace semstab::testing;
namespace fs = std::filesystem;

namespace {

std::string error_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

KeywordSet kw(std::vector<std::string> words) { return KeywordSet({{"k", std::move(words)}}); }

OccurrenceBatch batch(std::string keyword, int year, RowMatrix v) { return {std::move(keyword), year, std::move(v)}; }

RowMatrix rows(std::initializer_list<std::initializer_list<double>> values) {
  RowMatrix m(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(values.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : values) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

}  // namespace

TEST(MatrixFormat, SmallRoundTrip) {
  TempDir dir;
  auto m = make_matrix(2020, {"a", "b"}, rows({{1.5, -2, 0.1}, {1e-300, 3.141592653589793, -0.0}}));
  write_matrix(m, dir / "m.vec");
  auto back = read_matrix(dir / "m.vec", 2020);
  EXPECT_EQ(back.vocabulary.tokens(), m.vocabulary.tokens());
  EXPECT_TRUE(back.vectors == m.vectors);
  EXPECT_EQ(back.year, 2020);
}

TEST(MatrixFormat, RandomRoundTripIsBitExact) {
  TempDir dir;
  SplitMix64 rng(17);
  for (int t = 0; t < 20; ++t) {
    auto m = make_matrix(2000 + t, word_list(5 + rng.below(20)), RowMatrix());
    m.vectors = random_matrix(rng, static_cast<Eigen::Index>(m.vocabulary.size()), 1 + static_cast<Eigen::Index>(rng.below(30)));
    m.vectors *= std::pow(10.0, static_cast<double>(rng.below(20)) - 10.0);
    write_matrix(m, dir / "m.vec");
    auto back = read_matrix(dir / "m.vec");
    ASSERT_EQ(std::memcmp(back.vectors.data(), m.vectors.data(), sizeof(double) * static_cast<std::size_t>(m.vectors.size())), 0);
  }
}

TEST(MatrixFormat, CanonicalFileRoundTrips) {
  const std::string text = "2 2\nx 0.5 -1\ny 2.25 3\n";
  auto parsed = parse_matrix_text(text, "inline");
  EXPECT_EQ(format_matrix(parsed.tokens, parsed.vectors), text);
}

TEST(MatrixFormat, MissingRowReportsLine) {
  std::string text = "5 100\n";
  for (int r = 0; r < 4; ++r) {
    text += "w" + std::to_string(r);
    for (int c = 0; c < 100; ++c) text += " 0.5";
    text += "\n";
  }
  auto msg = error_of([&] { parse_matrix_text(text, "m.vec"); });
  EXPECT_NE(msg.find("m.vec:6:"), std::string::npos) << msg;
}

TEST(MatrixFormat, MalformedContentRejected) {
  EXPECT_THROW(parse_matrix_text("1 2\na 1\n", "x"), Error);
  EXPECT_THROW(parse_matrix_text("1 2\na 1 2 3\n", "x"), Error);
  EXPECT_THROW(parse_matrix_text("1 2\na 1 nan\n", "x"), Error);
  EXPECT_THROW(parse_matrix_text("1 2\na 1 inf\n", "x"), Error);
  EXPECT_THROW(parse_matrix_text("1 2\na 1 2\nb 3 4\n", "x"), Error);
  EXPECT_THROW(parse_matrix_text("x y\n", "x"), Error);
}

TEST(MatrixFormat, TokenWithSpaceRejectedOnWrite) {
  auto msg = error_of([] { format_matrix({"rule of law"}, rows({{1, 2}})); });
  EXPECT_FALSE(msg.empty());
  EXPECT_FALSE(valid_token("a b"));
  EXPECT_FALSE(valid_token(""));
  EXPECT_TRUE(valid_token("民主"));
}

TEST(MatrixFormat, NonFiniteRejectedOnWrite) {
  EXPECT_THROW(format_matrix({"a"}, rows({{1, std::numeric_limits<double>::infinity()}})), Error);
}

TEST(Manifest, FixtureValidates) {
  auto m = load_manifest(fs::path(SEMSTAB_FIXTURES) / "contextual" / "manifest.json");
  EXPECT_EQ(m.name, "fixture-contextual");
  EXPECT_EQ(m.provenance, Provenance::contextual_ingested);
  EXPECT_EQ(m.dimension, 4);
  EXPECT_EQ(m.years, (std::vector<int>{2019, 2020, 2021}));
}

TEST(Manifest, OccurrenceCountsMatchRows) {
  auto m = load_manifest(fs::path(SEMSTAB_FIXTURES) / "contextual" / "manifest.json");
  EXPECT_EQ(m.occurrence_counts.at(2019).at("alpha"), 3u);
  EXPECT_FALSE(m.occurrence_counts.at(2020).contains("gamma"));
  const auto kws = load_keywords(fs::path(SEMSTAB_FIXTURES) / "contextual" / "keywords.json");
  for (const auto& [year, per_kw] : m.occurrence_counts) {
    auto batches = read_occurrences(m.file_for(year), year);
    std::size_t total = 0, listed = 0;
    for (const auto& b : batches) {
      total += static_cast<std::size_t>(b.vectors.rows());
      EXPECT_EQ(per_kw.at(b.keyword), static_cast<std::size_t>(b.vectors.rows()));
    }
    for (const auto& [kw, n] : per_kw) listed += n;
    EXPECT_EQ(total, listed);
  }
  EXPECT_NO_THROW(ingest_series(m, kws));
  m.occurrence_counts[2020]["alpha"] = 4;
  try {
    ingest_series(m, kws);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::data);
    EXPECT_NE(std::string(e.what()).find("'alpha' in 2020"), std::string::npos);
  }
}

TEST(Manifest, ProducerFieldsRoundTrip) {
  TempDir dir;
  write_text(dir / "2020.occ", "1 2\nk#1 0.5 0.25\n");
  write_text(dir / "manifest.json",
             R"({"name": "x", "provenance": "contextual_ingested", "dimension": 2, "years": [2020],
                 "files": {"2020": "2020.occ"}, "occurrence_counts": {"2020": {"k": 1}},
                 "unextractable": ["zz"], "model": "some-encoder", "truncated_sequences": 0})");
  auto m = load_manifest(dir / "manifest.json");
  EXPECT_EQ(m.unextractable, std::vector<std::string>{"zz"});
  write_manifest(m, dir / "again.json");
  auto back = load_manifest(dir / "again.json");
  EXPECT_EQ(back.occurrence_counts, m.occurrence_counts);
  EXPECT_EQ(back.unextractable, m.unextractable);
}

TEST(Manifest, StructuralErrors) {
  SeriesManifest m;
  m.name = "s";
  m.dimension = 2;
  m.years = {2020, 2019};
  m.files = {{2019, "a"}, {2020, "b"}};
  EXPECT_THROW(validate_manifest(m, false), Error);
  m.years = {2019, 2020};
  EXPECT_NO_THROW(validate_manifest(m, false));
  EXPECT_THROW(validate_manifest(m, true), Error);
  m.files.erase(2020);
  EXPECT_THROW(validate_manifest(m, false), Error);
}

TEST(Manifest, SeriesRoundTrip) {
  TempDir dir;
  SplitMix64 rng(3);
  std::vector<EmbeddingMatrix> series;
  for (int y = 2019; y <= 2021; ++y) series.push_back(make_matrix(y, word_list(6), random_matrix(rng, 6, 3)));
  write_series(series, "demo", dir.path());
  auto manifest = load_manifest(dir / "manifest.json");
  auto back = load_series(manifest);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].year, series[i].year);
    EXPECT_TRUE(back[i].vectors == series[i].vectors);
  }
}

TEST(Occurrences, RowNames) {
  EXPECT_EQ(occurrence_keyword("Trade#12"), "Trade");
  EXPECT_EQ(occurrence_keyword("a#b#3"), "a#b");
  EXPECT_TRUE(occurrence_keyword("Trade").empty());
  EXPECT_TRUE(occurrence_keyword("Trade#").empty());
  EXPECT_TRUE(occurrence_keyword("#3").empty());
  EXPECT_TRUE(occurrence_keyword("Trade#x").empty());
}

TEST(Occurrences, WriteThenReadGroupsByKeyword) {
  TempDir dir;
  std::vector<OccurrenceBatch> in{batch("a", 2020, rows({{1, 0}, {0, 1}})), batch("b", 2020, rows({{2, 2}}))};
  write_occurrences(in, dir / "2020.occ");
  auto out = read_occurrences(dir / "2020.occ", 2020);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].keyword, "a");
  EXPECT_EQ(out[0].vectors.rows(), 2);
  EXPECT_TRUE(out[1].vectors == in[1].vectors);
}

TEST(Average, SingleOccurrenceIsItself) {
  auto r = average_occurrences({batch("a", 2020, rows({{0.25, -4}}))}, kw({"a"}), {2020});
  ASSERT_EQ(r.matrices.size(), 1u);
  EXPECT_TRUE(r.matrices[0].vectors == rows({{0.25, -4}}));
  EXPECT_EQ(r.matrices[0].provenance, Provenance::contextual_ingested);
  EXPECT_TRUE(r.gaps.empty());
}

TEST(Average, ArithmeticMean) {
  auto r = average_occurrences({batch("a", 2020, rows({{1, 0}, {0, 1}}))}, kw({"a"}), {2020});
  EXPECT_TRUE(r.matrices[0].vectors == rows({{0.5, 0.5}}));
}

TEST(Average, MissingYearIsACoverageGap) {
  std::vector<OccurrenceBatch> b{batch("a", 2021, rows({{1, 0}})), batch("a", 2023, rows({{1, 1}})),
                                 batch("b", 2021, rows({{0, 1}})), batch("b", 2022, rows({{0, 2}})),
                                 batch("b", 2023, rows({{0, 3}}))};
  auto r = average_occurrences(b, kw({"a", "b"}), {2021, 2022, 2023});
  ASSERT_EQ(r.gaps.size(), 1u);
  EXPECT_EQ(r.gaps[0], (CoverageGap{"a", 2022}));
  EXPECT_FALSE(r.matrices[1].vocabulary.contains("a"));
  EXPECT_TRUE(r.matrices[1].vocabulary.contains("b"));
}

TEST(Average, PermutationInvariant) {
  SplitMix64 rng(8);
  std::vector<OccurrenceBatch> b;
  for (int i = 0; i < 12; ++i) b.push_back(batch(i % 2 ? "x" : "y", 2020 + i % 3, random_matrix(rng, 1 + rng.below(4), 5)));
  auto ref = average_occurrences(b, kw({"x", "y"}), {2020, 2021, 2022});
  for (int t = 0; t < 20; ++t) {
    for (std::size_t i = b.size(); i > 1; --i) std::swap(b[i - 1], b[rng.below(i)]);
    auto r = average_occurrences(b, kw({"x", "y"}), {2020, 2021, 2022});
    for (std::size_t y = 0; y < 3; ++y) ASSERT_TRUE(r.matrices[y].vectors == ref.matrices[y].vectors);
  }
}

TEST(Average, OutputVocabularyIsWithinKeywords) {
  auto r = average_occurrences({batch("b", 2020, rows({{1, 2, 3}}))}, kw({"a", "b"}), {2020});
  for (const auto& t : r.matrices[0].vocabulary.tokens()) EXPECT_TRUE(t == "a" || t == "b");
  EXPECT_EQ(r.matrices[0].dimension(), 3u);
}

TEST(Average, RejectsUnknownKeywordsAndBadInput) {
  EXPECT_THROW(average_occurrences({batch("z", 2020, rows({{1}}))}, kw({"a"}), {2020}), Error);
  EXPECT_THROW(average_occurrences({batch("a", 2019, rows({{1}}))}, kw({"a"}), {2020}), Error);
  EXPECT_THROW(average_occurrences({batch("a", 2020, rows({{1}})), batch("a", 2020, rows({{1, 2}}))}, kw({"a"}), {2020}),
               Error);
}

TEST(Ingest, FixtureAveragesAndReportsGap) {
  const auto dir = fs::path(SEMSTAB_FIXTURES) / "contextual";
  auto r = ingest_series(load_manifest(dir / "manifest.json"), load_keywords(dir / "keywords.json"));
  ASSERT_EQ(r.matrices.size(), 3u);
  ASSERT_EQ(r.gaps.size(), 1u);
  EXPECT_EQ(r.gaps[0], (CoverageGap{"gamma", 2020}));
  EXPECT_TRUE(r.matrices[0].vocabulary.contains("Rule_of_Law"));

  // Oracle: the mean of the raw rows read independently.
  auto raw = parse_matrix_text(read_file(dir / "2020.occ"), "2020.occ");
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(4);
  int n = 0;
  for (std::size_t i = 0; i < raw.tokens.size(); ++i)
    if (raw.tokens[i].rfind("alpha#", 0) == 0) {
      sum += raw.vectors.row(static_cast<Eigen::Index>(i));
      ++n;
    }
  const auto got = r.matrices[1].row("alpha");
  for (int c = 0; c < 4; ++c) EXPECT_NEAR(got[static_cast<std::size_t>(c)], sum(c) / n, 1e-15);
}

TEST(Ingest, PreaveragedMatricesAreRestrictedToKeywords) {
  TempDir dir;
  std::vector<EmbeddingMatrix> series;
  for (int y = 2019; y <= 2020; ++y)
    series.push_back(make_matrix(y, {"a", "b", "c"}, rows({{1, 0}, {0, 1}, {1, 1}}), Provenance::contextual_ingested));
  write_series(series, "pre", dir.path());
  auto r = ingest_series(load_manifest(dir / "manifest.json"), kw({"c", "a", "z"}));
  EXPECT_EQ(r.matrices[0].vocabulary.tokens(), (std::vector<std::string>{"c", "a"}));
  EXPECT_EQ(r.gaps.size(), 2u);
}
