#pragma once

// Stability metrics over a word's yearly vectors:
//   SD   cosine between first and last year
//   MTS  mean cosine between consecutive years
//   RSC  mean (1 - cosine) between consecutive years
//   LNS  |top-k neighbours(t1) ∩ top-k neighbours(t2)| / k
// plus percentile-bootstrap aggregation over words.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "semstab/common.hpp"
#include "semstab/corpus.hpp"
#include "semstab/embedding.hpp"
#include "semstab/store.hpp"

namespace semstab {

/// u.v / (|u||v|), clamped to [-1, 1].
inline double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    fail(ErrorKind::data, "cosine: dimension mismatch (" + std::to_string(u.size()) + " vs " + std::to_string(v.size()) + ")");
  double dot = 0, uu = 0, vv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0 || vv == 0) fail(ErrorKind::numeric, "cosine: zero-norm vector");
  // One square root keeps cos(v, v) and cos(v, 2^k v) exactly 1.
  const double prod = uu * vv;
  const double denom = std::isnormal(prod) ? std::sqrt(prod) : std::sqrt(uu) * std::sqrt(vv);
  return std::clamp(dot / denom, -1.0, 1.0);
}

struct WordTrajectory {
  std::string word;
  std::vector<std::vector<double>> vectors;
  std::vector<int> years;

  std::size_t size() const { return vectors.size(); }

  void validate() const {
    if (vectors.size() < 2) fail(ErrorKind::data, "trajectory '" + word + "': need ≥ 2 years");
    if (years.size() != vectors.size()) fail(ErrorKind::data, "trajectory '" + word + "': years/vectors length mismatch");
    for (std::size_t i = 1; i < years.size(); ++i)
      if (years[i] <= years[i - 1]) fail(ErrorKind::data, "trajectory '" + word + "': years must ascend");
    for (const auto& v : vectors) {
      if (v.size() != vectors.front().size()) fail(ErrorKind::data, "trajectory '" + word + "': ragged dimensions");
      if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0; }))
        fail(ErrorKind::numeric, "trajectory '" + word + "': zero vector");
    }
  }
};

/// Collects `word`'s row from every matrix of a series.
inline WordTrajectory trajectory(std::string_view word, std::span<const EmbeddingMatrix> series) {
  WordTrajectory t;
  t.word = std::string(word);
  for (const auto& m : series) {
    auto row = m.row(word);
    t.vectors.emplace_back(row.begin(), row.end());
    t.years.push_back(m.year);
  }
  return t;
}

inline double sd(const WordTrajectory& t) {
  t.validate();
  return cosine(t.vectors.front(), t.vectors.back());
}

inline double mts(const WordTrajectory& t) {
  t.validate();
  double sum = 0;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) sum += cosine(t.vectors[i], t.vectors[i + 1]);
  return sum / static_cast<double>(t.size() - 1);
}

inline double rsc(const WordTrajectory& t) {
  t.validate();
  double sum = 0;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) sum += 1.0 - cosine(t.vectors[i], t.vectors[i + 1]);
  return sum / static_cast<double>(t.size() - 1);
}

// ---------------------------------------------------------------------------
// Neighbourhoods

struct Neighbors {
  std::vector<std::string> words;  // best first
  bool short_list = false;         // fewer than k candidates existed
};

/// Top-k cosine neighbours of `word`, excluding itself. Candidates come from
/// `universe` when non-empty, else the whole vocabulary. Ties break
/// lexicographically.
inline Neighbors knn(std::string_view word, const EmbeddingMatrix& m, int k,
                     std::span<const std::string> universe = {}) {
  if (k < 1) fail(ErrorKind::config, "knn: k must be >= 1");
  const auto query = m.row(word);
  std::vector<std::pair<double, const std::string*>> scored;
  auto consider = [&](const std::string& cand, std::size_t row) {
    if (cand == word) return;
    scored.emplace_back(cosine(query, m.row(row)), &cand);
  };
  if (universe.empty()) {
    scored.reserve(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) consider(m.vocabulary.token(i), i);
  } else {
    scored.reserve(universe.size());
    for (const auto& cand : universe) {
      auto i = m.vocabulary.find(cand);
      if (!i) fail(ErrorKind::data, "knn: universe word '" + cand + "' not in vocabulary of " + std::to_string(m.year));
      consider(cand, *i);
    }
  }
  auto better = [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : *a.second < *b.second; };
  Neighbors out;
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), scored.size());
  out.short_list = take < static_cast<std::size_t>(k);
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(), better);
  for (std::size_t i = 0; i < take; ++i) out.words.push_back(*scored[i].second);
  return out;
}

/// Neighbour overlap between two years divided by k. When fewer than k
/// candidates exist the denominator is the number actually returned.
inline double lns(std::string_view word, const EmbeddingMatrix& m1, const EmbeddingMatrix& m2, int k = 10,
                  std::span<const std::string> universe = {}) {
  const auto a = knn(word, m1, k, universe);
  const auto b = knn(word, m2, k, universe);
  const std::unordered_set<std::string> in_a(a.words.begin(), a.words.end());
  std::size_t overlap = 0;
  for (const auto& w : b.words) overlap += in_a.count(w);
  const auto denom = std::min<std::size_t>(static_cast<std::size_t>(k), std::max(a.words.size(), b.words.size()));
  return denom ? static_cast<double>(overlap) / static_cast<double>(denom) : 0.0;
}

// ---------------------------------------------------------------------------
// Bootstrap

struct BootstrapOptions {
  int resamples = 1000;
  double confidence = 0.95;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct Interval {
  double mean = 0;
  double margin = 0;  // half-width of the percentile interval
  double lower = 0;
  double upper = 0;
};

/// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Mean of `values` with a percentile-bootstrap margin. Resample r draws
/// from its own stream derived from (seed, r), so any thread count yields
/// the same resampled means.
inline Interval bootstrap_ci(std::span<const double> values, const BootstrapOptions& options = {}) {
  if (values.empty()) fail(ErrorKind::data, "bootstrap: no values");
  if (options.resamples < 1) fail(ErrorKind::config, "bootstrap: resamples must be >= 1");
  if (!(options.confidence > 0 && options.confidence < 1)) fail(ErrorKind::config, "bootstrap: confidence must be in (0, 1)");

  const std::size_t n = values.size();
  double sum = 0;
  for (double v : values) sum += v;
  Interval out;
  out.mean = sum / static_cast<double>(n);

  std::vector<double> means(static_cast<std::size_t>(options.resamples));
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      SplitMix64 rng(derive_seed(options.seed, r));
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += values[rng.below(n)];
      means[r] = s / static_cast<double>(n);
    }
  };
  const auto total = means.size();
  const auto threads = static_cast<std::size_t>(std::max(1, std::min<int>(options.threads, options.resamples)));
  if (threads == 1) {
    run(0, total);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(run, total * t / threads, total * (t + 1) / threads);
    for (auto& th : pool) th.join();
  }
  std::sort(means.begin(), means.end());
  const double alpha = (1.0 - options.confidence) / 2.0;
  out.lower = quantile_sorted(means, alpha);
  out.upper = quantile_sorted(means, 1.0 - alpha);
  out.margin = std::max(0.0, (out.upper - out.lower) / 2.0);
  return out;
}

// ---------------------------------------------------------------------------
// Reports

enum class LnsMode { endpoints, mean_consecutive };

inline std::string_view to_string(LnsMode m) { return m == LnsMode::endpoints ? "endpoints" : "mean_consecutive"; }

inline LnsMode lns_mode_from_string(std::string_view s) {
  if (s == "endpoints") return LnsMode::endpoints;
  if (s == "mean_consecutive") return LnsMode::mean_consecutive;
  fail(ErrorKind::config, "unknown lns_mode '" + std::string(s) + "'");
}

/// Which words LNS ranks neighbours among.
enum class NeighborUniverse { automatic, vocabulary, keywords };

struct ReportOptions {
  int k = 10;
  LnsMode lns_mode = LnsMode::endpoints;
  NeighborUniverse universe = NeighborUniverse::automatic;
  BootstrapOptions bootstrap;
  std::string model_name = "model";
};

struct WordMetrics {
  std::string word;
  double sd = 0, mts = 0, rsc = 0, lns = 0;
};

inline constexpr std::array<std::string_view, 4> kMetricNames{"sd", "mts", "rsc", "lns"};

struct MetricReport {
  std::string model_name;
  int first_year = 0;
  int last_year = 0;
  int span_years = 0;
  int k = 0;            // effective k used for LNS
  int requested_k = 0;
  std::string universe;  // "vocabulary" or "keywords"
  LnsMode lns_mode = LnsMode::endpoints;
  double confidence = 0.95;
  std::vector<WordMetrics> per_word;
  std::map<std::string, Interval> aggregate;
  std::vector<CoverageGap> dropped;
  std::vector<std::string> warnings;

  const WordMetrics& word(std::string_view w) const {
    for (const auto& m : per_word)
      if (m.word == w) return m;
    fail(ErrorKind::data, "report has no word '" + std::string(w) + "'");
  }
};

inline double metric_value(const WordMetrics& m, std::string_view name) {
  if (name == "sd") return m.sd;
  if (name == "mts") return m.mts;
  if (name == "rsc") return m.rsc;
  return m.lns;
}

/// Scores every keyword present in all years of `series`.
inline MetricReport report(std::span<const EmbeddingMatrix> series, const KeywordSet& keywords,
                           const ReportOptions& options = {}) {
  if (series.size() < 2) fail(ErrorKind::data, "need ≥ 2 years, series has " + std::to_string(series.size()));
  if (options.k < 1) fail(ErrorKind::config, "k must be >= 1");
  for (std::size_t i = 1; i < series.size(); ++i) {
    if (series[i].year <= series[i - 1].year) fail(ErrorKind::data, "report: series years must ascend");
    if (series[i].dimension() != series[0].dimension()) fail(ErrorKind::data, "report: dimension changes within series");
  }

  MetricReport rep;
  rep.model_name = options.model_name;
  rep.first_year = series.front().year;
  rep.last_year = series.back().year;
  rep.span_years = rep.last_year - rep.first_year + 1;
  rep.requested_k = options.k;
  rep.lns_mode = options.lns_mode;
  rep.confidence = options.bootstrap.confidence;

  std::vector<std::string> words;
  for (const auto& kw : keywords.keywords()) {
    const auto tok = keyword_token(kw);
    bool everywhere = true;
    for (const auto& m : series) {
      if (!m.vocabulary.contains(tok)) {
        everywhere = false;
        rep.dropped.push_back({tok, m.year});
      }
    }
    if (everywhere) words.push_back(tok);
  }
  if (words.empty()) fail(ErrorKind::data, "no keyword is present in every year of the series");
  if (!rep.dropped.empty())
    rep.warnings.push_back(std::to_string(rep.dropped.size()) + " (keyword, year) coverage gaps; affected keywords dropped");

  bool use_vocab = options.universe == NeighborUniverse::vocabulary;
  if (options.universe == NeighborUniverse::automatic)
    use_vocab = std::all_of(series.begin(), series.end(), [](const auto& m) { return m.provenance == Provenance::static_trained; });
  rep.universe = use_vocab ? "vocabulary" : "keywords";
  std::size_t universe_size = words.size();
  if (use_vocab) {
    universe_size = series.front().rows();
    for (const auto& m : series) universe_size = std::min(universe_size, m.rows());
  }
  if (universe_size < 2) fail(ErrorKind::data, "neighbour universe has fewer than 2 words");
  rep.k = std::min(options.k, static_cast<int>(universe_size - 1));
  if (rep.k < options.k)
    rep.warnings.push_back("k reduced from " + std::to_string(options.k) + " to " + std::to_string(rep.k) +
                           " (neighbour universe: " + rep.universe + ", " + std::to_string(universe_size) + " words)");
  const std::span<const std::string> universe = use_vocab ? std::span<const std::string>{} : std::span<const std::string>(words);

  for (const auto& w : words) {
    const auto t = trajectory(w, series);
    WordMetrics wm;
    wm.word = w;
    wm.sd = sd(t);
    wm.mts = mts(t);
    wm.rsc = rsc(t);
    if (options.lns_mode == LnsMode::endpoints) {
      wm.lns = lns(w, series.front(), series.back(), rep.k, universe);
    } else {
      double s = 0;
      for (std::size_t i = 0; i + 1 < series.size(); ++i) s += lns(w, series[i], series[i + 1], rep.k, universe);
      wm.lns = s / static_cast<double>(series.size() - 1);
    }
    rep.per_word.push_back(std::move(wm));
  }

  for (auto name : kMetricNames) {
    std::vector<double> values;
    for (const auto& wm : rep.per_word) values.push_back(metric_value(wm, name));
    rep.aggregate[std::string(name)] = bootstrap_ci(values, options.bootstrap);
  }
  return rep;
}

inline nlohmann::ordered_json to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["model"] = r.model_name;
  j["first_year"] = r.first_year;
  j["last_year"] = r.last_year;
  j["span_years"] = r.span_years;
  j["k"] = r.k;
  j["requested_k"] = r.requested_k;
  j["neighbor_universe"] = r.universe;
  j["lns_mode"] = std::string(to_string(r.lns_mode));
  j["confidence"] = r.confidence;
  nlohmann::ordered_json agg = nlohmann::ordered_json::object();
  for (auto name : kMetricNames) {
    const auto& iv = r.aggregate.at(std::string(name));
    agg[std::string(name)] = {{"mean", iv.mean}, {"margin", iv.margin}, {"lower", iv.lower}, {"upper", iv.upper}};
  }
  j["aggregate"] = agg;
  nlohmann::ordered_json words = nlohmann::ordered_json::array();
  for (const auto& w : r.per_word)
    words.push_back({{"word", w.word}, {"sd", w.sd}, {"mts", w.mts}, {"rsc", w.rsc}, {"lns", w.lns}});
  j["per_word"] = words;
  nlohmann::ordered_json dropped = nlohmann::ordered_json::array();
  for (const auto& g : r.dropped) dropped.push_back({{"keyword", g.keyword}, {"year", g.year}});
  j["coverage_gaps"] = dropped;
  j["warnings"] = r.warnings;
  return j;
}

inline std::string format_interval(double value, double margin) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f ± %.3f", value, margin);
  return buf;
}

inline constexpr std::string_view kReportCsvHeader = "Time Span,Model,SD,MTS,RSC,LNS";

inline std::string csv_row(const MetricReport& r) {
  std::string row = std::to_string(r.span_years) + " years," + r.model_name;
  for (auto name : kMetricNames) {
    const auto& iv = r.aggregate.at(std::string(name));
    row += "," + format_interval(iv.mean, iv.margin);
  }
  return row;
}

inline std::string to_csv(std::span<const MetricReport> reports) {
  std::string out(kReportCsvHeader);
  out += '\n';
  for (const auto& r : reports) out += csv_row(r) + '\n';
  return out;
}

/// One parsed row of a "Time Span,Model,SD,MTS,RSC,LNS" table.
struct TableRow {
  std::string span;
  std::string model;
  std::array<std::pair<double, double>, 4> values;  // (value, margin) for SD, MTS, RSC, LNS
};

inline std::pair<double, double> parse_interval(std::string_view cell) {
  static constexpr std::string_view pm = "±";
  auto at = cell.find(pm);
  if (at == std::string_view::npos) fail(ErrorKind::data, "cell '" + std::string(cell) + "' is not 'value ± margin'");
  auto num = [&](std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) fail(ErrorKind::data, "bad number in cell '" + std::string(cell) + "'");
    return v;
  };
  return {num(cell.substr(0, at)), num(cell.substr(at + pm.size()))};
}

inline std::vector<TableRow> parse_table_csv(std::string_view text) {
  std::vector<TableRow> rows;
  std::size_t pos = 0;
  bool header = true;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (header) {
      if (line != kReportCsvHeader) fail(ErrorKind::data, "unexpected table header '" + std::string(line) + "'");
      header = false;
      continue;
    }
    std::vector<std::string_view> cells;
    std::size_t c = 0;
    while (true) {
      auto comma = line.find(',', c);
      cells.push_back(line.substr(c, comma == std::string_view::npos ? std::string_view::npos : comma - c));
      if (comma == std::string_view::npos) break;
      c = comma + 1;
    }
    if (cells.size() != 6) fail(ErrorKind::data, "table row must have 6 cells: '" + std::string(line) + "'");
    TableRow row;
    row.span = std::string(cells[0]);
    row.model = std::string(cells[1]);
    for (std::size_t i = 0; i < 4; ++i) row.values[i] = parse_interval(cells[i + 2]);
    rows.push_back(std::move(row));
  }
  if (header) fail(ErrorKind::data, "table is empty");
  return rows;
}

}  // namespace semstab
