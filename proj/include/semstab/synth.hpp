#pragma once

// Synthetic corpora with a known drift schedule.
//
// Every document is a run of short segments, each 2w+1 tokens long:
//   probe      a tracked word flanked by w context tokens on each side.
//              Planted words draw their contexts from sense pool A or B,
//              choosing B with the year's mixture probability; control words
//              draw from a fixed background topic.
//   passage    tokens from one sense pool, so pool words keep a stable
//              meaning of their own in every year.
//   background tokens from one topic of a Zipf-distributed vocabulary.
// The segment mix, vocabularies and topic structure are identical across
// years; only the planted words' mixture changes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "semstab/common.hpp"
#include "semstab/corpus.hpp"
#include "semstab/sgns.hpp"
#include "semstab/store.hpp"

namespace semstab {

struct PlantedWord {
  std::string word;
  std::map<int, double> schedule;  // year -> P(context drawn from pool B)
};

enum class ScheduleKind { no_drift, planted_drift, irregular };

inline ScheduleKind classify(const std::map<int, double>& schedule) {
  if (schedule.empty()) return ScheduleKind::no_drift;
  bool up = true, down = true, constant = true;
  double prev = schedule.begin()->second;
  for (const auto& [year, p] : schedule) {
    if (p != prev) constant = false;
    if (p < prev) up = false;
    if (p > prev) down = false;
    prev = p;
  }
  if (constant) return ScheduleKind::no_drift;
  return up || down ? ScheduleKind::planted_drift : ScheduleKind::irregular;
}

inline std::vector<std::string> numbered_tokens(const std::string& prefix, int count, int width) {
  std::vector<std::string> out;
  for (int i = 0; i < count; ++i) {
    auto n = std::to_string(i);
    out.push_back(prefix + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(n.size()))), '0') + n);
  }
  return out;
}

struct DriftSpec {
  std::vector<PlantedWord> targets;
  std::vector<std::string> sense_a_contexts = numbered_tokens("alpha", 20, 2);
  std::vector<std::string> sense_b_contexts = numbered_tokens("beta", 20, 2);
  int background_vocab_size = 1000;
  int background_topics = 20;
  int control_words = 24;
  int documents_per_year = 2000;
  std::map<int, int> documents_override;  // year -> documents, for unbalanced slices
  int tokens_per_document = 100;
  int context_window = 2;
  double zipf_exponent = 1.0;
  double probe_rate = 0.25;
  double passage_rate = 0.15;
  std::uint64_t seed = 1;

  /// One target whose mixture rises linearly from 0 to 1 across `years`.
  static DriftSpec planted(YearRange years, std::uint64_t seed, std::string target = "target") {
    DriftSpec s;
    s.seed = seed;
    PlantedWord w{std::move(target), {}};
    for (int y = years.first; y <= years.last; ++y)
      w.schedule[y] = years.size() == 1 ? 0.0 : static_cast<double>(y - years.first) / (years.size() - 1);
    s.targets.push_back(std::move(w));
    return s;
  }

  /// Same layout with the target's mixture held at zero.
  static DriftSpec no_drift(YearRange years, std::uint64_t seed, std::string target = "target") {
    DriftSpec s;
    s.seed = seed;
    PlantedWord w{std::move(target), {}};
    for (int y = years.first; y <= years.last; ++y) w.schedule[y] = 0.0;
    s.targets.push_back(std::move(w));
    return s;
  }

  std::vector<std::string> background_tokens() const { return numbered_tokens("bg", background_vocab_size, 4); }
  std::vector<std::string> control_tokens() const { return numbered_tokens("ctrl", control_words, 2); }

  std::vector<std::string> tracked_words() const {
    std::vector<std::string> out;
    for (const auto& t : targets) out.push_back(t.word);
    for (auto& c : control_tokens()) out.push_back(std::move(c));
    return out;
  }

  KeywordSet keyword_set() const {
    std::vector<KeywordSet::Category> cats;
    std::vector<std::string> planted;
    for (const auto& t : targets) planted.push_back(t.word);
    if (!planted.empty()) cats.emplace_back("planted", planted);
    if (control_words > 0) cats.emplace_back("control", control_tokens());
    return KeywordSet(std::move(cats));
  }

  void validate(YearRange years) const {
    if (sense_a_contexts.empty() || sense_b_contexts.empty()) fail(ErrorKind::config, "synth: context pools must be non-empty");
    std::set<std::string> seen;
    for (const auto& t : sense_a_contexts)
      if (!seen.insert(t).second) fail(ErrorKind::config, "synth: duplicate token '" + t + "' in pool A");
    for (const auto& t : sense_b_contexts)
      if (!seen.insert(t).second) fail(ErrorKind::config, "synth: context pools overlap on '" + t + "'");
    if (background_vocab_size < 1 || background_topics < 1 || background_topics > background_vocab_size)
      fail(ErrorKind::config, "synth: need 1 <= background_topics <= background_vocab_size");
    if (control_words < 0) fail(ErrorKind::config, "synth: control_words must be >= 0");
    if (documents_per_year < 1 || tokens_per_document < 1 || context_window < 1)
      fail(ErrorKind::config, "synth: documents_per_year, tokens_per_document and context_window must be positive");
    if (!(probe_rate >= 0 && passage_rate >= 0 && probe_rate + passage_rate <= 1))
      fail(ErrorKind::config, "synth: probe_rate + passage_rate must lie in [0, 1]");
    if (targets.empty() && control_words == 0) fail(ErrorKind::config, "synth: nothing to track");
    for (const auto& b : background_tokens()) seen.insert(b);
    for (const auto& c : control_tokens())
      if (!seen.insert(c).second) fail(ErrorKind::config, "synth: token '" + c + "' used twice");
    for (const auto& t : targets) {
      if (!valid_synth_token(t.word)) fail(ErrorKind::config, "synth: bad target token '" + t.word + "'");
      if (!seen.insert(t.word).second) fail(ErrorKind::config, "synth: target '" + t.word + "' collides with another token");
      for (int y = years.first; y <= years.last; ++y) {
        auto it = t.schedule.find(y);
        if (it == t.schedule.end())
          fail(ErrorKind::config, "synth: schedule of '" + t.word + "' undefined for " + std::to_string(y));
        if (!(it->second >= 0 && it->second <= 1))
          fail(ErrorKind::config, "synth: schedule of '" + t.word + "' outside [0, 1] in " + std::to_string(y));
      }
    }
  }

 private:
  static bool valid_synth_token(const std::string& t) {
    return !t.empty() && std::none_of(t.begin(), t.end(), [](char c) { return c == ' ' || c == '\t' || c == '\n'; });
  }
};

/// Combines the tracked words of two specs; layout parameters come from `a`.
inline DriftSpec merge(DriftSpec a, const DriftSpec& b) {
  a.targets.insert(a.targets.end(), b.targets.begin(), b.targets.end());
  return a;
}

/// Oracle ordering: the planted word should show the most change (highest
/// RSC, lowest SD). Empty when nothing drifts.
inline std::vector<std::string> expected_ranking(const DriftSpec& spec) {
  std::vector<const PlantedWord*> drifting;
  for (const auto& t : spec.targets)
    if (classify(t.schedule) != ScheduleKind::no_drift) drifting.push_back(&t);
  if (drifting.empty()) return {};
  if (drifting.size() > 1) fail(ErrorKind::config, "expected_ranking: exactly one planted word required, found " + std::to_string(drifting.size()));
  std::vector<std::string> out{drifting.front()->word};
  for (const auto& w : spec.tracked_words())
    if (w != out.front()) out.push_back(w);
  return out;
}

/// Deterministic corpus for every year of `years`.
inline std::vector<TimeSlice> generate(const DriftSpec& spec, YearRange years) {
  spec.validate(years);
  const auto background = spec.background_tokens();
  const auto controls = spec.control_tokens();
  const int topics = spec.background_topics;
  const int w = spec.context_window;

  // Topic t owns ranks t, t+T, t+2T, ... with Zipf weights on the global rank.
  std::vector<std::vector<std::uint32_t>> topic_words(static_cast<std::size_t>(topics));
  std::vector<std::vector<double>> topic_weights(static_cast<std::size_t>(topics));
  for (int r = 0; r < spec.background_vocab_size; ++r) {
    topic_words[static_cast<std::size_t>(r % topics)].push_back(static_cast<std::uint32_t>(r));
    topic_weights[static_cast<std::size_t>(r % topics)].push_back(1.0 / std::pow(r + 1.0, spec.zipf_exponent));
  }
  std::vector<AliasTable> topic_tables;
  for (const auto& weights : topic_weights) topic_tables.emplace_back(weights);

  const std::size_t tracked = spec.targets.size() + controls.size();

  std::vector<TimeSlice> out;
  for (int year = years.first; year <= years.last; ++year) {
    SplitMix64 rng(derive_seed(spec.seed, static_cast<std::uint64_t>(year)));
    auto from_topic = [&](int t) -> const std::string& {
      const auto& words = topic_words[static_cast<std::size_t>(t)];
      return background[words[topic_tables[static_cast<std::size_t>(t)].sample(rng)]];
    };
    auto from_pool = [&](const std::vector<std::string>& pool) -> const std::string& {
      return pool[rng.below(pool.size())];
    };

    const auto ov = spec.documents_override.find(year);
    const int docs = ov == spec.documents_override.end() ? spec.documents_per_year : ov->second;
    std::vector<std::vector<std::string>> documents;
    documents.reserve(static_cast<std::size_t>(docs));
    for (int d = 0; d < docs; ++d) {
      std::vector<std::string> doc;
      doc.reserve(static_cast<std::size_t>(spec.tokens_per_document + 2 * w + 1));
      while (static_cast<int>(doc.size()) < spec.tokens_per_document) {
        const double u = rng.uniform();
        if (u < spec.probe_rate && tracked > 0) {
          const auto which = rng.below(tracked);
          if (which < spec.targets.size()) {
            const auto& target = spec.targets[which];
            const bool sense_b = rng.uniform() < target.schedule.at(year);
            const auto& pool = sense_b ? spec.sense_b_contexts : spec.sense_a_contexts;
            for (int i = 0; i < w; ++i) doc.push_back(from_pool(pool));
            doc.push_back(target.word);
            for (int i = 0; i < w; ++i) doc.push_back(from_pool(pool));
          } else {
            const auto c = which - spec.targets.size();
            const int topic = static_cast<int>(c % static_cast<std::size_t>(topics));
            for (int i = 0; i < w; ++i) doc.push_back(from_topic(topic));
            doc.push_back(controls[c]);
            for (int i = 0; i < w; ++i) doc.push_back(from_topic(topic));
          }
        } else if (u < spec.probe_rate + spec.passage_rate) {
          const auto& pool = rng.uniform() < 0.5 ? spec.sense_a_contexts : spec.sense_b_contexts;
          for (int i = 0; i < 2 * w + 1; ++i) doc.push_back(from_pool(pool));
        } else {
          const int topic = static_cast<int>(rng.below(static_cast<std::uint64_t>(topics)));
          for (int i = 0; i < 2 * w + 1; ++i) doc.push_back(from_topic(topic));
        }
      }
      doc.resize(static_cast<std::size_t>(spec.tokens_per_document));
      documents.push_back(std::move(doc));
    }
    out.push_back(make_slice(year, std::move(documents)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Contextual stand-in

/// Toy contextual encoder used to build ingest-style series from a synthetic
/// corpus. Every token has a fixed unit vector derived from its name; an
/// occurrence vector mixes the keyword's own vector with the mean of its
/// window's vectors, plus Gaussian noise.
struct OccurrenceModel {
  int dimension = 32;
  int window = 2;
  double context_weight = 0.3;
  double noise = 0.05;
  std::uint64_t seed = 7;

  void validate() const {
    if (dimension < 1 || window < 0) fail(ErrorKind::config, "occurrence model: dimension >= 1 and window >= 0 required");
    if (!(context_weight >= 0 && context_weight <= 1)) fail(ErrorKind::config, "occurrence model: context_weight must lie in [0, 1]");
    if (!(noise >= 0)) fail(ErrorKind::config, "occurrence model: noise must be >= 0");
  }
};

namespace detail {

inline double gaussian(SplitMix64& rng) {
  double u = rng.uniform();
  while (u <= 0) u = rng.uniform();
  return std::sqrt(-2 * std::log(u)) * std::cos(2 * std::numbers::pi * rng.uniform());
}

inline Eigen::VectorXd token_direction(const std::string& token, const OccurrenceModel& model) {
  SplitMix64 rng(hash_string(token, model.seed));
  Eigen::VectorXd v(model.dimension);
  for (int i = 0; i < model.dimension; ++i) v(i) = gaussian(rng);
  return v.normalized();
}

}  // namespace detail

/// One batch per keyword that occurs in the slice, in keyword-set order.
inline std::vector<OccurrenceBatch> simulate_occurrences(const TimeSlice& slice, const KeywordSet& keywords,
                                                         const OccurrenceModel& model) {
  model.validate();
  std::map<std::string, std::vector<Eigen::VectorXd>> found;
  std::map<std::string, Eigen::VectorXd> cache;
  auto direction = [&](const std::string& t) -> const Eigen::VectorXd& {
    auto it = cache.find(t);
    if (it == cache.end()) it = cache.emplace(t, detail::token_direction(t, model)).first;
    return it->second;
  };
  std::set<std::string> wanted;
  for (const auto& kw : keywords.keywords()) wanted.insert(keyword_token(kw));

  SplitMix64 rng(derive_seed(model.seed, static_cast<std::uint64_t>(slice.year)));
  for (const auto& doc : slice.documents) {
    const auto n = static_cast<std::ptrdiff_t>(doc.size());
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      if (!wanted.contains(doc[static_cast<std::size_t>(i)])) continue;
      Eigen::VectorXd ctx = Eigen::VectorXd::Zero(model.dimension);
      int count = 0;
      for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, i - model.window); j <= std::min(n - 1, i + model.window); ++j) {
        if (j == i) continue;
        ctx += direction(doc[static_cast<std::size_t>(j)]);
        ++count;
      }
      Eigen::VectorXd v = (1 - model.context_weight) * direction(doc[static_cast<std::size_t>(i)]);
      if (count > 0) v += model.context_weight * ctx / count;
      for (int d = 0; d < model.dimension; ++d) v(d) += model.noise * detail::gaussian(rng);
      found[doc[static_cast<std::size_t>(i)]].push_back(std::move(v));
    }
  }

  std::vector<OccurrenceBatch> out;
  for (const auto& kw : keywords.keywords()) {
    auto it = found.find(keyword_token(kw));
    if (it == found.end()) continue;
    OccurrenceBatch b;
    b.keyword = it->first;
    b.year = slice.year;
    b.vectors.resize(static_cast<Eigen::Index>(it->second.size()), model.dimension);
    for (std::size_t r = 0; r < it->second.size(); ++r) b.vectors.row(static_cast<Eigen::Index>(r)) = it->second[r].transpose();
    out.push_back(std::move(b));
  }
  return out;
}

/// Writes `<dir>/<year>.occ` occurrence files and a contextual manifest.
inline SeriesManifest write_occurrence_series(const std::vector<TimeSlice>& slices, const KeywordSet& keywords,
                                              const OccurrenceModel& model, const std::string& name,
                                              const std::filesystem::path& dir) {
  if (slices.empty()) fail(ErrorKind::data, "no slices to encode");
  SeriesManifest m;
  m.name = name;
  m.provenance = Provenance::contextual_ingested;
  m.dimension = model.dimension;
  m.directory = dir;
  for (const auto& slice : slices) {
    const auto rel = std::to_string(slice.year) + ".occ";
    const auto batches = simulate_occurrences(slice, keywords, model);
    write_occurrences(batches, dir / rel);
    for (const auto& b : batches) m.occurrence_counts[slice.year][b.keyword] = static_cast<std::size_t>(b.vectors.rows());
    m.years.push_back(slice.year);
    m.files[slice.year] = rel;
  }
  write_manifest(m, dir / "manifest.json");
  return m;
}

}  // namespace semstab
