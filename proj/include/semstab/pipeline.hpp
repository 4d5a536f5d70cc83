#pragma once

// Configuration, the end-to-end run, and the file-level operations behind
// each CLI subcommand. `run` is built from the same functions the
// subcommands call, so chaining the subcommands reproduces its reports.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <tomlplusplus/toml.hpp>

#include "semstab/align.hpp"
#include "semstab/common.hpp"
#include "semstab/corpus.hpp"
#include "semstab/embedding.hpp"
#include "semstab/metrics.hpp"
#include "semstab/sgns.hpp"
#include "semstab/store.hpp"
#include "semstab/synth.hpp"
#include "semstab/viz.hpp"

namespace semstab {

enum class SeriesKind { train, ingest };

inline std::string_view to_string(SeriesKind k) { return k == SeriesKind::train ? "train" : "ingest"; }

struct SeriesSpec {
  std::string name;
  SeriesKind kind = SeriesKind::train;
  std::filesystem::path manifest;  // ingest only
};

/// A span evaluated by `run`. `label` names the report files.
struct Window {
  YearRange years;
  std::string label;
};

inline std::string_view to_string(ZScoreMode m) { return m == ZScoreMode::per_dimension ? "per_dimension" : "whole_matrix"; }

inline ZScoreMode zscore_mode_from_string(std::string_view s) {
  if (s == "per_dimension") return ZScoreMode::per_dimension;
  if (s == "whole_matrix") return ZScoreMode::whole_matrix;
  fail(ErrorKind::config, "unknown zscore_mode '" + std::string(s) + "'");
}

inline std::string_view to_string(NeighborUniverse u) {
  switch (u) {
    case NeighborUniverse::automatic: return "automatic";
    case NeighborUniverse::vocabulary: return "vocabulary";
    case NeighborUniverse::keywords: return "keywords";
  }
  return "automatic";
}

inline NeighborUniverse universe_from_string(std::string_view s) {
  if (s == "automatic") return NeighborUniverse::automatic;
  if (s == "vocabulary") return NeighborUniverse::vocabulary;
  if (s == "keywords") return NeighborUniverse::keywords;
  fail(ErrorKind::config, "unknown neighbor_universe '" + std::string(s) + "'");
}

struct PipelineConfig {
  std::filesystem::path corpus_path;
  YearRange span;
  std::optional<int> base_year;  // first year of `span` when unset
  std::filesystem::path keyword_file;
  SgnsConfig sgns;
  std::uint64_t min_count = 5;
  int k = 10;
  LnsMode lns_mode = LnsMode::endpoints;
  NeighborUniverse universe = NeighborUniverse::automatic;
  BootstrapOptions bootstrap;
  std::vector<SeriesSpec> series{{"static", SeriesKind::train, {}}};
  // "5" = the last five years of `span`; "2004-2013" = explicit range.
  // Empty means the whole span.
  std::vector<std::string> spans;
  std::vector<std::string> bullseye_words;
  std::filesystem::path output_dir = "out";
  bool standardize = true;
  bool standardize_contextual = true;
  ZScoreMode zscore_mode = ZScoreMode::per_dimension;
  bool normalize_rows = false;
  bool deterministic = false;

  int effective_base_year() const { return base_year.value_or(span.first); }

  bool needs_corpus() const {
    return std::any_of(series.begin(), series.end(), [](const auto& s) { return s.kind == SeriesKind::train; });
  }

  std::vector<Window> windows() const {
    std::vector<Window> out;
    if (spans.empty()) {
      out.push_back({span, std::to_string(span.size())});
      return out;
    }
    for (const auto& s : spans) {
      if (s.find('-') == std::string::npos) {
        const auto len = parse_year_range(s).first;
        if (len < 2 || len > span.size())
          fail(ErrorKind::config, "span length " + s + " must lie in [2, " + std::to_string(span.size()) + "]");
        out.push_back({{span.last - len + 1, span.last}, std::to_string(len)});
      } else {
        auto r = parse_year_range(s);
        if (!span.contains(r.first) || !span.contains(r.last))
          fail(ErrorKind::config, "span " + s + " lies outside " + std::to_string(span.first) + "-" + std::to_string(span.last));
        if (r.size() < 2) fail(ErrorKind::config, "span " + s + " covers fewer than 2 years");
        out.push_back({r, s});
      }
    }
    return out;
  }

  void validate() const {
    if (span.first <= 0) fail(ErrorKind::config, "span is required");
    if (!span.contains(effective_base_year()))
      fail(ErrorKind::config, "base_year " + std::to_string(effective_base_year()) + " outside span " +
                                  std::to_string(span.first) + "-" + std::to_string(span.last));
    if (k < 1) fail(ErrorKind::config, "k must be >= 1");
    if (min_count < 1) fail(ErrorKind::config, "min_count must be >= 1");
    if (bootstrap.resamples < 1) fail(ErrorKind::config, "bootstrap.resamples must be >= 1");
    if (!(bootstrap.confidence > 0 && bootstrap.confidence < 1))
      fail(ErrorKind::config, "bootstrap.confidence must be in (0, 1)");
    if (keyword_file.empty()) fail(ErrorKind::config, "keyword_file is required");
    if (output_dir.empty()) fail(ErrorKind::config, "output_dir is required");
    if (series.empty()) fail(ErrorKind::config, "at least one series is required");
    std::set<std::string> names;
    for (const auto& s : series) {
      if (s.name.empty() || !std::all_of(s.name.begin(), s.name.end(), [](char c) {
            return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
          }))
        fail(ErrorKind::config, "series name '" + s.name + "' must be non-empty [A-Za-z0-9_.-]");
      if (!names.insert(s.name).second) fail(ErrorKind::config, "duplicate series name '" + s.name + "'");
      if (s.kind == SeriesKind::ingest) {
        if (s.manifest.empty()) fail(ErrorKind::config, "ingest series '" + s.name + "' needs a manifest");
        if (!std::filesystem::is_regular_file(s.manifest))
          fail(ErrorKind::config, "manifest of series '" + s.name + "' does not exist: " + s.manifest.string());
      }
    }
    if (needs_corpus()) {
      if (corpus_path.empty()) fail(ErrorKind::config, "corpus_path is required for train series");
      sgns.validate();
    }
    std::set<std::string> labels;
    for (const auto& w : windows())
      if (!labels.insert(w.label).second) fail(ErrorKind::config, "span " + w.label + " listed twice");
  }
};

// ---------------------------------------------------------------------------
// Config files

namespace detail {

inline std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return (base / p).lexically_normal();
}

/// Strict reader over a JSON object: every key must be consumed.
class Fields {
 public:
  Fields(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) fail(ErrorKind::config, where_ + ": expected a table");
  }

  template <class T, class Set>
  void read(const std::string& key, Set&& set) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    used_.insert(key);
    try {
      set(it->template get<T>());
    } catch (const nlohmann::json::exception&) {
      fail(ErrorKind::config, where_ + key + ": wrong type");
    }
  }

  const nlohmann::json* sub(const std::string& key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!used_.contains(key)) fail(ErrorKind::config, "unknown config key '" + where_ + key + "'");
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> used_;
};

}  // namespace detail

/// Builds a config from its JSON form. Relative paths resolve against `base_dir`.
inline PipelineConfig config_from_json(const nlohmann::json& root, const std::filesystem::path& base_dir = {}) {
  const nlohmann::json& j = root.is_object() && root.contains("config") ? root.at("config") : root;
  PipelineConfig c;
  detail::Fields f(j, "");
  f.read<std::string>("corpus_path", [&](auto v) { c.corpus_path = v; });
  f.read<std::string>("span", [&](auto v) { c.span = parse_year_range(v); });
  f.read<int>("base_year", [&](auto v) { c.base_year = v; });
  f.read<std::string>("keyword_file", [&](auto v) { c.keyword_file = v; });
  f.read<std::uint64_t>("min_count", [&](auto v) { c.min_count = v; });
  f.read<int>("k", [&](auto v) { c.k = v; });
  f.read<std::string>("lns_mode", [&](auto v) { c.lns_mode = lns_mode_from_string(v); });
  f.read<std::string>("neighbor_universe", [&](auto v) { c.universe = universe_from_string(v); });
  f.read<std::vector<std::string>>("bullseye_words", [&](auto v) { c.bullseye_words = v; });
  f.read<std::string>("output_dir", [&](auto v) { c.output_dir = v; });
  f.read<bool>("standardize", [&](auto v) { c.standardize = v; });
  f.read<bool>("standardize_contextual", [&](auto v) { c.standardize_contextual = v; });
  f.read<std::string>("zscore_mode", [&](auto v) { c.zscore_mode = zscore_mode_from_string(v); });
  f.read<bool>("normalize_rows", [&](auto v) { c.normalize_rows = v; });
  f.read<bool>("deterministic", [&](auto v) { c.deterministic = v; });
  if (const auto* spans = f.sub("spans")) {
    if (!spans->is_array()) fail(ErrorKind::config, "spans: expected an array");
    for (const auto& s : *spans) {
      if (s.is_number_integer()) c.spans.push_back(std::to_string(s.get<long long>()));
      else if (s.is_string()) c.spans.push_back(s.get<std::string>());
      else fail(ErrorKind::config, "spans: entries must be lengths or \"first-last\" ranges");
    }
  }
  if (const auto* s = f.sub("sgns")) {
    detail::Fields g(*s, "sgns.");
    g.read<int>("dimension", [&](auto v) { c.sgns.dimension = v; });
    g.read<int>("window", [&](auto v) { c.sgns.window = v; });
    g.read<int>("negatives", [&](auto v) { c.sgns.negatives = v; });
    g.read<int>("epochs", [&](auto v) { c.sgns.epochs = v; });
    g.read<double>("initial_learning_rate", [&](auto v) { c.sgns.initial_learning_rate = v; });
    g.read<double>("subsample_threshold", [&](auto v) { c.sgns.subsample_threshold = v; });
    g.read<std::uint64_t>("seed", [&](auto v) { c.sgns.seed = v; });
    g.read<int>("threads", [&](auto v) { c.sgns.threads = v; });
    g.finish();
  }
  if (const auto* b = f.sub("bootstrap")) {
    detail::Fields g(*b, "bootstrap.");
    g.read<int>("resamples", [&](auto v) { c.bootstrap.resamples = v; });
    g.read<double>("confidence", [&](auto v) { c.bootstrap.confidence = v; });
    g.read<std::uint64_t>("seed", [&](auto v) { c.bootstrap.seed = v; });
    g.read<int>("threads", [&](auto v) { c.bootstrap.threads = v; });
    g.finish();
  }
  if (const auto* series = f.sub("series")) {
    if (!series->is_array()) fail(ErrorKind::config, "series: expected an array of tables");
    c.series.clear();
    for (const auto& s : *series) {
      SeriesSpec spec;
      detail::Fields g(s, "series.");
      g.read<std::string>("name", [&](auto v) { spec.name = v; });
      g.read<std::string>("kind", [&](auto v) {
        if (v == "train") spec.kind = SeriesKind::train;
        else if (v == "ingest") spec.kind = SeriesKind::ingest;
        else fail(ErrorKind::config, "series.kind must be 'train' or 'ingest', got '" + v + "'");
      });
      g.read<std::string>("manifest", [&](auto v) { spec.manifest = v; });
      g.finish();
      spec.manifest = detail::resolve(spec.manifest, base_dir);
      c.series.push_back(std::move(spec));
    }
  }
  f.finish();
  c.corpus_path = detail::resolve(c.corpus_path, base_dir);
  c.keyword_file = detail::resolve(c.keyword_file, base_dir);
  c.output_dir = detail::resolve(c.output_dir, base_dir);
  return c;
}

inline nlohmann::ordered_json to_json(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["corpus_path"] = c.corpus_path.string();
  j["span"] = std::to_string(c.span.first) + "-" + std::to_string(c.span.last);
  j["base_year"] = c.effective_base_year();
  j["keyword_file"] = c.keyword_file.string();
  j["output_dir"] = c.output_dir.string();
  j["min_count"] = c.min_count;
  j["k"] = c.k;
  j["lns_mode"] = std::string(to_string(c.lns_mode));
  j["neighbor_universe"] = std::string(to_string(c.universe));
  auto spans = nlohmann::ordered_json::array();
  for (const auto& s : c.spans) {
    if (s.find('-') == std::string::npos) spans.push_back(parse_year_range(s).first);
    else spans.push_back(s);
  }
  j["spans"] = spans;
  j["bullseye_words"] = c.bullseye_words;
  j["standardize"] = c.standardize;
  j["standardize_contextual"] = c.standardize_contextual;
  j["zscore_mode"] = std::string(to_string(c.zscore_mode));
  j["normalize_rows"] = c.normalize_rows;
  j["deterministic"] = c.deterministic;
  j["sgns"] = {{"dimension", c.sgns.dimension},
               {"window", c.sgns.window},
               {"negatives", c.sgns.negatives},
               {"epochs", c.sgns.epochs},
               {"initial_learning_rate", c.sgns.initial_learning_rate},
               {"subsample_threshold", c.sgns.subsample_threshold},
               {"seed", c.sgns.seed},
               {"threads", c.sgns.threads}};
  j["bootstrap"] = {{"resamples", c.bootstrap.resamples},
                    {"confidence", c.bootstrap.confidence},
                    {"seed", c.bootstrap.seed},
                    {"threads", c.bootstrap.threads}};
  auto series = nlohmann::ordered_json::array();
  for (const auto& s : c.series) {
    nlohmann::ordered_json e;
    e["name"] = s.name;
    e["kind"] = std::string(to_string(s.kind));
    if (s.kind == SeriesKind::ingest) e["manifest"] = s.manifest.string();
    series.push_back(e);
  }
  j["series"] = series;
  return j;
}

/// TOML rendering of a JSON object: scalars and scalar arrays first, then
/// sub-tables, then arrays of tables.
inline std::string to_toml(const nlohmann::ordered_json& j, const std::string& prefix = {}) {
  auto is_table_array = [](const nlohmann::ordered_json& v) {
    return v.is_array() && !v.empty() && std::all_of(v.begin(), v.end(), [](const auto& e) { return e.is_object(); });
  };
  std::string out;
  for (const auto& [key, value] : j.items()) {
    if (value.is_object() || is_table_array(value)) continue;
    out += key + " = " + value.dump() + "\n";
  }
  for (const auto& [key, value] : j.items()) {
    if (!value.is_object()) continue;
    out += "\n[" + prefix + key + "]\n" + to_toml(value, prefix + key + ".");
  }
  for (const auto& [key, value] : j.items()) {
    if (!is_table_array(value)) continue;
    for (const auto& e : value) out += "\n[[" + prefix + key + "]]\n" + to_toml(e, prefix + key + ".");
  }
  return out;
}

inline nlohmann::json parse_toml(std::string_view text, const std::string& origin) {
  try {
    auto table = toml::parse(text, origin);
    std::ostringstream os;
    os << toml::json_formatter{table};
    return nlohmann::json::parse(os.str());
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << origin << ":" << e.source().begin.line << ":" << e.source().begin.column << ": " << e.description();
    fail(ErrorKind::config, msg.str());
  }
}

/// Reads a `.toml` or `.json` config (a run manifest also works).
inline PipelineConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) fail(ErrorKind::config, "config file not found: " + path.string());
  const auto text = read_file(path);
  nlohmann::json j;
  if (path.extension() == ".json") {
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorKind::config, path.string() + ": " + e.what());
    }
  } else {
    j = parse_toml(text, path.string());
  }
  return config_from_json(j, std::filesystem::absolute(path).parent_path());
}

/// Every default, as TOML.
inline std::string explain_config() {
  PipelineConfig c;
  auto j = to_json(c);
  j.erase("base_year");
  j["corpus_path"] = "corpus";
  j["keyword_file"] = "keywords.json";
  j["span"] = "2019-2023";
  std::string out =
      "# semstab pipeline configuration (defaults).\n"
      "# Required: span, keyword_file, and corpus_path when a series has kind = \"train\".\n"
      "# base_year defaults to the first year of span.\n"
      "# spans: lengths count back from the last year (3 = last three years);\n"
      "#   \"first-last\" strings select explicit ranges; empty = whole span.\n"
      "# Series kinds: \"train\" (SGNS per year) or \"ingest\" (needs manifest = \"path\").\n"
      "# Relative paths resolve against the config file's directory.\n\n";
  return out + to_toml(j);
}

// ---------------------------------------------------------------------------
// Stage operations

template <class F>
auto in_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    if (!e.stage().empty()) throw;
    throw Error(e.kind(), e.what(), stage);
  } catch (const std::filesystem::filesystem_error& e) {
    throw Error(ErrorKind::data, e.what(), stage);
  }
}

struct TrainedYear {
  int year = 0;
  std::size_t tokens = 0;
  std::size_t vocabulary = 0;
  double final_loss = 0;
};

/// One SGNS model per slice, each with its own vocabulary.
inline std::vector<EmbeddingMatrix> train_series(const std::vector<TimeSlice>& slices, std::uint64_t min_count,
                                                 const SgnsConfig& config, std::vector<TrainedYear>* log = nullptr,
                                                 std::ostream* progress = nullptr) {
  std::vector<EmbeddingMatrix> out;
  for (const auto& slice : slices) {
    auto vocab = build_vocab(slice, min_count);
    TrainStats stats;
    out.push_back(train(slice, vocab, config, log ? &stats : nullptr));
    if (log) {
      log->push_back({slice.year, static_cast<std::size_t>(slice.token_count), vocab.size(),
                      stats.epoch_loss.empty() ? 0.0 : stats.epoch_loss.back()});
    }
    if (progress) *progress << "trained " << slice.year << ": " << vocab.size() << " words\n";
  }
  return out;
}

struct PreparedSeries {
  std::vector<EmbeddingMatrix> matrices;
  std::vector<AlignmentMap> maps;  // empty for contextual series
};

/// Aligns a static series to `base_year` and standardizes it.
inline PreparedSeries align_and_standardize(std::vector<EmbeddingMatrix> matrices, int base_year, bool standardize,
                                            ZScoreMode mode, bool normalize_rows) {
  AlignOptions opts;
  opts.normalize_rows = normalize_rows;
  auto aligned = align_series(std::move(matrices), base_year, opts);
  PreparedSeries out;
  out.maps = std::move(aligned.maps);
  for (auto& m : aligned.matrices) out.matrices.push_back(standardize ? zscore(m, mode) : std::move(m));
  return out;
}

inline std::vector<EmbeddingMatrix> standardize_all(std::vector<EmbeddingMatrix> matrices, ZScoreMode mode) {
  for (auto& m : matrices) m = zscore(m, mode);
  return matrices;
}

/// The manifest restricted to `years`; every year must be present.
inline SeriesManifest restrict_manifest(SeriesManifest m, YearRange years) {
  SeriesManifest out = m;
  out.years.clear();
  out.files.clear();
  for (int y = years.first; y <= years.last; ++y) {
    if (!m.files.contains(y)) fail(ErrorKind::data, "series '" + m.name + "' has no data for " + std::to_string(y));
    out.years.push_back(y);
    out.files[y] = m.files.at(y);
  }
  return out;
}

inline std::vector<EmbeddingMatrix> select_years(const std::vector<EmbeddingMatrix>& series, YearRange years) {
  std::vector<EmbeddingMatrix> out;
  for (const auto& m : series)
    if (years.contains(m.year)) out.push_back(m);
  return out;
}

inline nlohmann::ordered_json to_json(const AlignmentMap& m) {
  nlohmann::ordered_json j;
  j["year"] = m.source_year;
  j["base_year"] = m.base_year;
  j["shared"] = m.shared_size;
  j["residual"] = m.residual;
  j["unaligned_residual"] = m.unaligned_residual;
  if (m.warning) j["warning"] = *m.warning;
  return j;
}

inline void write_report(const MetricReport& r, const std::filesystem::path& stem) {
  auto json = stem;
  json += ".json";
  auto csv = stem;
  csv += ".csv";
  write_text(json, to_json(r).dump(2) + "\n");
  write_text(csv, to_csv(std::span<const MetricReport>(&r, 1)));
}

/// Words of `words` present in every matrix; the rest are returned in `missing`.
inline std::vector<std::string> present_everywhere(const std::vector<std::string>& words,
                                                   const std::vector<EmbeddingMatrix>& series,
                                                   std::vector<std::string>* missing = nullptr) {
  std::vector<std::string> out;
  for (const auto& w : words) {
    const auto tok = keyword_token(w);
    if (std::all_of(series.begin(), series.end(), [&](const auto& m) { return m.vocabulary.contains(tok); }))
      out.push_back(tok);
    else if (missing)
      missing->push_back(w);
  }
  return out;
}

// ---------------------------------------------------------------------------
// run

struct RunResult {
  std::filesystem::path output_dir;
  std::vector<std::string> files;  // relative to output_dir, sorted
  std::vector<MetricReport> reports;
  std::vector<std::string> warnings;
};

/// Executes the configured pipeline. Outputs are built in a staging
/// directory and moved into `output_dir` only when every stage succeeded.
inline RunResult run(PipelineConfig config, std::ostream* progress = nullptr) {
  in_stage("config", [&] { config.validate(); });
  if (config.deterministic) {
    config.sgns.threads = 1;
    config.bootstrap.threads = 1;
  }
  const auto windows = config.windows();
  const int base_year = config.effective_base_year();
  namespace fs = std::filesystem;

  const fs::path out_dir = config.output_dir;
  const bool created_out = !fs::exists(out_dir);
  const fs::path staging = out_dir / ".staging";
  auto cleanup = [&] {
    std::error_code ec;
    fs::remove_all(staging, ec);
    if (created_out && fs::is_empty(out_dir, ec)) fs::remove(out_dir, ec);
  };

  RunResult result;
  result.output_dir = out_dir;
  try {
    in_stage("output", [&] {
      fs::remove_all(staging);
      fs::create_directories(staging);
    });
    const auto keywords = in_stage("keywords", [&] { return load_keywords(config.keyword_file); });

    std::vector<TimeSlice> slices;
    if (config.needs_corpus()) slices = in_stage("corpus", [&] { return load_slices(config.corpus_path, config.span); });

    nlohmann::ordered_json series_log = nlohmann::ordered_json::array();
    std::vector<std::pair<const SeriesSpec*, std::vector<EmbeddingMatrix>>> prepared;
    for (const auto& spec : config.series) {
      nlohmann::ordered_json entry;
      entry["name"] = spec.name;
      entry["kind"] = std::string(to_string(spec.kind));
      std::vector<EmbeddingMatrix> matrices;
      if (spec.kind == SeriesKind::train) {
        std::vector<TrainedYear> log;
        auto trained = in_stage("train:" + spec.name, [&] {
          auto t = train_series(slices, config.min_count, config.sgns, &log, progress);
          write_series(t, spec.name, staging / "series" / spec.name);
          return t;
        });
        auto training = nlohmann::ordered_json::array();
        for (const auto& t : log)
          training.push_back({{"year", t.year}, {"tokens", t.tokens}, {"vocabulary", t.vocabulary}, {"final_loss", t.final_loss}});
        entry["training"] = training;
        auto prep = in_stage("align:" + spec.name, [&] {
          return align_and_standardize(std::move(trained), base_year, config.standardize, config.zscore_mode,
                                       config.normalize_rows);
        });
        auto alignment = nlohmann::ordered_json::array();
        for (const auto& m : prep.maps) {
          alignment.push_back(to_json(m));
          if (m.warning) result.warnings.push_back(spec.name + " " + std::to_string(m.source_year) + ": " + *m.warning);
        }
        entry["shared_vocabulary"] = prep.matrices.front().rows();
        entry["alignment"] = alignment;
        matrices = std::move(prep.matrices);
      } else {
        auto averaged = in_stage("ingest:" + spec.name, [&] {
          return ingest_series(restrict_manifest(load_manifest(spec.manifest), config.span), keywords);
        });
        auto gaps = nlohmann::ordered_json::array();
        for (const auto& g : averaged.gaps) gaps.push_back({{"keyword", g.keyword}, {"year", g.year}});
        entry["coverage_gaps"] = gaps;
        if (!averaged.gaps.empty())
          result.warnings.push_back(spec.name + ": " + std::to_string(averaged.gaps.size()) + " coverage gaps");
        matrices = in_stage("standardize:" + spec.name, [&] {
          return config.standardize_contextual ? standardize_all(std::move(averaged.matrices), config.zscore_mode)
                                               : std::move(averaged.matrices);
        });
      }
      series_log.push_back(entry);
      prepared.emplace_back(&spec, std::move(matrices));
    }

    std::string comparison = std::string(kReportCsvHeader) + "\n";
    nlohmann::ordered_json report_log = nlohmann::ordered_json::array();
    for (const auto& w : windows) {
      for (const auto& [spec, matrices] : prepared) {
        ReportOptions opts;
        opts.k = config.k;
        opts.lns_mode = config.lns_mode;
        opts.universe = config.universe;
        opts.bootstrap = config.bootstrap;
        opts.model_name = spec->name;
        const auto stem = "report_" + spec->name + "_" + w.label;
        auto rep = in_stage("metrics:" + spec->name + ":" + w.label, [&, &matrices = matrices] {
          auto r = report(select_years(matrices, w.years), keywords, opts);
          write_report(r, staging / stem);
          return r;
        });
        for (const auto& warn : rep.warnings) result.warnings.push_back(stem + ": " + warn);
        comparison += csv_row(rep) + "\n";
        report_log.push_back({{"series", spec->name}, {"span", w.label}, {"first_year", rep.first_year},
                              {"last_year", rep.last_year}, {"k", rep.k}, {"universe", rep.universe},
                              {"words", rep.per_word.size()}, {"dropped", rep.dropped.size()}});
        result.reports.push_back(std::move(rep));
      }
      std::set<std::string> universes;
      std::string detail_text;
      for (auto it = result.reports.end() - static_cast<std::ptrdiff_t>(prepared.size()); it != result.reports.end(); ++it) {
        universes.insert(it->universe);
        detail_text += (detail_text.empty() ? "" : ", ") + it->model_name + "=" + it->universe + " (k=" + std::to_string(it->k) + ")";
      }
      if (universes.size() > 1)
        result.warnings.push_back("span " + w.label + ": LNS neighbour universes differ across series: " + detail_text);
    }
    in_stage("report", [&] { write_text(staging / "comparison.csv", comparison); });

    for (const auto& [spec, matrices] : prepared) {
      std::vector<std::string> missing;
      const auto words = present_everywhere(config.bullseye_words, matrices, &missing);
      for (const auto& m : missing)
        result.warnings.push_back("bullseye " + spec->name + ": '" + m + "' missing from some year; skipped");
      in_stage("bullseye:" + spec->name, [&, &matrices = matrices] {
        for (const auto& word : words) {
          auto frame = bullseye(trajectory(word, matrices), base_year);
          render(frame, staging / ("bullseye_" + spec->name + "_" + word));
        }
      });
    }

    nlohmann::ordered_json manifest;
    auto effective = to_json(config);
    effective["corpus_path"] = config.corpus_path.empty() ? "" : fs::absolute(config.corpus_path).string();
    effective["keyword_file"] = fs::absolute(config.keyword_file).string();
    effective["output_dir"] = fs::absolute(config.output_dir).string();
    for (auto& s : effective["series"])
      if (s.contains("manifest")) s["manifest"] = fs::absolute(s["manifest"].get<std::string>()).string();
    manifest["config"] = effective;
    manifest["seeds"] = {{"sgns", config.sgns.seed}, {"bootstrap", config.bootstrap.seed}};
    manifest["windows"] = nlohmann::ordered_json::array();
    for (const auto& w : windows)
      manifest["windows"].push_back({{"label", w.label}, {"first_year", w.years.first}, {"last_year", w.years.last}});
    manifest["series"] = series_log;
    manifest["reports"] = report_log;
    manifest["warnings"] = result.warnings;
    in_stage("manifest", [&] { write_text(staging / "run_manifest.json", manifest.dump(2) + "\n"); });

    in_stage("output", [&] {
      for (const auto& entry : fs::recursive_directory_iterator(staging))
        if (entry.is_regular_file()) result.files.push_back(fs::relative(entry.path(), staging).generic_string());
      std::sort(result.files.begin(), result.files.end());
      for (const auto& entry : fs::directory_iterator(staging)) {
        const auto dest = out_dir / entry.path().filename();
        fs::remove_all(dest);
        fs::rename(entry.path(), dest);
      }
      fs::remove_all(staging);
    });
  } catch (...) {
    cleanup();
    throw;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Synthetic workspaces

struct SynthJob {
  DriftSpec spec;
  YearRange years;
  std::optional<OccurrenceModel> contextual;  // also write an ingest series
  SgnsConfig sgns;
  std::uint64_t min_count = 5;
};

/// Writes `corpus/`, `keywords.json`, `expected_ranking.json`, optionally a
/// `contextual/` occurrence series, and a `pipeline.toml` that runs on them.
inline PipelineConfig write_synthetic(const SynthJob& job, const std::filesystem::path& dir) {
  const auto slices = generate(job.spec, job.years);
  const auto keywords = job.spec.keyword_set();
  std::filesystem::create_directories(dir);
  write_slices(dir / "corpus", slices);
  write_keywords(dir / "keywords.json", keywords);
  nlohmann::ordered_json ranking;
  ranking["expected_ranking"] = expected_ranking(job.spec);
  write_text(dir / "expected_ranking.json", ranking.dump(2) + "\n");

  PipelineConfig c;
  c.corpus_path = "corpus";
  c.keyword_file = "keywords.json";
  c.output_dir = "results";
  c.span = job.years;
  c.base_year = job.years.first;
  c.sgns = job.sgns;
  c.min_count = job.min_count;
  c.series = {{"static", SeriesKind::train, {}}};
  for (const auto& t : job.spec.targets) c.bullseye_words.push_back(t.word);
  if (job.contextual) {
    write_occurrence_series(slices, keywords, *job.contextual, "contextual", dir / "contextual");
    c.series.push_back({"contextual", SeriesKind::ingest, "contextual/manifest.json"});
  }
  write_text(dir / "pipeline.toml", to_toml(to_json(c)));
  return config_from_json(nlohmann::json::parse(to_json(c).dump()), std::filesystem::absolute(dir));
}

}  // namespace semstab
