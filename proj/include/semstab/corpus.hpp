#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "semstab/common.hpp"

namespace semstab {

/// One year of pre-tokenized text.
struct TimeSlice {
  int year = 0;
  std::vector<std::vector<std::string>> documents;
  std::uint64_t token_count = 0;

  bool operator==(const TimeSlice&) const = default;
};

/// Builds a slice from raw documents, dropping empty ones.
inline TimeSlice make_slice(int year, std::vector<std::vector<std::string>> documents) {
  TimeSlice slice;
  slice.year = year;
  for (auto& doc : documents) {
    if (doc.empty()) continue;
    slice.token_count += doc.size();
    slice.documents.push_back(std::move(doc));
  }
  return slice;
}

/// Ordered token list with an index and occurrence counts.
///
/// Token order is whatever the factory established; `from_counts` uses
/// descending count with lexicographic tie-break, matrices read from disk
/// keep file order.
class Vocabulary {
 public:
  Vocabulary() = default;

  /// Tokens occurring at least `min_count` times, sorted by (count desc, token asc).
  static Vocabulary from_counts(const std::unordered_map<std::string, std::uint64_t>& counts,
                                std::uint64_t min_count) {
    std::vector<std::pair<std::string, std::uint64_t>> kept;
    for (const auto& [token, count] : counts)
      if (count >= min_count) kept.emplace_back(token, count);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    Vocabulary v;
    for (auto& [token, count] : kept) v.push_back(std::move(token), count);
    return v;
  }

  /// Keeps the given order. Counts default to zero (unknown).
  static Vocabulary from_tokens(std::vector<std::string> tokens,
                                std::vector<std::uint64_t> counts = {}) {
    if (!counts.empty() && counts.size() != tokens.size())
      fail(ErrorKind::data, "vocabulary token/count length mismatch");
    Vocabulary v;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (v.contains(tokens[i])) fail(ErrorKind::data, "duplicate token '" + tokens[i] + "'");
      v.push_back(std::move(tokens[i]), counts.empty() ? 0 : counts[i]);
    }
    return v;
  }

  std::size_t size() const { return tokens_.size(); }
  bool empty() const { return tokens_.empty(); }

  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }
  const std::string& token(std::size_t i) const { return tokens_[i]; }
  std::uint64_t count_at(std::size_t i) const { return counts_[i]; }

  std::optional<std::size_t> find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  bool contains(std::string_view token) const { return find(token).has_value(); }

  std::uint64_t count(std::string_view token) const {
    auto i = find(token);
    return i ? counts_[*i] : 0;
  }

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_ && counts_ == other.counts_;
  }

 private:
  void push_back(std::string token, std::uint64_t count) {
    index_.emplace(token, tokens_.size());
    tokens_.push_back(std::move(token));
    counts_.push_back(count);
  }

  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Returns the offset of the first byte that breaks UTF-8 well-formedness.
inline std::optional<std::size_t> find_invalid_utf8(std::string_view bytes) {
  std::size_t i = 0;
  const std::size_t n = bytes.size();
  auto cont = [&](std::size_t j) {
    return j < n && (static_cast<unsigned char>(bytes[j]) & 0xC0) == 0x80;
  };
  while (i < n) {
    auto c = static_cast<unsigned char>(bytes[i]);
    if (c < 0x80) {
      ++i;
      continue;
    }
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return i;
    }
    for (std::size_t k = 1; k < len; ++k) {
      if (!cont(i + k)) return i;
      cp = (cp << 6) | (static_cast<unsigned char>(bytes[i + k]) & 0x3F);
    }
    // overlong forms, surrogates, out of range
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF)
      return i;
    i += len;
  }
  return std::nullopt;
}

/// Splits on ASCII whitespace runs.
inline std::vector<std::string> split_tokens(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; };
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_space(line[j])) ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::data, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Parses one `<year>.txt` body: one document per line.
inline TimeSlice parse_slice(int year, std::string_view text, const std::string& origin = {}) {
  if (auto bad = find_invalid_utf8(text))
    fail(ErrorKind::data, "invalid UTF-8 in " + (origin.empty() ? std::to_string(year) : origin) +
                              " at byte offset " + std::to_string(*bad));
  std::vector<std::vector<std::string>> docs;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    docs.push_back(split_tokens(text.substr(start, end - start)));
    if (end == text.size()) break;
    start = end + 1;
  }
  return make_slice(year, std::move(docs));
}

inline std::filesystem::path slice_path(const std::filesystem::path& dir, int year) {
  return dir / (std::to_string(year) + ".txt");
}

/// Loads `<year>.txt` for every year of `span`, ascending.
inline std::vector<TimeSlice> load_slices(const std::filesystem::path& dir, YearRange span) {
  std::vector<TimeSlice> slices;
  for (int year = span.first; year <= span.last; ++year) {
    auto file = slice_path(dir, year);
    if (!std::filesystem::is_regular_file(file))
      fail(ErrorKind::data, "missing slice " + std::to_string(year) + " (" + file.string() + ")");
    slices.push_back(parse_slice(year, read_file(file), file.string()));
  }
  return slices;
}

/// Writes slices in the `<year>.txt` layout, single-space separated.
inline void write_slices(const std::filesystem::path& dir, const std::vector<TimeSlice>& slices) {
  std::filesystem::create_directories(dir);
  for (const auto& slice : slices) {
    std::ofstream out(slice_path(dir, slice.year), std::ios::binary);
    if (!out) fail(ErrorKind::data, "cannot write " + slice_path(dir, slice.year).string());
    for (const auto& doc : slice.documents) {
      for (std::size_t i = 0; i < doc.size(); ++i) {
        if (i) out << ' ';
        out << doc[i];
      }
      out << '\n';
    }
  }
}

inline std::unordered_map<std::string, std::uint64_t> count_tokens(const TimeSlice& slice) {
  std::unordered_map<std::string, std::uint64_t> counts;
  for (const auto& doc : slice.documents)
    for (const auto& tok : doc) ++counts[tok];
  return counts;
}

inline Vocabulary build_vocab(const TimeSlice& slice, std::uint64_t min_count) {
  if (min_count < 1) fail(ErrorKind::config, "min_count must be >= 1");
  auto vocab = Vocabulary::from_counts(count_tokens(slice), min_count);
  if (vocab.empty())
    fail(ErrorKind::data, "empty vocabulary for " + std::to_string(slice.year) +
                              " at min_count " + std::to_string(min_count));
  return vocab;
}

/// Intersection of two vocabularies; counts are the minimum of both.
inline Vocabulary shared_vocab(const Vocabulary& a, const Vocabulary& b) {
  std::unordered_map<std::string, std::uint64_t> counts;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (auto j = b.find(a.token(i))) counts.emplace(a.token(i), std::min(a.count_at(i), b.count_at(*j)));
  }
  if (counts.empty()) fail(ErrorKind::data, "shared vocabulary is empty");
  return Vocabulary::from_counts(counts, 0);
}

/// Category name -> keywords, in file order.
class KeywordSet {
 public:
  using Category = std::pair<std::string, std::vector<std::string>>;

  KeywordSet() = default;

  explicit KeywordSet(std::vector<Category> categories) : categories_(std::move(categories)) {
    if (categories_.empty()) fail(ErrorKind::data, "keyword set: no categories");
    std::unordered_set<std::string> seen;
    for (const auto& [name, words] : categories_) {
      if (words.empty()) fail(ErrorKind::data, "keyword set: empty category '" + name + "'");
      for (const auto& w : words) {
        if (w.empty()) fail(ErrorKind::data, "keyword set: empty keyword in '" + name + "'");
        if (!seen.insert(w).second) fail(ErrorKind::data, "keyword set: duplicate keyword '" + w + "'");
        all_.push_back(w);
      }
    }
  }

  const std::vector<Category>& categories() const { return categories_; }
  const std::vector<std::string>& keywords() const { return all_; }
  std::size_t size() const { return all_.size(); }

  bool contains(std::string_view w) const {
    return std::find(all_.begin(), all_.end(), w) != all_.end();
  }

 private:
  std::vector<Category> categories_;
  std::vector<std::string> all_;
};

/// Corpus token for a keyword: internal whitespace becomes '_' so multi-word
/// keywords ("Rule of Law") match phrase-joined corpora ("Rule_of_Law").
inline std::string keyword_token(std::string_view keyword) {
  std::string out(keyword);
  for (char& c : out)
    if (c == ' ' || c == '\t') c = '_';
  return out;
}

inline KeywordSet parse_keywords(const nlohmann::ordered_json& doc) {
  if (!doc.is_object()) fail(ErrorKind::data, "keyword file must be a JSON object");
  if (doc.empty()) fail(ErrorKind::data, "keyword set: no categories");
  std::vector<KeywordSet::Category> cats;
  for (const auto& [name, words] : doc.items()) {
    if (!words.is_array()) fail(ErrorKind::data, "keyword category '" + name + "' must be an array");
    std::vector<std::string> list;
    for (const auto& w : words) {
      if (!w.is_string()) fail(ErrorKind::data, "keyword in '" + name + "' is not a string");
      list.push_back(w.get<std::string>());
    }
    cats.emplace_back(name, std::move(list));
  }
  return KeywordSet(std::move(cats));
}

inline KeywordSet load_keywords(const std::filesystem::path& path) {
  auto text = read_file(path);
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::data, "malformed keyword file " + path.string() + ": " + e.what());
  }
  return parse_keywords(doc);
}

inline void write_keywords(const std::filesystem::path& path, const KeywordSet& set) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  for (const auto& [name, words] : set.categories()) doc[name] = words;
  std::ofstream out(path);
  if (!out) fail(ErrorKind::data, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace semstab
