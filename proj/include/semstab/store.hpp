#pragma once

// Text interchange format and contextual-embedding ingestion.
//
// Matrix file:
//   line 1      "<rows> <dimension>"
//   lines 2..   "<token> v1 v2 ... vd", single-space separated, UTF-8,
//               values printed with 17 significant digits.
// Occurrence files use the same layout with rows named "<keyword>#<n>".

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "semstab/common.hpp"
#include "semstab/corpus.hpp"
#include "semstab/embedding.hpp"

namespace semstab {

inline void append_double(std::string& out, double value) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
  if (ec != std::errc{}) fail(ErrorKind::numeric, "cannot format value");
  out.append(buf, end);
}

inline bool valid_token(std::string_view token) {
  if (token.empty()) return false;
  return std::none_of(token.begin(), token.end(), [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
  });
}

inline std::string format_matrix(const std::vector<std::string>& tokens, const RowMatrix& vectors) {
  if (tokens.size() != static_cast<std::size_t>(vectors.rows()))
    fail(ErrorKind::data, "token count does not match row count");
  std::string out = std::to_string(vectors.rows()) + " " + std::to_string(vectors.cols()) + "\n";
  for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
    const auto& tok = tokens[static_cast<std::size_t>(r)];
    if (!valid_token(tok)) fail(ErrorKind::data, "token '" + tok + "' is empty or contains whitespace");
    out += tok;
    for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
      const double v = vectors(r, c);
      if (!std::isfinite(v)) fail(ErrorKind::numeric, "non-finite value for token '" + tok + "'");
      out += ' ';
      append_double(out, v);
    }
    out += '\n';
  }
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::data, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::data, "write failed for " + path.string());
}

inline void write_matrix(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  m.validate();
  write_text(path, format_matrix(m.vocabulary.tokens(), m.vectors));
}

/// Raw parsed rows, before any interpretation of token names.
struct MatrixText {
  std::vector<std::string> tokens;
  RowMatrix vectors;
};

inline MatrixText parse_matrix_text(std::string_view text, const std::string& origin) {
  auto where = [&](std::size_t line) { return origin + ":" + std::to_string(line) + ": "; };
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= text.size()) return false;
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    ++line_no;
    return true;
  };
  auto parse_size = [&](std::string_view s, std::size_t line) {
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) fail(ErrorKind::data, where(line) + "bad header");
    return v;
  };

  std::string_view line;
  if (!next_line(line)) fail(ErrorKind::data, where(1) + "empty file");
  auto header = split_tokens(line);
  if (header.size() != 2) fail(ErrorKind::data, where(1) + "header must be '<rows> <dimension>'");
  const std::size_t rows = parse_size(header[0], 1);
  const std::size_t dim = parse_size(header[1], 1);
  if (dim == 0) fail(ErrorKind::data, where(1) + "dimension must be positive");

  MatrixText out;
  out.tokens.reserve(rows);
  out.vectors.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!next_line(line) || line.empty())
      fail(ErrorKind::data, where(r + 2) + "expected " + std::to_string(rows) + " rows, found " + std::to_string(r));
    std::size_t field_start = 0;
    auto next_field = [&]() -> std::string_view {
      if (field_start > line.size()) return {};
      auto end = line.find(' ', field_start);
      if (end == std::string_view::npos) end = line.size();
      auto f = line.substr(field_start, end - field_start);
      field_start = end + 1;
      return f;
    };
    auto token = next_field();
    if (token.empty()) fail(ErrorKind::data, where(line_no) + "missing token");
    out.tokens.emplace_back(token);
    for (std::size_t c = 0; c < dim; ++c) {
      auto f = next_field();
      if (f.empty())
        fail(ErrorKind::data, where(line_no) + "expected " + std::to_string(dim) + " values, found " + std::to_string(c));
      double v = 0;
      auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc{} || p != f.data() + f.size())
        fail(ErrorKind::data, where(line_no) + "bad number '" + std::string(f) + "'");
      if (!std::isfinite(v)) fail(ErrorKind::data, where(line_no) + "non-finite value");
      out.vectors(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
    if (field_start <= line.size())
      fail(ErrorKind::data, where(line_no) + "more than " + std::to_string(dim) + " values");
  }
  while (next_line(line)) {
    if (!line.empty())
      fail(ErrorKind::data, where(line_no) + "more rows than the declared " + std::to_string(rows));
  }
  return out;
}

inline EmbeddingMatrix read_matrix(const std::filesystem::path& path, int year = 0,
                                   Provenance provenance = Provenance::static_trained) {
  auto text = read_file(path);
  if (auto bad = find_invalid_utf8(text))
    fail(ErrorKind::data, path.string() + ": invalid UTF-8 at byte offset " + std::to_string(*bad));
  auto parsed = parse_matrix_text(text, path.string());
  EmbeddingMatrix m;
  m.year = year;
  m.provenance = provenance;
  m.vocabulary = Vocabulary::from_tokens(std::move(parsed.tokens));
  m.vectors = std::move(parsed.vectors);
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Series manifests

struct SeriesManifest {
  std::string name;
  Provenance provenance = Provenance::static_trained;
  int dimension = 0;
  std::vector<int> years;
  std::map<int, std::string> files;  // year -> path relative to the manifest
  // Optional, written by occurrence producers.
  std::map<int, std::map<std::string, std::size_t>> occurrence_counts;  // year -> keyword token -> rows
  std::vector<std::string> unextractable;
  std::filesystem::path directory;   // where the manifest lives; not serialized

  std::filesystem::path file_for(int year) const {
    auto it = files.find(year);
    if (it == files.end()) fail(ErrorKind::data, "manifest '" + name + "' has no file for " + std::to_string(year));
    return directory / it->second;
  }
};

inline nlohmann::ordered_json to_json(const SeriesManifest& m) {
  nlohmann::ordered_json j;
  j["name"] = m.name;
  j["provenance"] = std::string(to_string(m.provenance));
  j["dimension"] = m.dimension;
  j["years"] = m.years;
  nlohmann::ordered_json files = nlohmann::ordered_json::object();
  for (const auto& [year, rel] : m.files) files[std::to_string(year)] = rel;
  j["files"] = files;
  if (!m.occurrence_counts.empty()) {
    nlohmann::ordered_json counts = nlohmann::ordered_json::object();
    for (const auto& [year, per_kw] : m.occurrence_counts) {
      nlohmann::ordered_json c = nlohmann::ordered_json::object();
      for (const auto& [kw, n] : per_kw) c[kw] = n;
      counts[std::to_string(year)] = c;
    }
    j["occurrence_counts"] = counts;
  }
  if (!m.unextractable.empty()) j["unextractable"] = m.unextractable;
  return j;
}

/// Structural checks. With `check_files`, every mapped file must exist.
inline void validate_manifest(const SeriesManifest& m, bool check_files = true) {
  if (m.name.empty()) fail(ErrorKind::data, "manifest: empty name");
  if (m.dimension < 1) fail(ErrorKind::data, "manifest '" + m.name + "': dimension must be positive");
  if (m.years.empty()) fail(ErrorKind::data, "manifest '" + m.name + "': no years");
  for (std::size_t i = 1; i < m.years.size(); ++i)
    if (m.years[i] <= m.years[i - 1])
      fail(ErrorKind::data, "manifest '" + m.name + "': years must be strictly ascending");
  if (m.files.size() != m.years.size())
    fail(ErrorKind::data, "manifest '" + m.name + "': files must map exactly the listed years");
  for (const auto& [year, per_kw] : m.occurrence_counts)
    if (!m.files.contains(year))
      fail(ErrorKind::data, "manifest '" + m.name + "': occurrence_counts lists unmapped year " + std::to_string(year));
  for (int y : m.years) {
    auto path = m.file_for(y);
    if (check_files && !std::filesystem::is_regular_file(path))
      fail(ErrorKind::data, "manifest '" + m.name + "': missing file for " + std::to_string(y) + " (" + path.string() + ")");
  }
}

inline SeriesManifest parse_manifest(const nlohmann::json& j, const std::filesystem::path& directory) {
  SeriesManifest m;
  m.directory = directory;
  try {
    m.name = j.at("name").get<std::string>();
    m.provenance = provenance_from_string(j.at("provenance").get<std::string>());
    m.dimension = j.at("dimension").get<int>();
    m.years = j.at("years").get<std::vector<int>>();
    auto year_key = [](const std::string& key) {
      int year = 0;
      auto [p, ec] = std::from_chars(key.data(), key.data() + key.size(), year);
      if (ec != std::errc{} || p != key.data() + key.size())
        fail(ErrorKind::data, "manifest: bad year key '" + key + "'");
      return year;
    };
    for (const auto& [key, value] : j.at("files").items()) m.files[year_key(key)] = value.get<std::string>();
    if (j.contains("occurrence_counts"))
      for (const auto& [key, per_kw] : j.at("occurrence_counts").items())
        for (const auto& [kw, n] : per_kw.items()) m.occurrence_counts[year_key(key)][kw] = n.get<std::size_t>();
    if (j.contains("unextractable")) m.unextractable = j.at("unextractable").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("manifest: ") + e.what());
  }
  return m;
}

inline SeriesManifest load_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::data, "malformed manifest " + path.string() + ": " + e.what());
  }
  auto m = parse_manifest(j, path.parent_path());
  validate_manifest(m);
  return m;
}

inline void write_manifest(const SeriesManifest& m, const std::filesystem::path& path) {
  write_text(path, to_json(m).dump(2) + "\n");
}

/// Reads every matrix of a static (or pre-averaged) series.
inline std::vector<EmbeddingMatrix> load_series(const SeriesManifest& m) {
  std::vector<EmbeddingMatrix> out;
  for (int y : m.years) {
    auto mat = read_matrix(m.file_for(y), y, m.provenance);
    if (static_cast<int>(mat.dimension()) != m.dimension)
      fail(ErrorKind::data, "series '" + m.name + "' year " + std::to_string(y) + ": dimension " +
                                std::to_string(mat.dimension()) + " != manifest " + std::to_string(m.dimension));
    out.push_back(std::move(mat));
  }
  return out;
}

/// Writes matrices as `<dir>/<year>.vec` plus `<dir>/manifest.json`.
inline SeriesManifest write_series(const std::vector<EmbeddingMatrix>& matrices, const std::string& name,
                                   const std::filesystem::path& dir) {
  if (matrices.empty()) fail(ErrorKind::data, "cannot write an empty series");
  SeriesManifest m;
  m.name = name;
  m.provenance = matrices.front().provenance;
  m.dimension = static_cast<int>(matrices.front().dimension());
  m.directory = dir;
  for (const auto& mat : matrices) {
    const auto rel = std::to_string(mat.year) + ".vec";
    write_matrix(mat, dir / rel);
    m.years.push_back(mat.year);
    m.files[mat.year] = rel;
  }
  write_manifest(m, dir / "manifest.json");
  return m;
}

// ---------------------------------------------------------------------------
// Contextual occurrences

/// All occurrence vectors of one keyword in one year (one row each).
struct OccurrenceBatch {
  std::string keyword;
  int year = 0;
  RowMatrix vectors;
};

/// Splits "<keyword>#<n>" into its keyword; returns empty on a malformed name.
inline std::string_view occurrence_keyword(std::string_view row_name) {
  auto hash = row_name.rfind('#');
  if (hash == std::string_view::npos || hash == 0 || hash + 1 == row_name.size()) return {};
  for (char c : row_name.substr(hash + 1))
    if (c < '0' || c > '9') return {};
  return row_name.substr(0, hash);
}

/// Groups an occurrence file's rows by keyword (first-appearance order).
inline std::vector<OccurrenceBatch> read_occurrences(const std::filesystem::path& path, int year) {
  auto text = read_file(path);
  if (auto bad = find_invalid_utf8(text))
    fail(ErrorKind::data, path.string() + ": invalid UTF-8 at byte offset " + std::to_string(*bad));
  auto parsed = parse_matrix_text(text, path.string());
  std::vector<std::string> order;
  std::map<std::string, std::vector<Eigen::Index>> rows;
  for (std::size_t r = 0; r < parsed.tokens.size(); ++r) {
    auto kw = occurrence_keyword(parsed.tokens[r]);
    if (kw.empty())
      fail(ErrorKind::data, path.string() + ":" + std::to_string(r + 2) + ": row name '" + parsed.tokens[r] +
                                "' is not '<keyword>#<n>'");
    auto [it, inserted] = rows.try_emplace(std::string(kw));
    if (inserted) order.emplace_back(kw);
    it->second.push_back(static_cast<Eigen::Index>(r));
  }
  std::vector<OccurrenceBatch> out;
  for (const auto& kw : order) {
    OccurrenceBatch b;
    b.keyword = kw;
    b.year = year;
    const auto& idx = rows[kw];
    b.vectors.resize(static_cast<Eigen::Index>(idx.size()), parsed.vectors.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) b.vectors.row(static_cast<Eigen::Index>(i)) = parsed.vectors.row(idx[i]);
    out.push_back(std::move(b));
  }
  return out;
}

/// Writes one year's batches as an occurrence file ("<keyword>#<n>" rows,
/// n counting from 1 per keyword).
inline void write_occurrences(const std::vector<OccurrenceBatch>& batches, const std::filesystem::path& path) {
  std::vector<std::string> names;
  Eigen::Index rows = 0, dim = -1;
  for (const auto& b : batches) {
    if (dim < 0) dim = b.vectors.cols();
    if (b.vectors.cols() != dim) fail(ErrorKind::data, "occurrence batches disagree on dimension");
    rows += b.vectors.rows();
  }
  RowMatrix all(rows, std::max<Eigen::Index>(dim, 0));
  Eigen::Index r = 0;
  std::map<std::string, int> counter;
  for (const auto& b : batches) {
    for (Eigen::Index i = 0; i < b.vectors.rows(); ++i, ++r) {
      names.push_back(b.keyword + "#" + std::to_string(++counter[b.keyword]));
      all.row(r) = b.vectors.row(i);
    }
  }
  write_text(path, format_matrix(names, all));
}

struct CoverageGap {
  std::string keyword;
  int year = 0;
  bool operator==(const CoverageGap&) const = default;
};

struct AveragedSeries {
  std::vector<EmbeddingMatrix> matrices;  // one per requested year
  std::vector<CoverageGap> gaps;          // (keyword, year) with no occurrences
};

/// Mean occurrence vector per keyword per year.
///
/// Rows of a (keyword, year) cell are summed in lexicographic order of their
/// values, so the result does not depend on batch order. Keywords with no
/// occurrences in a year are absent from that year's matrix and reported
/// as coverage gaps.
inline AveragedSeries average_occurrences(const std::vector<OccurrenceBatch>& batches, const KeywordSet& keywords,
                                          const std::vector<int>& years) {
  std::map<std::string, std::string> token_to_keyword;
  for (const auto& kw : keywords.keywords()) token_to_keyword.emplace(keyword_token(kw), kw);
  const std::set<int> year_set(years.begin(), years.end());

  Eigen::Index dim = -1;
  std::map<std::pair<int, std::string>, std::vector<std::vector<double>>> cells;
  for (const auto& b : batches) {
    if (!token_to_keyword.contains(b.keyword))
      fail(ErrorKind::data, "occurrence keyword '" + b.keyword + "' is not in the keyword set");
    if (!year_set.contains(b.year))
      fail(ErrorKind::data, "occurrence batch for '" + b.keyword + "' has unrequested year " + std::to_string(b.year));
    if (b.vectors.rows() < 1) fail(ErrorKind::data, "occurrence batch for '" + b.keyword + "' is empty");
    if (!b.vectors.allFinite()) fail(ErrorKind::data, "occurrence batch for '" + b.keyword + "' has non-finite values");
    if (dim < 0) dim = b.vectors.cols();
    if (b.vectors.cols() != dim) fail(ErrorKind::data, "occurrence batches disagree on dimension");
    auto& cell = cells[{b.year, b.keyword}];
    for (Eigen::Index r = 0; r < b.vectors.rows(); ++r)
      cell.emplace_back(b.vectors.row(r).data(), b.vectors.row(r).data() + dim);
  }
  if (dim < 0) fail(ErrorKind::data, "no occurrence batches");

  AveragedSeries out;
  for (int year : years) {
    std::vector<std::string> present;
    std::vector<Eigen::VectorXd> means;
    for (const auto& kw : keywords.keywords()) {
      const auto token = keyword_token(kw);
      auto it = cells.find({year, token});
      if (it == cells.end()) {
        out.gaps.push_back({token, year});
        continue;
      }
      auto rows = it->second;
      std::sort(rows.begin(), rows.end());
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
      for (const auto& r : rows) sum += Eigen::Map<const Eigen::VectorXd>(r.data(), dim);
      present.push_back(token);
      means.push_back(sum / static_cast<double>(rows.size()));
    }
    EmbeddingMatrix m;
    m.year = year;
    m.provenance = Provenance::contextual_ingested;
    m.vocabulary = Vocabulary::from_tokens(present);
    m.vectors.resize(static_cast<Eigen::Index>(present.size()), dim);
    for (std::size_t i = 0; i < means.size(); ++i) m.vectors.row(static_cast<Eigen::Index>(i)) = means[i].transpose();
    out.matrices.push_back(std::move(m));
  }
  return out;
}

/// Reads a contextual series: occurrence files are averaged, files without
/// "#<n>" row names are taken as already-averaged matrices.
inline AveragedSeries ingest_series(const SeriesManifest& manifest, const KeywordSet& keywords) {
  std::vector<OccurrenceBatch> batches;
  std::vector<EmbeddingMatrix> preaveraged;
  for (int y : manifest.years) {
    auto path = manifest.file_for(y);
    auto text = read_file(path);
    auto parsed = parse_matrix_text(text, path.string());
    const bool occurrences = !parsed.tokens.empty() &&
                             std::all_of(parsed.tokens.begin(), parsed.tokens.end(),
                                         [](const std::string& t) { return !occurrence_keyword(t).empty(); });
    if (occurrences) {
      auto b = read_occurrences(path, y);
      batches.insert(batches.end(), std::make_move_iterator(b.begin()), std::make_move_iterator(b.end()));
    } else {
      preaveraged.push_back(read_matrix(path, y, Provenance::contextual_ingested));
    }
  }
  for (const auto& b : batches)
    if (b.vectors.cols() != manifest.dimension)
      fail(ErrorKind::data, "series '" + manifest.name + "': occurrence dimension " + std::to_string(b.vectors.cols()) +
                                " != manifest " + std::to_string(manifest.dimension));
  if (!manifest.occurrence_counts.empty()) {
    std::map<std::pair<int, std::string>, std::size_t> rows;
    for (const auto& b : batches) rows[{b.year, b.keyword}] += static_cast<std::size_t>(b.vectors.rows());
    for (const auto& [year, per_kw] : manifest.occurrence_counts)
      for (const auto& [kw, n] : per_kw) {
        const auto it = rows.find({year, kw});
        const std::size_t have = it == rows.end() ? 0 : it->second;
        if (have != n)
          fail(ErrorKind::data, "series '" + manifest.name + "': manifest counts " + std::to_string(n) + " occurrences of '" + kw +
                                    "' in " + std::to_string(year) + ", file has " + std::to_string(have));
      }
  }
  if (preaveraged.empty()) return average_occurrences(batches, keywords, manifest.years);
  if (!batches.empty()) fail(ErrorKind::data, "series '" + manifest.name + "' mixes occurrence and matrix files");

  AveragedSeries out;
  for (auto& m : preaveraged) {
    std::vector<std::string> present;
    for (const auto& kw : keywords.keywords()) {
      auto tok = keyword_token(kw);
      if (m.vocabulary.contains(tok)) present.push_back(tok);
      else out.gaps.push_back({tok, m.year});
    }
    out.matrices.push_back(m.restrict_to(Vocabulary::from_tokens(present)));
  }
  return out;
}

}  // namespace semstab
