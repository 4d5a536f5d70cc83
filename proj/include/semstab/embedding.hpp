#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "semstab/common.hpp"
#include "semstab/corpus.hpp"

namespace semstab {

/// A (vocabulary x dimension) matrix for one year.
struct EmbeddingMatrix {
  int year = 0;
  Vocabulary vocabulary;
  RowMatrix vectors;
  Provenance provenance = Provenance::static_trained;
  bool standardized = false;

  std::size_t rows() const { return static_cast<std::size_t>(vectors.rows()); }
  std::size_t dimension() const { return static_cast<std::size_t>(vectors.cols()); }

  std::span<const double> row(std::size_t i) const {
    return {vectors.data() + i * dimension(), dimension()};
  }

  /// Row for `token`; throws if absent.
  std::span<const double> row(std::string_view token) const {
    auto i = vocabulary.find(token);
    if (!i) fail(ErrorKind::data, "'" + std::string(token) + "' not in vocabulary of " + std::to_string(year));
    return row(*i);
  }

  void validate() const {
    if (static_cast<std::size_t>(vectors.rows()) != vocabulary.size())
      fail(ErrorKind::data, "matrix " + std::to_string(year) + ": row count " +
                                std::to_string(vectors.rows()) + " != vocabulary size " +
                                std::to_string(vocabulary.size()));
    if (!vectors.allFinite()) fail(ErrorKind::numeric, "matrix " + std::to_string(year) + " has non-finite entries");
  }

  /// Same matrix restricted to (and reordered by) `subset`.
  EmbeddingMatrix restrict_to(const Vocabulary& subset) const {
    EmbeddingMatrix out;
    out.year = year;
    out.provenance = provenance;
    out.standardized = standardized;
    out.vocabulary = subset;
    out.vectors.resize(static_cast<Eigen::Index>(subset.size()), vectors.cols());
    for (std::size_t i = 0; i < subset.size(); ++i) {
      auto src = vocabulary.find(subset.token(i));
      if (!src) fail(ErrorKind::data, "'" + subset.token(i) + "' missing from " + std::to_string(year));
      out.vectors.row(static_cast<Eigen::Index>(i)) = vectors.row(static_cast<Eigen::Index>(*src));
    }
    return out;
  }
};

}  // namespace semstab
