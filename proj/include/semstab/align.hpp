#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "semstab/common.hpp"
#include "semstab/corpus.hpp"
#include "semstab/embedding.hpp"

namespace semstab {

/// Orthogonal map taking a source year into the base year's frame.
struct AlignmentMap {
  int source_year = 0;
  int base_year = 0;
  RowMatrix rotation;              // d x d, applied on the right: aligned = X * rotation
  std::size_t shared_size = 0;
  double residual = 0;             // ||XQ - Y||_F over shared rows
  double unaligned_residual = 0;   // ||X - Y||_F over shared rows
  std::optional<std::string> warning;
};

struct AlignOptions {
  /// Unit-normalize rows before solving and in the output.
  bool normalize_rows = false;
};

inline RowMatrix unit_rows(const RowMatrix& m) {
  RowMatrix out = m;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double n = out.row(r).norm();
    if (n > 0) out.row(r) /= n;
  }
  return out;
}

/// Solves min ||XQ - Y||_F over orthogonal Q, with X the target's and Y the
/// base's rows over their shared tokens. Q = U V^T for X^T Y = U S V^T.
inline AlignmentMap procrustes(const EmbeddingMatrix& base, const EmbeddingMatrix& target,
                               const AlignOptions& options = {}) {
  if (base.dimension() != target.dimension())
    fail(ErrorKind::data, "procrustes: dimension mismatch (" + std::to_string(base.dimension()) + " vs " +
                              std::to_string(target.dimension()) + ")");
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shared;  // (target row, base row)
  for (std::size_t i = 0; i < base.vocabulary.size(); ++i)
    if (auto j = target.vocabulary.find(base.vocabulary.token(i)))
      shared.emplace_back(static_cast<Eigen::Index>(*j), static_cast<Eigen::Index>(i));
  if (shared.size() < 2)
    fail(ErrorKind::data, "procrustes: " + std::to_string(target.year) + " shares only " +
                              std::to_string(shared.size()) + " tokens with base " + std::to_string(base.year));

  const auto d = static_cast<Eigen::Index>(base.dimension());
  const auto n = static_cast<Eigen::Index>(shared.size());
  RowMatrix X(n, d), Y(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    X.row(r) = target.vectors.row(shared[static_cast<std::size_t>(r)].first);
    Y.row(r) = base.vectors.row(shared[static_cast<std::size_t>(r)].second);
  }
  if (options.normalize_rows) {
    X = unit_rows(X);
    Y = unit_rows(Y);
  }

  const Eigen::MatrixXd cross = X.transpose() * Y;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.info() != Eigen::Success) fail(ErrorKind::numeric, "procrustes: SVD did not converge");

  AlignmentMap map;
  map.source_year = target.year;
  map.base_year = base.year;
  map.rotation = svd.matrixU() * svd.matrixV().transpose();
  map.shared_size = shared.size();
  map.residual = (X * map.rotation - Y).norm();
  map.unaligned_residual = (X - Y).norm();
  if (!map.rotation.allFinite()) fail(ErrorKind::numeric, "procrustes: non-finite rotation");
  if (n < d)
    map.warning = "alignment " + std::to_string(target.year) + "->" + std::to_string(base.year) + " uses " +
                  std::to_string(n) + " shared tokens for dimension " + std::to_string(d) + "; rotation is underdetermined";
  return map;
}

struct AlignedSeries {
  std::vector<EmbeddingMatrix> matrices;  // ascending years, common vocabulary
  int base_year = 0;
  std::vector<AlignmentMap> maps;         // parallel to matrices; identity for base
};

/// Aligns every matrix directly to the base year over the series-wide shared
/// vocabulary.
inline AlignedSeries align_series(std::vector<EmbeddingMatrix> matrices, int base_year,
                                  const AlignOptions& options = {}) {
  if (matrices.empty()) fail(ErrorKind::data, "align: empty series");
  std::sort(matrices.begin(), matrices.end(), [](const auto& a, const auto& b) { return a.year < b.year; });
  for (std::size_t i = 1; i < matrices.size(); ++i)
    if (matrices[i].year == matrices[i - 1].year)
      fail(ErrorKind::data, "align: duplicate year " + std::to_string(matrices[i].year));
  for (const auto& m : matrices)
    if (m.provenance != Provenance::static_trained)
      fail(ErrorKind::config, "align: year " + std::to_string(m.year) + " is not a static_trained matrix");

  auto base_it = std::find_if(matrices.begin(), matrices.end(), [&](const auto& m) { return m.year == base_year; });
  if (base_it == matrices.end()) fail(ErrorKind::config, "align: base year " + std::to_string(base_year) + " not in series");

  // Shared rows keep the base matrix's order, which survives a round trip
  // through the store format (counts do not).
  std::vector<std::string> shared;
  std::vector<std::uint64_t> counts;
  const auto& base_vocab = base_it->vocabulary;
  for (std::size_t i = 0; i < base_vocab.size(); ++i) {
    const auto& tok = base_vocab.token(i);
    std::uint64_t c = base_vocab.count_at(i);
    bool everywhere = true;
    for (const auto& m : matrices) {
      auto j = m.vocabulary.find(tok);
      if (!j) {
        everywhere = false;
        break;
      }
      c = std::min(c, m.vocabulary.count_at(*j));
    }
    if (everywhere) {
      shared.push_back(tok);
      counts.push_back(c);
    }
  }
  if (shared.empty()) fail(ErrorKind::data, "shared vocabulary is empty");
  const Vocabulary common = Vocabulary::from_tokens(std::move(shared), std::move(counts));

  AlignedSeries out;
  out.base_year = base_year;
  const EmbeddingMatrix base = base_it->restrict_to(common);
  const auto d = static_cast<Eigen::Index>(base.dimension());
  for (const auto& m : matrices) {
    EmbeddingMatrix restricted = m.restrict_to(common);
    if (options.normalize_rows) restricted.vectors = unit_rows(restricted.vectors);
    AlignmentMap map;
    if (m.year == base_year) {
      map.source_year = map.base_year = base_year;
      map.rotation = RowMatrix::Identity(d, d);
      map.shared_size = common.size();
    } else {
      map = procrustes(base, restricted, options);
      restricted.vectors = restricted.vectors * map.rotation;
    }
    out.matrices.push_back(std::move(restricted));
    out.maps.push_back(std::move(map));
  }
  return out;
}

enum class ZScoreMode { per_dimension, whole_matrix };

/// Standardizes to zero mean, unit population variance.
///
/// per_dimension: statistics per column over the word axis.
/// whole_matrix: one scalar mean/sigma over all entries (sensitivity checks).
inline EmbeddingMatrix zscore(const EmbeddingMatrix& m, ZScoreMode mode = ZScoreMode::per_dimension) {
  if (m.rows() < 2) fail(ErrorKind::data, "zscore: need >= 2 rows, matrix " + std::to_string(m.year) + " has " + std::to_string(m.rows()));
  EmbeddingMatrix out = m;
  const auto n = static_cast<double>(m.rows());
  auto degenerate = [](double sigma, double mean) { return !(sigma > 1e-12 * std::max(1.0, std::abs(mean))); };
  if (mode == ZScoreMode::per_dimension) {
    for (Eigen::Index c = 0; c < m.vectors.cols(); ++c) {
      auto col = out.vectors.col(c);
      const double mean = col.sum() / n;
      col.array() -= mean;
      const double sigma = std::sqrt(col.squaredNorm() / n);
      if (degenerate(sigma, mean))
        fail(ErrorKind::numeric, "zero variance in dimension " + std::to_string(c) + " (matrix " + std::to_string(m.year) + ")");
      col /= sigma;
    }
  } else {
    const double count = static_cast<double>(out.vectors.size());
    const double mean = out.vectors.sum() / count;
    out.vectors.array() -= mean;
    const double sigma = std::sqrt(out.vectors.squaredNorm() / count);
    if (degenerate(sigma, mean)) fail(ErrorKind::numeric, "zero variance in matrix " + std::to_string(m.year));
    out.vectors /= sigma;
  }
  out.standardized = true;
  return out;
}

}  // namespace semstab
