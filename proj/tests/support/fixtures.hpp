#pragma once

// Shared test fixtures.

#include <cmath>
#include <string>
#include <vector>

#include "semstab/semstab.hpp"

namespace semstab::testing {

/// "sunA" and "sunB" share one context distribution; "rock" and "stone"
/// share another, disjoint one.
inline TimeSlice sun_corpus(std::uint64_t seed, int documents = 2000) {
  const std::vector<std::string> sky{"moon", "sky", "star", "light", "bright", "day"};
  const std::vector<std::string> ground{"ground", "hard", "grey", "heavy", "earth", "dust"};
  SplitMix64 rng(seed);
  std::vector<std::vector<std::string>> docs;
  for (int d = 0; d < documents; ++d) {
    const bool sun = rng.below(2) == 0;
    const auto& pool = sun ? sky : ground;
    std::string center = sun ? (rng.below(2) ? "sunA" : "sunB") : (rng.below(2) ? "rock" : "stone");
    std::vector<std::string> doc;
    for (int i = 0; i < 2; ++i) doc.push_back(pool[rng.below(pool.size())]);
    doc.push_back(center);
    for (int i = 0; i < 2; ++i) doc.push_back(pool[rng.below(pool.size())]);
    docs.push_back(std::move(doc));
  }
  return make_slice(2020, std::move(docs));
}

inline SgnsConfig sun_config(std::uint64_t seed) {
  SgnsConfig c;
  c.dimension = 20;
  c.window = 2;
  c.epochs = 5;
  c.subsample_threshold = 0;
  c.seed = seed;
  return c;
}

inline RowMatrix random_matrix(SplitMix64& rng, Eigen::Index rows, Eigen::Index cols) {
  RowMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = 2 * rng.uniform() - 1;
  return m;
}

inline double normal(SplitMix64& rng) {
  double u = rng.uniform();
  while (u <= 0) u = rng.uniform();
  return std::sqrt(-2 * std::log(u)) * std::cos(2 * M_PI * rng.uniform());
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix, sign-fixed).
inline RowMatrix random_orthogonal(SplitMix64& rng, Eigen::Index n) {
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  return q;
}

inline EmbeddingMatrix make_matrix(int year, const std::vector<std::string>& tokens, RowMatrix vectors,
                                   Provenance p = Provenance::static_trained) {
  EmbeddingMatrix m;
  m.year = year;
  m.vocabulary = Vocabulary::from_tokens(tokens);
  m.vectors = std::move(vectors);
  m.provenance = p;
  return m;
}

inline std::vector<std::string> word_list(std::size_t n, const std::string& prefix = "w") {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

}  // namespace semstab::testing
