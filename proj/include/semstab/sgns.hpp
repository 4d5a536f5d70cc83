#pragma once

// Skip-gram with negative sampling, one model per time slice.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include "semstab/common.hpp"
#include "semstab/corpus.hpp"
#include "semstab/embedding.hpp"

namespace semstab {

struct SgnsConfig {
  int dimension = 100;
  int window = 5;
  int negatives = 5;
  int epochs = 5;
  double initial_learning_rate = 0.025;
  double subsample_threshold = 1e-3;
  std::uint64_t seed = 1;
  /// 1 = deterministic. More threads run lock-free (hogwild) updates.
  int threads = 1;

  void validate() const {
    if (dimension < 2) fail(ErrorKind::config, "sgns.dimension must be >= 2");
    if (window < 1) fail(ErrorKind::config, "sgns.window must be >= 1");
    if (negatives < 1) fail(ErrorKind::config, "sgns.negatives must be >= 1");
    if (epochs < 1) fail(ErrorKind::config, "sgns.epochs must be >= 1");
    if (!(initial_learning_rate > 0)) fail(ErrorKind::config, "sgns.initial_learning_rate must be > 0");
    if (!(subsample_threshold >= 0)) fail(ErrorKind::config, "sgns.subsample_threshold must be >= 0");
    if (threads < 1) fail(ErrorKind::config, "sgns.threads must be >= 1");
  }
};

/// Per-epoch mean negative-sampling loss, for diagnostics and tests.
struct TrainStats {
  std::vector<double> epoch_loss;
  std::uint64_t pairs = 0;
};

/// Calls `emit(position, center, context)` for every pair inside a dynamic
/// window. `sample_window(window)` returns the effective window in [1, window].
template <class WindowSampler, class Emit>
void for_each_context(std::span<const std::uint32_t> doc, int window, WindowSampler&& sample_window,
                      Emit&& emit) {
  const auto n = static_cast<std::ptrdiff_t>(doc.size());
  for (std::ptrdiff_t pos = 0; pos < n; ++pos) {
    const auto b = static_cast<std::ptrdiff_t>(sample_window(window));
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, pos - b);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, pos + b);
    for (std::ptrdiff_t j = lo; j <= hi; ++j) {
      if (j == pos) continue;
      emit(static_cast<std::size_t>(pos), doc[static_cast<std::size_t>(pos)], doc[static_cast<std::size_t>(j)]);
    }
  }
}

template <class WindowSampler>
std::vector<std::pair<std::uint32_t, std::uint32_t>> context_pairs(std::span<const std::uint32_t> doc,
                                                                   int window, WindowSampler&& sample_window) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  for_each_context(doc, window, sample_window,
                   [&](std::size_t, std::uint32_t c, std::uint32_t o) { pairs.emplace_back(c, o); });
  return pairs;
}

inline std::vector<std::pair<std::uint32_t, std::uint32_t>> context_pairs(std::span<const std::uint32_t> doc,
                                                                          int window, SplitMix64& rng) {
  return context_pairs(doc, window, [&](int w) { return 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(w))); });
}

/// Walker/Vose alias table for O(1) sampling from a discrete distribution.
class AliasTable {
 public:
  AliasTable() = default;

  explicit AliasTable(std::span<const double> weights) {
    const std::size_t n = weights.size();
    prob_.assign(n, 0.0);
    alias_.assign(n, 0);
    double total = 0;
    for (double w : weights) total += w;
    std::vector<double> scaled(n);
    std::vector<std::uint32_t> small, large;
    for (std::size_t i = 0; i < n; ++i) {
      scaled[i] = weights[i] * static_cast<double>(n) / total;
      (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
    }
    while (!small.empty() && !large.empty()) {
      auto s = small.back();
      small.pop_back();
      auto l = large.back();
      prob_[s] = scaled[s];
      alias_[s] = l;
      scaled[l] -= 1.0 - scaled[s];
      if (scaled[l] < 1.0) {
        large.pop_back();
        small.push_back(l);
      }
    }
    for (auto i : large) prob_[i] = 1.0;
    for (auto i : small) prob_[i] = 1.0;
  }

  std::uint32_t sample(SplitMix64& rng) const {
    auto i = static_cast<std::uint32_t>(rng.below(prob_.size()));
    return rng.uniform() < prob_[i] ? i : alias_[i];
  }

  std::size_t size() const { return prob_.size(); }

 private:
  std::vector<double> prob_;
  std::vector<std::uint32_t> alias_;
};

namespace detail {

// Eight independent partial sums so the reduction vectorizes without
// relying on -ffast-math; the summation order is fixed, so results stay
// reproducible.
inline float dot(const float* a, const float* b, int n) {
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int i = 0;
  for (; i + 8 <= n; i += 8)
    for (int j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  float tail = 0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

// grad += g * out; out += g * in (elementwise, old `out` feeds `grad`).
inline void accumulate(float* __restrict grad, float* __restrict out, const float* __restrict in, float g, int n) {
  for (int k = 0; k < n; ++k) {
    grad[k] += g * out[k];
    out[k] += g * in[k];
  }
}

inline void add(float* __restrict dst, const float* __restrict src, int n) {
  for (int k = 0; k < n; ++k) dst[k] += src[k];
}

struct SgnsState {
  int dim = 0;
  std::vector<float> input;   // |V| x dim, read out as the embedding
  std::vector<float> output;  // |V| x dim, discarded after training
};

}  // namespace detail

/// Trains one SGNS embedding for `slice` over `vocab`.
///
/// Word vectors are initialised from a hash of (token, seed), so a token
/// starts from the same point in every year regardless of vocabulary order.
/// Negatives follow unigram^0.75; the learning rate decays linearly to
/// initial/1e4 across all (epoch, position) steps.
inline EmbeddingMatrix train(const TimeSlice& slice, const Vocabulary& vocab, const SgnsConfig& config,
                             TrainStats* stats = nullptr) {
  config.validate();
  if (vocab.empty()) fail(ErrorKind::data, "cannot train on an empty vocabulary");
  if (slice.token_count < 10ULL * static_cast<std::uint64_t>(config.dimension))
    fail(ErrorKind::data, "insufficient data: slice " + std::to_string(slice.year) + " has " +
                              std::to_string(slice.token_count) + " tokens, need >= " +
                              std::to_string(10 * config.dimension));

  const std::size_t V = vocab.size();
  const int dim = config.dimension;

  // Encode the corpus once; out-of-vocabulary tokens are dropped.
  std::vector<std::vector<std::uint32_t>> encoded;
  encoded.reserve(slice.documents.size());
  std::vector<std::uint64_t> freq(V, 0);
  std::uint64_t train_words = 0;
  for (const auto& doc : slice.documents) {
    std::vector<std::uint32_t> ids;
    ids.reserve(doc.size());
    for (const auto& tok : doc) {
      if (auto i = vocab.find(tok)) {
        ids.push_back(static_cast<std::uint32_t>(*i));
        ++freq[*i];
      }
    }
    train_words += ids.size();
    if (!ids.empty()) encoded.push_back(std::move(ids));
  }
  if (train_words == 0) fail(ErrorKind::data, "no in-vocabulary tokens in slice " + std::to_string(slice.year));

  std::vector<double> neg_weights(V);
  for (std::size_t i = 0; i < V; ++i) neg_weights[i] = std::pow(static_cast<double>(freq[i]), 0.75);
  if (std::all_of(neg_weights.begin(), neg_weights.end(), [](double w) { return w == 0; }))
    std::fill(neg_weights.begin(), neg_weights.end(), 1.0);
  const AliasTable negatives(neg_weights);

  std::vector<double> keep_prob(V, 1.0);
  if (config.subsample_threshold > 0) {
    const double t = config.subsample_threshold * static_cast<double>(train_words);
    for (std::size_t i = 0; i < V; ++i) {
      if (freq[i] == 0) continue;
      const double f = static_cast<double>(freq[i]);
      keep_prob[i] = std::min(1.0, (std::sqrt(f / t) + 1.0) * t / f);
    }
  }

  detail::SgnsState state;
  state.dim = dim;
  state.input.resize(V * static_cast<std::size_t>(dim));
  state.output.assign(V * static_cast<std::size_t>(dim), 0.0f);
  for (std::size_t i = 0; i < V; ++i) {
    SplitMix64 init(hash_string(vocab.token(i), config.seed));
    for (int d = 0; d < dim; ++d)
      state.input[i * static_cast<std::size_t>(dim) + static_cast<std::size_t>(d)] =
          static_cast<float>((init.uniform() - 0.5) / dim);
  }

  const double total_steps = static_cast<double>(train_words) * config.epochs;
  const double min_alpha = config.initial_learning_rate * 1e-4;
  std::atomic<std::uint64_t> progress{0};
  const bool track_loss = stats != nullptr;

  const int n_threads = std::max(1, std::min<int>(config.threads, static_cast<int>(encoded.size())));
  std::vector<std::vector<double>> thread_loss(n_threads, std::vector<double>(config.epochs, 0.0));
  std::vector<std::vector<std::uint64_t>> thread_pairs(n_threads, std::vector<std::uint64_t>(config.epochs, 0));

  auto worker = [&](int tid) {
    SplitMix64 rng(derive_seed(config.seed, 0x5167'0000ULL + static_cast<std::uint64_t>(tid)));
    const std::size_t begin = encoded.size() * static_cast<std::size_t>(tid) / static_cast<std::size_t>(n_threads);
    const std::size_t end = encoded.size() * static_cast<std::size_t>(tid + 1) / static_cast<std::size_t>(n_threads);
    std::vector<std::uint32_t> kept;
    std::vector<std::uint32_t> kept_pos;
    std::vector<float> grad(static_cast<std::size_t>(dim));
    auto sample_window = [&](int w) { return 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(w))); };

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      double loss = 0;
      std::uint64_t pairs = 0;
      for (std::size_t d = begin; d < end; ++d) {
        const auto& ids = encoded[d];
        kept.clear();
        kept_pos.clear();
        for (std::size_t p = 0; p < ids.size(); ++p) {
          if (keep_prob[ids[p]] < 1.0 && rng.uniform() >= keep_prob[ids[p]]) continue;
          kept.push_back(ids[p]);
          kept_pos.push_back(static_cast<std::uint32_t>(p));
        }
        const std::uint64_t base = progress.load(std::memory_order_relaxed);
        for_each_context(kept, config.window, sample_window, [&](std::size_t pos, std::uint32_t center, std::uint32_t ctx) {
          const double done = static_cast<double>(base + kept_pos[pos]) / total_steps;
          const double alpha = std::max(min_alpha, config.initial_learning_rate * (1.0 - done));
          float* in = &state.input[static_cast<std::size_t>(center) * static_cast<std::size_t>(dim)];
          std::fill(grad.begin(), grad.end(), 0.0f);
          for (int s = 0; s <= config.negatives; ++s) {
            std::uint32_t target;
            double label;
            if (s == 0) {
              target = ctx;
              label = 1.0;
            } else {
              target = negatives.sample(rng);
              if (target == ctx) continue;
              label = 0.0;
            }
            float* out = &state.output[static_cast<std::size_t>(target) * static_cast<std::size_t>(dim)];
            const double f = std::clamp(static_cast<double>(detail::dot(in, out, dim)), -30.0, 30.0);
            const double e = std::exp(-f);
            const double sigma = 1.0 / (1.0 + e);
            // -log sigma(f) = log1p(e); -log sigma(-f) = f + log1p(e)
            if (track_loss) loss += label > 0 ? std::log1p(e) : f + std::log1p(e);
            const auto g = static_cast<float>((label - sigma) * alpha);
            detail::accumulate(grad.data(), out, in, g, dim);
          }
          detail::add(in, grad.data(), dim);
          ++pairs;
        });
        progress.fetch_add(ids.size(), std::memory_order_relaxed);
      }
      thread_loss[static_cast<std::size_t>(tid)][static_cast<std::size_t>(epoch)] = loss;
      thread_pairs[static_cast<std::size_t>(tid)][static_cast<std::size_t>(epoch)] = pairs;
    }
  };

  if (n_threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker, t);
    for (auto& th : pool) th.join();
  }

  if (stats) {
    stats->epoch_loss.assign(static_cast<std::size_t>(config.epochs), 0.0);
    stats->pairs = 0;
    for (int e = 0; e < config.epochs; ++e) {
      double loss = 0;
      std::uint64_t pairs = 0;
      for (int t = 0; t < n_threads; ++t) {
        loss += thread_loss[static_cast<std::size_t>(t)][static_cast<std::size_t>(e)];
        pairs += thread_pairs[static_cast<std::size_t>(t)][static_cast<std::size_t>(e)];
      }
      stats->epoch_loss[static_cast<std::size_t>(e)] = pairs ? loss / static_cast<double>(pairs) : 0.0;
      stats->pairs += pairs;
    }
  }

  EmbeddingMatrix m;
  m.year = slice.year;
  m.vocabulary = vocab;
  m.provenance = Provenance::static_trained;
  m.standardized = false;
  m.vectors.resize(static_cast<Eigen::Index>(V), dim);
  for (std::size_t i = 0; i < V; ++i)
    for (int d = 0; d < dim; ++d)
      m.vectors(static_cast<Eigen::Index>(i), d) =
          static_cast<double>(state.input[i * static_cast<std::size_t>(dim) + static_cast<std::size_t>(d)]);
  m.validate();
  return m;
}

}  // namespace semstab
