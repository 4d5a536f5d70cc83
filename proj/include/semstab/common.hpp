#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace semstab {

/// Dense row-major matrix; one embedding per row so rows are contiguous.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Failure category. Maps one-to-one onto CLI exit codes (2, 3, 4).
enum class ErrorKind { config, data, numeric };

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::data: return "data";
    case ErrorKind::numeric: return "numeric";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::string stage = {})
      : std::runtime_error(message), kind_(kind), stage_(std::move(stage)) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// Pipeline stage that raised the error; empty outside `run`.
  const std::string& stage() const noexcept { return stage_; }

 private:
  ErrorKind kind_;
  std::string stage_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

enum class Provenance { static_trained, contextual_ingested };

inline std::string_view to_string(Provenance p) {
  return p == Provenance::static_trained ? "static_trained" : "contextual_ingested";
}

inline Provenance provenance_from_string(std::string_view s) {
  if (s == "static_trained") return Provenance::static_trained;
  if (s == "contextual_ingested") return Provenance::contextual_ingested;
  fail(ErrorKind::data, "unknown provenance '" + std::string(s) + "'");
}

/// Inclusive range of years.
struct YearRange {
  int first = 0;
  int last = 0;

  bool contains(int year) const { return year >= first && year <= last; }
  int size() const { return last - first + 1; }
  bool operator==(const YearRange&) const = default;
};

/// Parses "2019-2023" or a single year "2021".
inline YearRange parse_year_range(std::string_view text) {
  auto parse_int = [&](std::string_view s) {
    if (s.empty()) fail(ErrorKind::config, "bad year range '" + std::string(text) + "'");
    int value = 0;
    for (char c : s) {
      if (c < '0' || c > '9') fail(ErrorKind::config, "bad year range '" + std::string(text) + "'");
      value = value * 10 + (c - '0');
    }
    return value;
  };
  auto dash = text.find('-');
  YearRange r;
  if (dash == std::string_view::npos) {
    r.first = r.last = parse_int(text);
  } else {
    r.first = parse_int(text.substr(0, dash));
    r.last = parse_int(text.substr(dash + 1));
  }
  if (r.last < r.first) fail(ErrorKind::config, "empty year range '" + std::string(text) + "'");
  return r;
}

/// SplitMix64: small, portable, and good enough to seed and drive every
/// stochastic step in the toolkit. std distributions are avoided on purpose
/// because their output differs between standard library implementations.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform in [0, n) by multiply-high. n must be positive.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>((*this)()) * n) >> 64);
  }

 private:
  std::uint64_t state_;
};

/// Derives an independent stream seed from a base seed and a stream label.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  SplitMix64 mixer(seed ^ (stream * 0xD1B54A32D192ED03ULL));
  mixer();
  return mixer();
}

inline std::uint64_t hash_string(std::string_view s, std::uint64_t seed = 0) {
  // FNV-1a, then a SplitMix finalizer.
  std::uint64_t h = 0xCBF29CE484222325ULL ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return derive_seed(h, seed);
}

}  // namespace semstab
