#pragma once

#include <cmath>
#include <cstdint>

#include "nonstat/normal.hpp"

namespace nonstat::rng {

inline constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ull;

/// SplitMix64 finalizer (Steele, Lea & Flood; Vigna's fixed-increment
/// variant). Bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Counter-based random stream: output k is mix64(key + (k+1)*gamma),
/// i.e. the SplitMix64 sequence started at `key`. Streams are split by
/// deriving a new key from (key, index); replicate k of an experiment
/// always draws from child stream k, so results do not depend on thread
/// scheduling.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : key_(mix64(seed + kGamma)) {}

  /// Independent child stream, a pure function of (this stream's key, index).
  Stream child(std::uint64_t index) const {
    Stream s;
    s.key_ = mix64(key_ ^ mix64(index * kGamma + 0x6a09e667f3bcc909ull));
    return s;
  }
  Stream child(std::uint64_t a, std::uint64_t b) const { return child(a).child(b); }

  std::uint64_t next_u64() {
    counter_ += kGamma;
    return mix64(key_ + counter_);
  }

  /// Uniform draw strictly inside (0, 1): ((x >> 11) + 0.5) * 2^-53.
  double next_uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via the inverse CDF (one uniform per draw).
  double next_normal() { return norm_quantile(next_uniform()); }

  /// Exp(1) via inverse CDF, -ln(U).
  double next_exponential() { return -std::log(next_uniform()); }

  /// Stream identifier (provenance tag; does not advance the stream).
  std::uint64_t key() const { return key_; }

 private:
  Stream() = default;
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace nonstat::rng
