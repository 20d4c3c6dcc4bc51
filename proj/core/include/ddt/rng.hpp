// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#pragma once

#include <cstdint>
#include <string_view>

namespace ddt {

/// Counter-based generator: the i-th output is splitmix64(key + (i + 1) * 0x9E3779B97F4A7C15).
///
/// Draw sequences depend only on (key, counter), are bit-identical across platforms and
/// can be re-derived without replaying history. Independent streams for parallel work are
/// obtained with derive_stream(global_seed, item_id).
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key = 0, std::uint64_t counter = 0) noexcept
      : key_(key), counter_(counter) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept { return at(counter_++); }

  /// Uniform double in [0, 1) with 53 bits of resolution.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  result_type at(std::uint64_t index) const noexcept { return mix(key_ + (index + 1) * kGamma); }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
  std::uint64_t key_;
  std::uint64_t counter_;
};

/// FNV-1a 64 over the bytes of `s`.
constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Per-item stream: key = mix(global_seed ^ mix(fnv1a64(item_id))).
inline CounterRng derive_stream(std::uint64_t global_seed, std::string_view item_id) noexcept {
  return CounterRng(CounterRng::mix(global_seed ^ CounterRng::mix(fnv1a64(item_id))));
}

/// Sub-stream for a named purpose (e.g. "analysis", "decode") of an existing stream key.
inline CounterRng derive_stream(const CounterRng& parent, std::string_view purpose) noexcept {
  return CounterRng(CounterRng::mix(parent.key() ^ CounterRng::mix(fnv1a64(purpose) + 1)));
}

}  // namespace ddt
