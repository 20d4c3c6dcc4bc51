// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace ddt {

using TokenId = std::int32_t;

/// Log-probabilities below this are floored before any arithmetic (nats).
inline constexpr double kLogProbFloor = -50.0;

/// Mass of a truncated distribution that was not reported token by token.
struct TailSupport {
  std::size_t top_count = 0;
  std::size_t tail_token_count = 0;
  double tail_log_mass = 0.0;  // log of the unreported mass; -inf when none
};

/// Next-token distribution in natural-log space.
///
/// Full support stores one log-probability per token id. Truncated support (what a remote
/// server returns) stores the listed ids with their log-probabilities plus the aggregate
/// tail, so that log-sum-exp(listed, tail_log_mass) = 0.
class TokenDistribution {
 public:
  /// Validates normalization (1e-6), log_prob <= 1e-9 and vocab_size >= 2.
  static TokenDistribution full(std::vector<double> log_probs);
  static TokenDistribution from_logits(std::span<const double> logits);
  static TokenDistribution from_probs(std::span<const double> probs);
  /// Listed probabilities may sum slightly above one from server rounding (<= 1e-6);
  /// they are renormalized in that case.
  static TokenDistribution truncated(std::vector<TokenId> ids, std::vector<double> log_probs,
                                     std::size_t vocab_size);
  /// No validation. Only for diagnostics that need to feed a broken distribution through
  /// the statistics (fault injection).
  static TokenDistribution unchecked_full(std::vector<double> log_probs);

  bool is_full() const noexcept { return !tail_.has_value(); }
  std::size_t vocab_size() const noexcept { return vocab_size_; }

  /// Number of individually listed tokens (vocab_size for full support).
  std::size_t support_size() const noexcept { return log_probs_.size(); }
  TokenId id_at(std::size_t i) const noexcept {
    return is_full() ? static_cast<TokenId>(i) : ids_[i];
  }
  double log_prob_at(std::size_t i) const noexcept { return log_probs_[i]; }

  /// Full: indexed by token id. Truncated: aligned with ids().
  std::span<const double> log_probs() const noexcept { return log_probs_; }
  std::span<const TokenId> ids() const noexcept { return ids_; }
  const std::optional<TailSupport>& tail() const noexcept { return tail_; }

  /// nullopt when the token is not listed in a truncated support.
  std::optional<double> log_prob(TokenId token) const noexcept;

 private:
  TokenDistribution() = default;

  std::vector<double> log_probs_;
  std::vector<TokenId> ids_;
  std::size_t vocab_size_ = 0;
  std::optional<TailSupport> tail_;
};

/// Numerically stable log(sum(exp(v))); -inf for empty input or all -inf.
double log_sum_exp(std::span<const double> values) noexcept;

inline double floored(double log_prob) noexcept {
  return log_prob < kLogProbFloor ? kLogProbFloor : log_prob;
}

}  // namespace ddt
