// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#include "ddt/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>

#include "ddt/error.hpp"

namespace ddt {
namespace {

constexpr double kNormTolerance = 1e-6;
constexpr double kMaxLogProb = 1e-9;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_entries(std::span<const double> log_probs) {
  for (double lp : log_probs) {
    if (std::isnan(lp) || lp > kMaxLogProb) {
      throw Error(ErrorCode::InvalidArgument, "log-probability out of range: " + std::to_string(lp));
    }
  }
}

}  // namespace

double log_sum_exp(std::span<const double> values) noexcept {
  double hi = kNegInf;
  for (double v : values) hi = std::max(hi, v);
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (double v : values) s += std::exp(v - hi);
  return hi + std::log(s);
}

TokenDistribution TokenDistribution::full(std::vector<double> log_probs) {
  if (log_probs.size() < 2) throw Error(ErrorCode::InvalidArgument, "vocab_size must be >= 2");
  check_entries(log_probs);
  const double lse = log_sum_exp(log_probs);
  if (!(std::abs(lse) <= kNormTolerance)) {
    throw Error(ErrorCode::InvalidArgument, "distribution not normalized: log-sum-exp = " + std::to_string(lse));
  }
  TokenDistribution d;
  d.vocab_size_ = log_probs.size();
  d.log_probs_ = std::move(log_probs);
  return d;
}

TokenDistribution TokenDistribution::from_logits(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  if (!std::isfinite(lse)) throw Error(ErrorCode::InvalidArgument, "logits have no finite mass");
  std::vector<double> lp(logits.begin(), logits.end());
  for (double& v : lp) v -= lse;
  return full(std::move(lp));
}

TokenDistribution TokenDistribution::from_probs(std::span<const double> probs) {
  std::vector<double> lp;
  lp.reserve(probs.size());
  for (double p : probs) {
    if (p < 0.0 || std::isnan(p)) throw Error(ErrorCode::InvalidArgument, "negative probability");
    lp.push_back(p > 0.0 ? std::log(p) : kNegInf);
  }
  return from_logits(lp);
}

TokenDistribution TokenDistribution::truncated(std::vector<TokenId> ids, std::vector<double> log_probs,
                                               std::size_t vocab_size) {
  if (vocab_size < 2) throw Error(ErrorCode::InvalidArgument, "vocab_size must be >= 2");
  if (ids.size() != log_probs.size() || ids.empty()) {
    throw Error(ErrorCode::InvalidArgument, "truncated support needs matching, nonempty ids and log-probs");
  }
  if (ids.size() > vocab_size) throw Error(ErrorCode::InvalidArgument, "more listed tokens than vocab");
  std::unordered_set<TokenId> seen;
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) {
      throw Error(ErrorCode::InvalidArgument, "token id outside vocab: " + std::to_string(id));
    }
    if (!seen.insert(id).second) throw Error(ErrorCode::InvalidArgument, "duplicate token id in support");
  }
  check_entries(log_probs);

  double listed_mass = 0.0;
  for (double lp : log_probs) listed_mass += std::exp(lp);
  if (listed_mass > 1.0 + kNormTolerance) {
    throw Error(ErrorCode::InvalidArgument, "listed mass exceeds one: " + std::to_string(listed_mass));
  }
  const std::size_t tail_count = vocab_size - ids.size();
  double tail_mass = std::max(0.0, 1.0 - listed_mass);
  if (listed_mass > 1.0) {
    const double shift = std::log(listed_mass);
    for (double& lp : log_probs) lp -= shift;
    tail_mass = 0.0;
  }
  if (tail_count == 0 && tail_mass > kNormTolerance) {
    throw Error(ErrorCode::InvalidArgument, "support covers the vocab but mass is missing");
  }

  TokenDistribution d;
  d.vocab_size_ = vocab_size;
  d.tail_ = TailSupport{ids.size(), tail_count, tail_mass > 0.0 && tail_count > 0 ? std::log(tail_mass) : kNegInf};
  d.ids_ = std::move(ids);
  d.log_probs_ = std::move(log_probs);
  return d;
}

TokenDistribution TokenDistribution::unchecked_full(std::vector<double> log_probs) {
  TokenDistribution d;
  d.vocab_size_ = log_probs.size();
  d.log_probs_ = std::move(log_probs);
  return d;
}

std::optional<double> TokenDistribution::log_prob(TokenId token) const noexcept {
  if (token < 0 || static_cast<std::size_t>(token) >= vocab_size_) return std::nullopt;
  if (is_full()) return log_probs_[static_cast<std::size_t>(token)];
  const auto it = std::find(ids_.begin(), ids_.end(), token);
  if (it == ids_.end()) return std::nullopt;
  return log_probs_[static_cast<std::size_t>(it - ids_.begin())];
}

}  // namespace ddt
