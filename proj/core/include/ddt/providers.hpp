// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ddt/distribution.hpp"

namespace ddt {

/// Tokens conditioning the next prediction (prompt followed by everything generated).
struct ContextState {
  std::vector<TokenId> tokens;

  void push(TokenId t) { tokens.push_back(t); }
};

/// Source of next-token distributions. Implementations are immutable after construction
/// and safe to share across threads.
class Provider {
 public:
  virtual ~Provider() = default;

  virtual std::size_t vocab_size() const = 0;
  virtual TokenDistribution next_distribution(std::span<const TokenId> context) const = 0;

  TokenDistribution next_distribution(const ContextState& context) const { return next_distribution(context.tokens); }

  /// Teacher forcing: element t is the distribution of continuation[t] given
  /// prompt + continuation[0..t). Remote providers answer this in one round trip.
  virtual std::vector<TokenDistribution> score_continuation(std::span<const TokenId> prompt,
                                                            std::span<const TokenId> continuation) const;
};

/// Deterministic table LM: the distribution of the longest rule whose suffix matches the end
/// of the context, or the default distribution when none matches.
class TableProvider final : public Provider {
 public:
  struct Rule {
    std::vector<TokenId> suffix;
    TokenDistribution dist;
  };

  TableProvider(TokenDistribution fallback, std::vector<Rule> rules);

  std::size_t vocab_size() const override { return fallback_.vocab_size(); }
  TokenDistribution next_distribution(std::span<const TokenId> context) const override;
  using Provider::next_distribution;

 private:
  TokenDistribution fallback_;
  std::vector<Rule> rules_;
};

/// Add-lambda smoothed n-gram model; `order` is the number of conditioning tokens.
///
///   p(x | ctx) = (count(ctx, x) + lambda) / (count(ctx) + lambda * V)
///
/// Contexts never seen in training yield the uniform distribution.
class NgramModel final : public Provider {
 public:
  /// Sliding windows over one token stream; the first `order` tokens only serve as context.
  static NgramModel train_stream(std::span<const TokenId> stream, std::size_t vocab_size, std::size_t order,
                                 double smoothing_lambda);

  /// Each sequence is left-padded with `order` copies of `pad` and terminated by `eos`.
  /// Contexts shorter than `order` at query time are padded the same way.
  static NgramModel train_sequences(std::span<const std::vector<TokenId>> sequences, std::size_t vocab_size,
                                    std::size_t order, double smoothing_lambda, TokenId pad, TokenId eos);

  std::size_t vocab_size() const override { return vocab_size_; }
  std::size_t order() const noexcept { return order_; }
  double smoothing_lambda() const noexcept { return lambda_; }
  TokenDistribution next_distribution(std::span<const TokenId> context) const override;
  using Provider::next_distribution;

  /// Raw count of `token` following the last `order` tokens of `context`.
  std::size_t count(std::span<const TokenId> context, TokenId token) const;
  /// True when the last `order` tokens of `context` occurred as a training context.
  bool has_context(std::span<const TokenId> context) const;

 private:
  struct Counts {
    std::vector<std::pair<TokenId, std::size_t>> next;
    std::size_t total = 0;
  };
  struct KeyHash {
    std::size_t operator()(const std::vector<TokenId>& key) const noexcept;
  };

  NgramModel(std::size_t vocab_size, std::size_t order, double lambda, std::optional<TokenId> pad);
  void add(std::span<const TokenId> window, TokenId next);
  std::vector<TokenId> key_for(std::span<const TokenId> context) const;

  std::size_t vocab_size_;
  std::size_t order_;
  double lambda_;
  std::optional<TokenId> pad_;
  std::unordered_map<std::vector<TokenId>, Counts, KeyHash> table_;
};

/// Backoff over n-gram models of orders 1..k: the next-token law comes from the highest-order
/// model whose context was seen in training, or is uniform when none was.
class BackoffNgram final : public Provider {
 public:
  static BackoffNgram train_sequences(std::span<const std::vector<TokenId>> sequences, std::size_t vocab_size,
                                      std::size_t max_order, double smoothing_lambda, TokenId pad, TokenId eos);

  std::size_t vocab_size() const override { return models_.front().vocab_size(); }
  std::size_t max_order() const noexcept { return models_.size(); }
  TokenDistribution next_distribution(std::span<const TokenId> context) const override;
  using Provider::next_distribution;

 private:
  explicit BackoffNgram(std::vector<NgramModel> models) : models_(std::move(models)) {}
  std::vector<NgramModel> models_;  // models_[i] has order i + 1
};

/// Linear interpolation p = sum_i w_i p_i of providers over one vocabulary.
class MixtureProvider final : public Provider {
 public:
  MixtureProvider(std::vector<std::shared_ptr<const Provider>> components, std::vector<double> weights);

  std::size_t vocab_size() const override { return components_.front()->vocab_size(); }
  TokenDistribution next_distribution(std::span<const TokenId> context) const override;
  using Provider::next_distribution;

 private:
  std::vector<std::shared_ptr<const Provider>> components_;
  std::vector<double> weights_;
};

/// Toy stand-in for in-context attention. When the context contains a region delimited by
/// `open` ... `close`, logits of tokens inside the region get `bag_bias`, and the token that
/// followed the most recent in-region occurrence of the last context token gets `copy_bias`
/// (an induction-style copy). Without a closed region the base distribution is returned.
class HintCopyProvider final : public Provider {
 public:
  struct Params {
    TokenId open = 0;
    TokenId close = 0;
    double bag_bias = 2.0;
    double copy_bias = 6.0;
  };

  HintCopyProvider(std::shared_ptr<const Provider> base, Params params);

  std::size_t vocab_size() const override { return base_->vocab_size(); }
  TokenDistribution next_distribution(std::span<const TokenId> context) const override;
  using Provider::next_distribution;

 private:
  std::shared_ptr<const Provider> base_;
  Params params_;
};

}  // namespace ddt
