// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#include "ddt/providers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>

#include "ddt/error.hpp"

namespace ddt {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool ends_with(std::span<const TokenId> context, std::span<const TokenId> suffix) {
  if (suffix.size() > context.size()) return false;
  return std::equal(suffix.begin(), suffix.end(), context.end() - static_cast<std::ptrdiff_t>(suffix.size()));
}

}  // namespace

std::vector<TokenDistribution> Provider::score_continuation(std::span<const TokenId> prompt,
                                                            std::span<const TokenId> continuation) const {
  std::vector<TokenId> ctx(prompt.begin(), prompt.end());
  ctx.reserve(prompt.size() + continuation.size());
  std::vector<TokenDistribution> out;
  out.reserve(continuation.size());
  for (TokenId t : continuation) {
    out.push_back(next_distribution(std::span<const TokenId>(ctx)));
    ctx.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// TableProvider

TableProvider::TableProvider(TokenDistribution fallback, std::vector<Rule> rules)
    : fallback_(std::move(fallback)), rules_(std::move(rules)) {
  if (!fallback_.is_full()) throw Error(ErrorCode::InvalidArgument, "table LM needs full-support distributions");
  for (const auto& r : rules_) {
    if (!r.dist.is_full() || r.dist.vocab_size() != fallback_.vocab_size()) {
      throw Error(ErrorCode::InvalidArgument, "table rule distribution has the wrong vocabulary");
    }
  }
  // Longest suffix first; stable so earlier rules win ties.
  std::stable_sort(rules_.begin(), rules_.end(),
                   [](const Rule& a, const Rule& b) { return a.suffix.size() > b.suffix.size(); });
}

TokenDistribution TableProvider::next_distribution(std::span<const TokenId> context) const {
  for (const auto& r : rules_) {
    if (ends_with(context, r.suffix)) return r.dist;
  }
  return fallback_;
}

// ---------------------------------------------------------------------------
// NgramModel

std::size_t NgramModel::KeyHash::operator()(const std::vector<TokenId>& key) const noexcept {
  std::size_t h = 0xCBF29CE484222325ULL;
  for (TokenId t : key) {
    h ^= static_cast<std::size_t>(static_cast<std::uint32_t>(t));
    h *= 0x100000001B3ULL;
  }
  return h;
}

NgramModel::NgramModel(std::size_t vocab_size, std::size_t order, double lambda, std::optional<TokenId> pad)
    : vocab_size_(vocab_size), order_(order), lambda_(lambda), pad_(pad) {
  if (vocab_size < 2) throw Error(ErrorCode::InvalidArgument, "n-gram vocab must have >= 2 tokens");
  if (order < 1) throw Error(ErrorCode::InvalidArgument, "n-gram order must be >= 1");
  if (!(lambda > 0.0)) throw Error(ErrorCode::InvalidArgument, "smoothing lambda must be > 0");
}

void NgramModel::add(std::span<const TokenId> window, TokenId next) {
  if (next < 0 || static_cast<std::size_t>(next) >= vocab_size_) {
    throw Error(ErrorCode::InvalidArgument, "training token outside vocab: " + std::to_string(next));
  }
  auto& entry = table_[std::vector<TokenId>(window.begin(), window.end())];
  auto it = std::find_if(entry.next.begin(), entry.next.end(), [next](const auto& p) { return p.first == next; });
  if (it == entry.next.end()) {
    entry.next.emplace_back(next, 1);
  } else {
    ++it->second;
  }
  ++entry.total;
}

NgramModel NgramModel::train_stream(std::span<const TokenId> stream, std::size_t vocab_size, std::size_t order,
                                    double smoothing_lambda) {
  if (stream.empty()) throw Error(ErrorCode::InvalidArgument, "empty training corpus");
  NgramModel m(vocab_size, order, smoothing_lambda, std::nullopt);
  for (std::size_t i = order; i < stream.size(); ++i) m.add(stream.subspan(i - order, order), stream[i]);
  return m;
}

NgramModel NgramModel::train_sequences(std::span<const std::vector<TokenId>> sequences, std::size_t vocab_size,
                                       std::size_t order, double smoothing_lambda, TokenId pad, TokenId eos) {
  const bool any = std::any_of(sequences.begin(), sequences.end(), [](const auto& s) { return !s.empty(); });
  if (!any) throw Error(ErrorCode::InvalidArgument, "empty training corpus");
  NgramModel m(vocab_size, order, smoothing_lambda, pad);
  std::vector<TokenId> padded;
  for (const auto& seq : sequences) {
    if (seq.empty()) continue;
    padded.assign(order, pad);
    padded.insert(padded.end(), seq.begin(), seq.end());
    padded.push_back(eos);
    const std::span<const TokenId> s(padded);
    for (std::size_t i = order; i < s.size(); ++i) m.add(s.subspan(i - order, order), s[i]);
  }
  return m;
}

std::vector<TokenId> NgramModel::key_for(std::span<const TokenId> context) const {
  std::vector<TokenId> key;
  key.reserve(order_);
  if (context.size() < order_) {
    if (!pad_) return {};  // no padding convention: treated as unseen
    key.assign(order_ - context.size(), *pad_);
    key.insert(key.end(), context.begin(), context.end());
  } else {
    key.assign(context.end() - static_cast<std::ptrdiff_t>(order_), context.end());
  }
  return key;
}

TokenDistribution NgramModel::next_distribution(std::span<const TokenId> context) const {
  const double v = static_cast<double>(vocab_size_);
  const auto key = key_for(context);
  const auto it = key.empty() ? table_.end() : table_.find(key);
  if (it == table_.end()) return TokenDistribution::full(std::vector<double>(vocab_size_, -std::log(v)));

  const double denom = std::log(static_cast<double>(it->second.total) + lambda_ * v);
  std::vector<double> lp(vocab_size_, std::log(lambda_) - denom);
  for (const auto& [tok, c] : it->second.next) {
    lp[static_cast<std::size_t>(tok)] = std::log(static_cast<double>(c) + lambda_) - denom;
  }
  return TokenDistribution::full(std::move(lp));
}

std::size_t NgramModel::count(std::span<const TokenId> context, TokenId token) const {
  const auto key = key_for(context);
  const auto it = key.empty() ? table_.end() : table_.find(key);
  if (it == table_.end()) return 0;
  for (const auto& [tok, c] : it->second.next) {
    if (tok == token) return c;
  }
  return 0;
}

bool NgramModel::has_context(std::span<const TokenId> context) const {
  const auto key = key_for(context);
  return !key.empty() && table_.contains(key);
}

// ---------------------------------------------------------------------------
// BackoffNgram

BackoffNgram BackoffNgram::train_sequences(std::span<const std::vector<TokenId>> sequences, std::size_t vocab_size,
                                           std::size_t max_order, double smoothing_lambda, TokenId pad, TokenId eos) {
  if (max_order < 1) throw Error(ErrorCode::InvalidArgument, "backoff order must be >= 1");
  std::vector<NgramModel> models;
  models.reserve(max_order);
  for (std::size_t k = 1; k <= max_order; ++k) {
    models.push_back(NgramModel::train_sequences(sequences, vocab_size, k, smoothing_lambda, pad, eos));
  }
  return BackoffNgram(std::move(models));
}

TokenDistribution BackoffNgram::next_distribution(std::span<const TokenId> context) const {
  for (auto it = models_.rbegin(); it != models_.rend(); ++it) {
    if (it->has_context(context)) return it->next_distribution(context);
  }
  return models_.front().next_distribution(context);  // unseen everywhere: uniform
}

// ---------------------------------------------------------------------------
// MixtureProvider

MixtureProvider::MixtureProvider(std::vector<std::shared_ptr<const Provider>> components, std::vector<double> weights)
    : components_(std::move(components)), weights_(std::move(weights)) {
  if (components_.empty() || components_.size() != weights_.size()) {
    throw Error(ErrorCode::InvalidArgument, "mixture needs one weight per component");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < components_.size(); ++i) {
    if (!components_[i] || components_[i]->vocab_size() != components_.front()->vocab_size()) {
      throw Error(ErrorCode::InvalidArgument, "mixture components must share a vocabulary");
    }
    if (weights_[i] < 0.0) throw Error(ErrorCode::InvalidArgument, "negative mixture weight");
    total += weights_[i];
  }
  if (!(total > 0.0)) throw Error(ErrorCode::InvalidArgument, "mixture weights sum to zero");
  for (double& w : weights_) w /= total;
}

TokenDistribution MixtureProvider::next_distribution(std::span<const TokenId> context) const {
  std::vector<double> probs(vocab_size(), 0.0);
  for (std::size_t i = 0; i < components_.size(); ++i) {
    if (weights_[i] == 0.0) continue;
    const auto d = components_[i]->next_distribution(context);
    if (!d.is_full()) throw Error(ErrorCode::SupportMismatch, "mixture components must have full support");
    for (std::size_t x = 0; x < probs.size(); ++x) probs[x] += weights_[i] * std::exp(d.log_probs()[x]);
  }
  return TokenDistribution::from_probs(probs);
}

// ---------------------------------------------------------------------------
// HintCopyProvider

HintCopyProvider::HintCopyProvider(std::shared_ptr<const Provider> base, Params params)
    : base_(std::move(base)), params_(params) {
  if (!base_) throw Error(ErrorCode::InvalidArgument, "hint-copy provider needs a base");
  const auto v = static_cast<TokenId>(base_->vocab_size());
  if (params_.open < 0 || params_.open >= v || params_.close < 0 || params_.close >= v || params_.open == params_.close) {
    throw Error(ErrorCode::InvalidArgument, "hint markers must be distinct in-vocab tokens");
  }
}

TokenDistribution HintCopyProvider::next_distribution(std::span<const TokenId> context) const {
  auto dist = base_->next_distribution(context);
  const auto open = std::find(context.begin(), context.end(), params_.open);
  if (open == context.end() || !dist.is_full()) return dist;
  const auto close = std::find(open + 1, context.end(), params_.close);
  if (close == context.end()) return dist;
  const std::span<const TokenId> region(open + 1, close);
  if (region.empty()) return dist;

  std::vector<double> logits(dist.log_probs().begin(), dist.log_probs().end());
  std::unordered_set<TokenId> seen;
  for (TokenId t : region) {
    if (seen.insert(t).second) logits[static_cast<std::size_t>(t)] += params_.bag_bias;
  }
  if (close + 1 != context.end()) {
    const TokenId last = context.back();
    for (std::size_t i = region.size() - 1; i-- > 0;) {
      if (region[i] == last) {
        logits[static_cast<std::size_t>(region[i + 1])] += params_.copy_bias;
        break;
      }
    }
  }
  return TokenDistribution::from_logits(logits);
}

}  // namespace ddt
