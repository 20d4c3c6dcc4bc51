// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "ddt/providers.hpp"

namespace ddt {

struct RemoteSpec {
  std::string endpoint_url;  // full URL of a completions endpoint, e.g. http://host:8000/v1/completions
  std::string model_name;
  std::size_t top_logprob_count = 5;
  int timeout_ms = 30000;
  std::string api_key_env_var;  // sent as a bearer token when set and non-empty
  std::size_t vocab_size = 0;
  int max_retries = 2;
  std::size_t max_in_flight = 8;

  void validate() const;
};

/// Client for a completion-style HTTP endpoint that reports per-position top-N log-probs.
///
/// Request body: {model, prompt: [token ids], max_tokens, temperature, logprobs: N, echo,
/// return_tokens_as_token_ids: true}. Response: choices[0].logprobs.top_logprobs is a list
/// (one per position) of objects mapping "token_id:<id>" (or "<id>") to a log-probability.
/// Generation queries one position at a time; scoring uses echo over prompt + continuation.
class RemoteProvider final : public Provider {
 public:
  explicit RemoteProvider(RemoteSpec spec);
  ~RemoteProvider() override;

  std::size_t vocab_size() const override { return spec_.vocab_size; }
  TokenDistribution next_distribution(std::span<const TokenId> context) const override;
  using Provider::next_distribution;
  std::vector<TokenDistribution> score_continuation(std::span<const TokenId> prompt,
                                                    std::span<const TokenId> continuation) const override;

  /// Parses "token_id:17" or "17". Throws ProtocolError.
  static TokenId parse_token_key(std::string_view key);

 private:
  struct Impl;

  RemoteSpec spec_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ddt
