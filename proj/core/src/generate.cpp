// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#include "ddt/generate.hpp"

#include <algorithm>

namespace ddt {

Generation generate(const Provider& provider, std::span<const TokenId> prompt, const SamplerConfig& sampler,
                    TokenId eos, std::size_t max_tokens, CounterRng& rng, std::span<const TokenId> stop_sequence) {
  ContextState ctx{std::vector<TokenId>(prompt.begin(), prompt.end())};
  Generation out;
  while (out.tokens.size() < max_tokens) {
    const TokenId tok = sample(provider.next_distribution(ctx), sampler, rng);
    if (tok == eos) {
      out.reason = StopReason::Eos;
      return out;
    }
    ctx.push(tok);
    out.tokens.push_back(tok);
    if (!stop_sequence.empty() && out.tokens.size() >= stop_sequence.size() &&
        std::equal(stop_sequence.begin(), stop_sequence.end(), out.tokens.end() - stop_sequence.size())) {
      out.reason = StopReason::StopSequence;
      return out;
    }
  }
  out.reason = StopReason::Length;
  return out;
}

}  // namespace ddt
