// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#pragma once

#include <span>
#include <vector>

#include "ddt/providers.hpp"
#include "ddt/sampling.hpp"

namespace ddt {

enum class StopReason { Eos, StopSequence, Length };

struct Generation {
  std::vector<TokenId> tokens;  // eos excluded, stop sequence included
  StopReason reason = StopReason::Length;
};

/// Plain single-stream sampling from `provider` after `prompt`.
Generation generate(const Provider& provider, std::span<const TokenId> prompt, const SamplerConfig& sampler,
                    TokenId eos, std::size_t max_tokens, CounterRng& rng,
                    std::span<const TokenId> stop_sequence = {});

}  // namespace ddt
