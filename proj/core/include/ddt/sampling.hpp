// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#pragma once

#include <cstdint>
#include <optional>

#include "ddt/distribution.hpp"
#include "ddt/rng.hpp"

namespace ddt {

struct SamplerConfig {
  double temperature = 1.0;  // 0 = greedy
  std::optional<std::size_t> top_k;
  std::optional<double> top_p;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Draws one token: temperature -> top-k -> top-p -> renormalize -> draw.
///
/// Greedy (temperature 0 or top_k 1) breaks ties toward the lowest id and consumes no
/// randomness. Otherwise exactly one uniform is taken from `rng`. Truncated supports are
/// sampled over their listed tokens only.
TokenId sample(const TokenDistribution& dist, const SamplerConfig& sampler, CounterRng& rng);

/// Highest-probability token, lowest id on ties.
TokenId argmax(const TokenDistribution& dist);

}  // namespace ddt
