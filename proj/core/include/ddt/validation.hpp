// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ddt/providers.hpp"
#include "ddt/rng.hpp"
#include "ddt/stats.hpp"

namespace ddt::validation {

/// Box-Muller from two uniforms.
double standard_normal(CounterRng& rng);

/// Softmax of `scale` times standard normal logits.
TokenDistribution random_distribution(CounterRng& rng, std::size_t vocab_size, double scale = 2.0);

/// Order-2 n-gram trained on a stream drawn from a random first-order Markov chain.
std::shared_ptr<const NgramModel> toy_ngram(std::uint64_t seed, std::size_t vocab_size = 16,
                                            std::size_t stream_length = 20000);

/// Wraps a provider and scales every probability by `factor` without renormalizing.
class UnnormalizedProvider final : public Provider {
 public:
  UnnormalizedProvider(std::shared_ptr<const Provider> base, double factor);
  std::size_t vocab_size() const override { return base_->vocab_size(); }
  TokenDistribution next_distribution(std::span<const TokenId> context) const override;
  using Provider::next_distribution;

 private:
  std::shared_ptr<const Provider> base_;
  double log_factor_;
};

/// Samples `length` tokens from `provider` (temperature 1) starting from an empty context
/// and records phi of each sampled token.
std::vector<PhiRecord> self_sample(const Provider& provider, std::size_t length, CounterRng& rng,
                                   double clip_bound = kDefaultClipBound);

struct CheckResult {
  std::string name;
  bool passed = false;
  double metric = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct TheoryOptions {
  std::uint64_t seed = 0;
  std::size_t trials = 100000;  // self-sampled tokens in the martingale check
  std::size_t coverage_sequences = 10000;
  std::size_t coverage_length = 64;
  bool inject_fault = false;    // feed unnormalized distributions through every check
};

struct TheoryReport {
  std::vector<CheckResult> checks;

  bool passed() const;
  std::string to_json() const;
};

/// zero_mean, drift_identity, martingale, snr_dominance, freedman_coverage, overlap.
TheoryReport validate_theory(const TheoryOptions& options);

/// Monte-Carlo-free moments of LL and CLL over an ensemble, by enumeration.
SnrDecomposition brute_force_snr(const ContextEnsemble& ensemble);

}  // namespace ddt::validation
