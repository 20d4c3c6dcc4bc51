// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#pragma once

// Per-token loss weighting for fine-tuning. Every scheme is a weight w_t on the
// cross-entropy term, L = -w_t log p_t:
//
//   sft            w = 1
//   dft            w = p
//   idft           w = p^gamma, gamma = exp(-phi_clipped)
//   hard_truncate  w = 1[phi_clipped > tau]
//
// Weights are constants with respect to model parameters (detached), so the gradient of
// the weighted loss is w times the cross-entropy gradient.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ddt/stats.hpp"

namespace ddt::idft {

enum class Scheme { Sft, Dft, Idft, HardTruncate };

Scheme parse_scheme(std::string_view name);
std::string_view to_string(Scheme scheme) noexcept;

struct WeightConfig {
  Scheme scheme = Scheme::Idft;
  double tau = -5.0;  // hard_truncate only
  double clip_bound = kDefaultClipBound;
  double logprob_floor = kLogProbFloor;

  void validate() const;
};

struct TokenWeightRecord {
  double log_prob = 0.0;
  double phi_clipped = 0.0;
  double gamma = 1.0;
  double weight = 1.0;
  double loss = 0.0;
};

double gamma_of_phi(double phi_clipped) noexcept;

/// p^gamma evaluated as exp(gamma * log p).
double idft_weight(double log_prob, double gamma) noexcept;

/// -p^gamma log p, >= 0 for log_prob <= 0.
double idft_token_loss(double log_prob, double gamma) noexcept;

/// Mean loss over unmasked positions; an empty mask means all positions count.
double sequence_loss(std::span<const TokenWeightRecord> records, const std::vector<bool>& mask = {});

/// Factor multiplying the plain cross-entropy gradient.
double gradient_scale(const WeightConfig& config, double log_prob, double phi_clipped);

std::vector<TokenWeightRecord> weight_stream(const SequenceScore& scored, const WeightConfig& config);

/// One line of the weight export: {id, token_ids, log_probs, phi, gamma, weight, loss}
/// in that order, numbers at 9 significant digits. `phi` carries phi_clipped.
std::string export_line(std::string_view id, std::span<const TokenId> token_ids,
                        std::span<const TokenWeightRecord> records);

}  // namespace ddt::idft
