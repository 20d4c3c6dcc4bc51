// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#include "ddt/idft.hpp"

#include <cmath>
#include <string>

#include "ddt/error.hpp"
#include "json_util.hpp"

namespace ddt::idft {

Scheme parse_scheme(std::string_view name) {
  if (name == "sft") return Scheme::Sft;
  if (name == "dft") return Scheme::Dft;
  if (name == "idft") return Scheme::Idft;
  if (name == "hard-truncate" || name == "hard_truncate") return Scheme::HardTruncate;
  throw Error(ErrorCode::InvalidArgument, "unknown weighting scheme: " + std::string(name));
}

std::string_view to_string(Scheme scheme) noexcept {
  switch (scheme) {
    case Scheme::Sft: return "sft";
    case Scheme::Dft: return "dft";
    case Scheme::Idft: return "idft";
    case Scheme::HardTruncate: return "hard-truncate";
  }
  return "?";
}

void WeightConfig::validate() const {
  if (!(clip_bound > 0.0)) throw Error(ErrorCode::InvalidArgument, "clip bound must be positive");
  if (!(logprob_floor < 0.0)) throw Error(ErrorCode::InvalidArgument, "log-prob floor must be negative");
}

double gamma_of_phi(double phi_clipped) noexcept { return std::exp(-phi_clipped); }

double idft_weight(double log_prob, double gamma) noexcept {
  if (gamma == 0.0) return 1.0;
  return std::exp(gamma * log_prob);
}

double idft_token_loss(double log_prob, double gamma) noexcept {
  if (log_prob == 0.0) return 0.0;
  return -idft_weight(log_prob, gamma) * log_prob;
}

double sequence_loss(std::span<const TokenWeightRecord> records, const std::vector<bool>& mask) {
  if (records.empty()) throw Error(ErrorCode::EmptySequence, "no tokens");
  if (!mask.empty() && mask.size() != records.size()) {
    throw Error(ErrorCode::InvalidArgument, "mask length does not match the sequence");
  }
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    total += records[i].loss;
    ++n;
  }
  if (n == 0) throw Error(ErrorCode::EmptySequence, "every position is masked");
  return total / static_cast<double>(n);
}

double gradient_scale(const WeightConfig& config, double log_prob, double phi_clipped) {
  const double lp = std::max(log_prob, config.logprob_floor);
  switch (config.scheme) {
    case Scheme::Sft: return 1.0;
    case Scheme::Dft: return std::exp(lp);
    case Scheme::Idft: return idft_weight(lp, gamma_of_phi(phi_clipped));
    case Scheme::HardTruncate: return phi_clipped > config.tau ? 1.0 : 0.0;
  }
  return 1.0;
}

std::vector<TokenWeightRecord> weight_stream(const SequenceScore& scored, const WeightConfig& config) {
  config.validate();
  std::vector<TokenWeightRecord> out;
  out.reserve(scored.records.size());
  for (const auto& r : scored.records) {
    TokenWeightRecord w;
    w.log_prob = std::max(r.log_prob, config.logprob_floor);
    w.phi_clipped = clip_phi(r.phi, config.clip_bound);
    w.gamma = gamma_of_phi(w.phi_clipped);
    w.weight = gradient_scale(config, w.log_prob, w.phi_clipped);
    w.loss = w.log_prob == 0.0 ? 0.0 : -w.weight * w.log_prob;
    out.push_back(w);
  }
  return out;
}

std::string export_line(std::string_view id, std::span<const TokenId> token_ids,
                        std::span<const TokenWeightRecord> records) {
  if (token_ids.size() != records.size()) throw Error(ErrorCode::InvalidArgument, "token/record length mismatch");
  detail::ordered_json row;
  row["id"] = std::string(id);
  row["token_ids"] = std::vector<TokenId>(token_ids.begin(), token_ids.end());
  row["log_probs"] = detail::array9(records, [](const auto& r) { return r.log_prob; });
  row["phi"] = detail::array9(records, [](const auto& r) { return r.phi_clipped; });
  row["gamma"] = detail::array9(records, [](const auto& r) { return r.gamma; });
  row["weight"] = detail::array9(records, [](const auto& r) { return r.weight; });
  row["loss"] = detail::array9(records, [](const auto& r) { return r.loss; });
  return row.dump();
}

}  // namespace ddt::idft
