// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#pragma once

// Token-level centered log-likelihood (phi = log p(x) + H[p]) and the sequential
// in/out-of-distribution test built on its cumulative sum. All quantities are in nats.

#include <map>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "ddt/distribution.hpp"

namespace ddt {

inline constexpr double kDefaultClipBound = 10.0;

struct PhiRecord {
  TokenId token_id = 0;
  double log_prob = 0.0;
  double entropy = 0.0;
  double phi = 0.0;
  double phi_clipped = 0.0;
  // Var(phi | context) under the model itself; accumulated into V_L.
  double conditional_variance = 0.0;
  // Entropy and variance were estimated from a truncated support.
  bool approximate = false;
};

enum class Verdict { InDistribution, OutOfDistribution };

/// "in_distribution" / "out_of_distribution".
std::string_view to_string(Verdict verdict) noexcept;

struct FixedThreshold {
  double gamma = 0.0;
};
struct AlphaThreshold {
  double alpha = 0.05;
};

struct DiscriminantConfig {
  double clip_bound = kDefaultClipBound;
  std::variant<FixedThreshold, AlphaThreshold> threshold = AlphaThreshold{0.05};
  std::vector<double> report_thresholds = {-1.0, -3.0, -5.0};

  void validate() const;
};

struct SequenceScore {
  std::vector<PhiRecord> records;
  std::vector<double> trajectory;  // running sums of raw phi
  double s_final = 0.0;
  double s_clipped_final = 0.0;
  double v_cumulative = 0.0;
  double threshold = 0.0;
  Verdict verdict = Verdict::InDistribution;
};

struct ContextEntry {
  TokenDistribution p;  // in-distribution next-token law for this context
  TokenDistribution q;  // shifted law
  double weight = 0.0;
};

/// Finite mixture of contexts; weights sum to one and every p/q pair shares a vocabulary.
class ContextEnsemble {
 public:
  explicit ContextEnsemble(std::vector<ContextEntry> entries);
  std::span<const ContextEntry> entries() const noexcept { return entries_; }

 private:
  std::vector<ContextEntry> entries_;
};

struct VarianceResult {
  double value = 0.0;
  bool approximate = false;
};

struct SnrDecomposition {
  double snr_ll = 0.0;
  double snr_cll = 0.0;
  double sigma_h_sq = 0.0;         // Var_c H(p_c)
  double sigma_eps_sq_mean = 0.0;  // E_c Var_{x~p_c} log p_c(x)
  double delta = 0.0;              // E[S|H1] - E[S|H0], identical for LL and CLL
};

struct ExtremeTokenReport {
  double avg_phi = 0.0;
  // fraction of records with phi >= threshold, keyed by threshold
  std::map<double, double> fraction_ge;
};

/// Shannon entropy. Truncated support spreads the unreported mass uniformly over the tail.
double entropy(const TokenDistribution& dist);

double clip_phi(double phi, double clip_bound) noexcept;

/// Throws UnsupportedToken when `token` is not listed in a truncated support.
PhiRecord phi(const TokenDistribution& dist, TokenId token, double clip_bound = kDefaultClipBound);

/// Running prefix sums of phi (or phi_clipped). Throws EmptySequence.
std::vector<double> cumulative_score(std::span<const PhiRecord> records, bool use_clipped);

/// E_{x~q}[log p(x) + H(p)] = -KL(q||p) + H(p) - H(q). Returns -inf when q charges a token
/// p gives zero probability.
double expected_phi_under(const TokenDistribution& q, const TokenDistribution& p);

double kl_divergence(const TokenDistribution& q, const TokenDistribution& p);

/// Sum_x p(x) phi(x)^2, the conditional variance of phi under p.
VarianceResult phi_variance(const TokenDistribution& p);

/// exp(-gamma^2 / (2 (V + B gamma / 3))).
double freedman_bound(double gamma, double v_cumulative, double clip_bound);

/// Positive root gamma of freedman_bound(gamma, V, B) = alpha.
double threshold_for_alpha(double alpha, double v_cumulative, double clip_bound);

SequenceScore classify_sequence(std::span<const PhiRecord> records, const DiscriminantConfig& config);

/// (mean(h1) - mean(h0))^2 / var(h0) with the 1/(n-1) variance.
double empirical_snr(std::span<const double> scores_h0, std::span<const double> scores_h1);

SnrDecomposition analytic_snr_decomposition(const ContextEnsemble& ensemble);

/// Overlap area of two unit-variance normals separated by sqrt(snr): 2 Phi(-sqrt(snr/2)).
double overlap_from_snr(double snr);

ExtremeTokenReport extreme_token_report(std::span<const PhiRecord> records, std::span<const double> thresholds);

}  // namespace ddt
