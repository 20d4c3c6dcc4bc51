// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#include "ddt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "ddt/error.hpp"

namespace ddt {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// p(x) * floored(log p(x)) with 0 log 0 = 0.
double plogp(double log_prob) noexcept {
  if (log_prob == -kInf) return 0.0;
  return std::exp(log_prob) * floored(log_prob);
}

// Per-token mass and log-mass of the uniform tail estimate, or {0, -inf} when empty.
std::pair<double, double> tail_token(const TailSupport& tail) noexcept {
  if (tail.tail_token_count == 0 || tail.tail_log_mass == -kInf) return {0.0, -kInf};
  const double mass = std::exp(tail.tail_log_mass);
  return {mass, tail.tail_log_mass - std::log(static_cast<double>(tail.tail_token_count))};
}

void require_full_pair(const TokenDistribution& q, const TokenDistribution& p) {
  if (!q.is_full() || !p.is_full()) throw Error(ErrorCode::InvalidArgument, "full support required");
  if (q.vocab_size() != p.vocab_size()) throw Error(ErrorCode::InvalidArgument, "vocab size mismatch");
}

}  // namespace

void DiscriminantConfig::validate() const {
  if (!(clip_bound > 0.0)) throw Error(ErrorCode::InvalidArgument, "clip bound must be positive");
  if (const auto* a = std::get_if<AlphaThreshold>(&threshold)) {
    if (!(a->alpha > 0.0 && a->alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0,1)");
  } else if (std::get<FixedThreshold>(threshold).gamma < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "fixed threshold must be >= 0");
  }
}

ContextEnsemble::ContextEnsemble(std::vector<ContextEntry> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw Error(ErrorCode::InvalidArgument, "empty ensemble");
  double total = 0.0;
  for (const auto& e : entries_) {
    if (e.weight < 0.0) throw Error(ErrorCode::InvalidArgument, "negative context weight");
    if (e.p.vocab_size() != e.q.vocab_size()) throw Error(ErrorCode::InvalidArgument, "p/q vocab mismatch");
    total += e.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::InvalidArgument, "context weights must sum to 1");
}

double entropy(const TokenDistribution& dist) {
  double h = 0.0;
  for (double lp : dist.log_probs()) h -= plogp(lp);
  if (const auto& tail = dist.tail()) {
    const auto [mass, per_token_log] = tail_token(*tail);
    if (mass > 0.0) h -= mass * floored(per_token_log);
  }
  return std::max(h, 0.0);
}

double clip_phi(double phi, double clip_bound) noexcept { return std::clamp(phi, -clip_bound, clip_bound); }

VarianceResult phi_variance(const TokenDistribution& p) {
  const double h = entropy(p);
  double v = 0.0;
  for (double lp : p.log_probs()) {
    if (lp == -kInf) continue;
    const double f = floored(lp) + h;
    v += std::exp(lp) * f * f;
  }
  VarianceResult out{v, false};
  if (const auto& tail = p.tail()) {
    const auto [mass, per_token_log] = tail_token(*tail);
    if (mass > 0.0) {
      const double f = floored(per_token_log) + h;
      out.value += mass * f * f;
    }
    out.approximate = true;
  }
  return out;
}

PhiRecord phi(const TokenDistribution& dist, TokenId token, double clip_bound) {
  if (!(clip_bound > 0.0)) throw Error(ErrorCode::InvalidArgument, "clip bound must be positive");
  if (token < 0 || static_cast<std::size_t>(token) >= dist.vocab_size()) {
    throw Error(ErrorCode::InvalidArgument, "token id outside vocab: " + std::to_string(token));
  }
  const auto lp = dist.log_prob(token);
  if (!lp) throw Error(ErrorCode::UnsupportedToken, "token " + std::to_string(token) + " not in reported support");

  PhiRecord r;
  r.token_id = token;
  r.log_prob = floored(*lp);
  r.entropy = entropy(dist);
  r.phi = r.log_prob + r.entropy;
  r.phi_clipped = clip_phi(r.phi, clip_bound);
  const auto var = phi_variance(dist);
  r.conditional_variance = var.value;
  r.approximate = !dist.is_full();
  return r;
}

std::vector<double> cumulative_score(std::span<const PhiRecord> records, bool use_clipped) {
  if (records.empty()) throw Error(ErrorCode::EmptySequence, "no records to accumulate");
  std::vector<double> out;
  out.reserve(records.size());
  double s = 0.0;
  for (const auto& r : records) {
    s += use_clipped ? r.phi_clipped : r.phi;
    out.push_back(s);
  }
  return out;
}

double expected_phi_under(const TokenDistribution& q, const TokenDistribution& p) {
  require_full_pair(q, p);
  const double hp = entropy(p);
  double e = 0.0;
  for (std::size_t x = 0; x < p.vocab_size(); ++x) {
    const double lq = q.log_probs()[x];
    if (lq == -kInf) continue;
    const double lp = p.log_probs()[x];
    if (lp == -kInf) return -kInf;  // q charges a token p excludes
    e += std::exp(lq) * (floored(lp) + hp);
  }
  return e;
}

double kl_divergence(const TokenDistribution& q, const TokenDistribution& p) {
  require_full_pair(q, p);
  double kl = 0.0;
  for (std::size_t x = 0; x < p.vocab_size(); ++x) {
    const double lq = q.log_probs()[x];
    if (lq == -kInf) continue;
    const double lp = p.log_probs()[x];
    if (lp == -kInf) return kInf;
    kl += std::exp(lq) * (floored(lq) - floored(lp));
  }
  return kl;
}

double freedman_bound(double gamma, double v_cumulative, double clip_bound) {
  if (gamma < 0.0 || v_cumulative < 0.0 || !(clip_bound > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "freedman_bound needs gamma >= 0, V >= 0, B > 0");
  }
  if (gamma == 0.0) return 1.0;
  return std::exp(-(gamma * gamma) / (2.0 * (v_cumulative + clip_bound * gamma / 3.0)));
}

double threshold_for_alpha(double alpha, double v_cumulative, double clip_bound) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0,1]");
  if (v_cumulative < 0.0 || !(clip_bound > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "threshold_for_alpha needs V >= 0, B > 0");
  }
  const double log_inv_alpha = -std::log(alpha);
  if (log_inv_alpha == 0.0) return 0.0;
  // gamma^2 - b gamma - c = 0
  const double b = 2.0 * clip_bound * log_inv_alpha / 3.0;
  const double c = 2.0 * v_cumulative * log_inv_alpha;
  return 0.5 * (b + std::sqrt(b * b + 4.0 * c));
}

SequenceScore classify_sequence(std::span<const PhiRecord> records, const DiscriminantConfig& config) {
  config.validate();
  if (records.empty()) throw Error(ErrorCode::EmptySequence, "cannot classify an empty sequence");

  SequenceScore score;
  score.records.assign(records.begin(), records.end());
  for (auto& r : score.records) r.phi_clipped = clip_phi(r.phi, config.clip_bound);
  score.trajectory = cumulative_score(score.records, false);
  score.s_final = score.trajectory.back();
  for (const auto& r : score.records) {
    score.s_clipped_final += r.phi_clipped;
    score.v_cumulative += r.conditional_variance;
  }
  if (const auto* fixed = std::get_if<FixedThreshold>(&config.threshold)) {
    score.threshold = fixed->gamma;
  } else {
    score.threshold = threshold_for_alpha(std::get<AlphaThreshold>(config.threshold).alpha, score.v_cumulative,
                                          config.clip_bound);
  }
  score.verdict = score.s_clipped_final <= -score.threshold ? Verdict::OutOfDistribution : Verdict::InDistribution;
  return score;
}

double empirical_snr(std::span<const double> scores_h0, std::span<const double> scores_h1) {
  if (scores_h0.size() < 2 || scores_h1.empty()) {
    throw Error(ErrorCode::InvalidArgument, "empirical_snr needs >= 2 null scores and >= 1 alternative score");
  }
  const auto mean = [](std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  const double m0 = mean(scores_h0);
  const double m1 = mean(scores_h1);
  double ss = 0.0;
  for (double x : scores_h0) ss += (x - m0) * (x - m0);
  const double var0 = ss / static_cast<double>(scores_h0.size() - 1);
  if (!(var0 > 0.0)) throw Error(ErrorCode::DegenerateVariance, "null scores have zero variance");
  return (m1 - m0) * (m1 - m0) / var0;
}

SnrDecomposition analytic_snr_decomposition(const ContextEnsemble& ensemble) {
  double mean_h = 0.0;
  SnrDecomposition out;
  for (const auto& e : ensemble.entries()) {
    require_full_pair(e.q, e.p);
    mean_h += e.weight * entropy(e.p);
    out.sigma_eps_sq_mean += e.weight * phi_variance(e.p).value;
    out.delta += e.weight * expected_phi_under(e.q, e.p);
  }
  for (const auto& e : ensemble.entries()) {
    const double d = entropy(e.p) - mean_h;
    out.sigma_h_sq += e.weight * d * d;
  }
  if (!(out.sigma_eps_sq_mean > 0.0)) {
    throw Error(ErrorCode::DegenerateVariance, "ensemble has no intrinsic token noise");
  }
  const double signal = out.delta * out.delta;
  out.snr_cll = signal / out.sigma_eps_sq_mean;
  out.snr_ll = signal / (out.sigma_h_sq + out.sigma_eps_sq_mean);
  return out;
}

double overlap_from_snr(double snr) {
  if (snr < 0.0 || std::isnan(snr)) throw Error(ErrorCode::InvalidArgument, "snr must be >= 0");
  return std::erfc(std::sqrt(snr) / 2.0);
}

ExtremeTokenReport extreme_token_report(std::span<const PhiRecord> records, std::span<const double> thresholds) {
  if (records.empty()) throw Error(ErrorCode::EmptySequence, "no records for extreme-token report");
  ExtremeTokenReport report;
  for (const auto& r : records) report.avg_phi += r.phi;
  report.avg_phi /= static_cast<double>(records.size());
  for (double tau : thresholds) {
    const auto n = std::count_if(records.begin(), records.end(), [tau](const PhiRecord& r) { return r.phi >= tau; });
    report.fraction_ge[tau] = static_cast<double>(n) / static_cast<double>(records.size());
  }
  return report;
}

std::string_view to_string(Verdict verdict) noexcept {
  return verdict == Verdict::InDistribution ? "in_distribution" : "out_of_distribution";
}

}  // namespace ddt
