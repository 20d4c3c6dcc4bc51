// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#include "ddt/validation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "ddt/error.hpp"
#include "ddt/sampling.hpp"
#include "json_util.hpp"

namespace ddt::validation {
namespace {

constexpr double kFaultFactor = 1.3;

TokenDistribution maybe_fault(TokenDistribution d, bool fault) {
  if (!fault) return d;
  std::vector<double> lp(d.log_probs().begin(), d.log_probs().end());
  for (double& v : lp) v += std::log(kFaultFactor);
  return TokenDistribution::unchecked_full(std::move(lp));
}

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

CheckResult zero_mean(CounterRng rng, bool fault) {
  CheckResult c{"zero_mean", true, 0.0, 1e-10, ""};
  for (int i = 0; i < 1000; ++i) {
    const std::size_t v = 2 + static_cast<std::size_t>(rng() % 63);
    const TokenDistribution p = maybe_fault(random_distribution(rng, v), fault);
    const double h = entropy(p);
    double m = 0.0;
    for (double lp : p.log_probs()) m += std::exp(lp) * (lp + h);
    c.metric = std::max(c.metric, std::abs(m));
  }
  c.passed = c.metric < c.tolerance;
  c.detail = fmt("max |sum p phi| over 1000 distributions = %.3g", c.metric);
  return c;
}

CheckResult drift_identity(CounterRng rng, bool fault) {
  CheckResult c{"drift_identity", true, 0.0, 1e-10, ""};
  for (int i = 0; i < 1000; ++i) {
    const std::size_t v = 2 + static_cast<std::size_t>(rng() % 63);
    const TokenDistribution q = random_distribution(rng, v);
    const TokenDistribution p = maybe_fault(random_distribution(rng, v), fault);
    // Direct expectation, independent of expected_phi_under's implementation.
    const double hp = entropy(p);
    double direct = 0.0;
    for (std::size_t x = 0; x < v; ++x) direct += std::exp(q.log_prob_at(x)) * (p.log_prob_at(x) + hp);
    const double identity = -kl_divergence(q, p) + hp - entropy(q);
    c.metric = std::max({c.metric, std::abs(direct - identity), std::abs(expected_phi_under(q, p) - identity)});
  }
  c.passed = c.metric < c.tolerance;
  c.detail = fmt("max deviation from -KL + H(p) - H(q) = %.3g", c.metric);
  return c;
}

CheckResult martingale(const Provider& provider, std::size_t n, CounterRng rng) {
  const auto records = self_sample(provider, n, rng);
  double sum = 0.0;
  double var = 0.0;
  for (const auto& r : records) {
    sum += r.phi;
    var += r.conditional_variance;
  }
  const double mean = sum / static_cast<double>(n);
  const double bound = 4.0 * std::sqrt(var / static_cast<double>(n) / static_cast<double>(n));
  CheckResult c{"martingale", std::abs(mean) <= bound, std::abs(mean), bound, ""};
  c.detail = fmt("|mean phi| = %.4g over the 4-sigma bound %.4g", std::abs(mean), bound);
  c.detail += " (N = " + std::to_string(n) + ")";
  return c;
}

ContextEntry sharpened_entry(CounterRng& rng, std::size_t v, double weight) {
  TokenDistribution p = random_distribution(rng, v);
  std::vector<double> lq(p.log_probs().begin(), p.log_probs().end());
  for (double& x : lq) x *= 2.0;
  return {std::move(p), TokenDistribution::from_logits(lq), weight};
}

CheckResult snr_dominance(CounterRng rng, bool fault) {
  CheckResult c{"snr_dominance", true, 0.0, 1e-9, ""};
  std::size_t dominated = 0;
  double worst_match = 0.0;
  int built = 0;
  while (built < 100) {
    const std::size_t v = 3 + static_cast<std::size_t>(rng() % 30);
    const std::size_t k = 2 + static_cast<std::size_t>(rng() % 6);
    std::vector<ContextEntry> entries;
    for (std::size_t j = 0; j < k; ++j) entries.push_back(sharpened_entry(rng, v, 1.0 / static_cast<double>(k)));
    if (fault) {
      for (auto& e : entries) e.p = maybe_fault(std::move(e.p), true);
    }
    const ContextEnsemble ens(std::move(entries));
    const SnrDecomposition a = analytic_snr_decomposition(ens);
    if (!(a.sigma_h_sq > 0.0 && a.delta > 0.0)) continue;
    ++built;
    const SnrDecomposition b = brute_force_snr(ens);
    if (a.snr_cll > a.snr_ll) ++dominated;
    worst_match = std::max({worst_match, std::abs(a.snr_cll - b.snr_cll), std::abs(a.snr_ll - b.snr_ll)});
  }
  // Equal entropies: permutations of one base distribution.
  double worst_equal = 0.0;
  for (int i = 0; i < 20; ++i) {
    const std::size_t v = 3 + static_cast<std::size_t>(rng() % 30);
    const ContextEntry base = sharpened_entry(rng, v, 0.25);
    std::vector<ContextEntry> entries;
    for (int j = 0; j < 4; ++j) {
      std::vector<double> lp(base.p.log_probs().begin(), base.p.log_probs().end());
      std::vector<double> lq(base.q.log_probs().begin(), base.q.log_probs().end());
      std::rotate(lp.begin(), lp.begin() + j % static_cast<int>(v), lp.end());
      std::rotate(lq.begin(), lq.begin() + j % static_cast<int>(v), lq.end());
      entries.push_back({TokenDistribution::full(lp), TokenDistribution::full(lq), 0.25});
    }
    const SnrDecomposition a = analytic_snr_decomposition(ContextEnsemble(std::move(entries)));
    worst_equal = std::max(worst_equal, std::abs(a.snr_cll - a.snr_ll));
  }
  c.metric = std::max(worst_match, worst_equal);
  c.passed = dominated == 100 && c.metric < c.tolerance;
  c.detail = "snr_cll > snr_ll in " + std::to_string(dominated) + "/100 ensembles; " +
             fmt("max |analytic - enumeration| = %.3g, max |cll - ll| at equal entropy = %.3g", worst_match,
                 worst_equal);
  return c;
}

CheckResult freedman_coverage(const Provider& provider, std::size_t sequences, std::size_t length, CounterRng rng) {
  std::vector<double> s(sequences);
  double v_max = 0.0;
  for (std::size_t i = 0; i < sequences; ++i) {
    CounterRng seq_rng = derive_stream(rng, "sequence-" + std::to_string(i));
    const auto records = self_sample(provider, length, seq_rng);
    double sum = 0.0;
    double var = 0.0;
    for (const auto& r : records) {
      sum += r.phi_clipped;
      var += r.conditional_variance;
    }
    s[i] = sum;
    v_max = std::max(v_max, var);
  }
  CheckResult c{"freedman_coverage", true, 0.0, 0.0, ""};
  const double n = static_cast<double>(sequences);
  for (double gamma : {1.0, 2.0, 5.0, 10.0, 20.0}) {
    const double hits = static_cast<double>(std::count_if(s.begin(), s.end(), [&](double x) { return x <= -gamma; }));
    const double p_hat = hits / n;
    const double se = std::sqrt(p_hat * (1.0 - p_hat) / n);
    const double bound = freedman_bound(gamma, v_max, kDefaultClipBound);
    const double slack = p_hat - (bound + 3.0 * se);
    if (slack > 0.0) c.passed = false;
    c.metric = std::max(c.metric, slack);
    c.detail += fmt("gamma=%g: P=%.4g ", gamma, p_hat) + fmt("bound=%.4g; ", bound);
  }
  c.detail += fmt("V_L max = %.4g", v_max);
  return c;
}

CheckResult overlap_spot_checks() {
  struct Case {
    double snr;
    double expected;
  };
  // Reference values of erfc(sqrt(snr) / 2).
  const Case cases[] = {{0.0, 1.0}, {2.0, 0.31731050786291404}, {4.0, 0.15729920705028513}, {16.0, 0.004677734981047265}};
  CheckResult c{"overlap", true, 0.0, 1e-12, ""};
  for (const Case& k : cases) c.metric = std::max(c.metric, std::abs(overlap_from_snr(k.snr) - k.expected));
  c.passed = c.metric < c.tolerance;
  c.detail = fmt("max deviation from reference values = %.3g", c.metric);
  return c;
}

}  // namespace

double standard_normal(CounterRng& rng) {
  const double u1 = 1.0 - rng.uniform();  // (0, 1]
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

TokenDistribution random_distribution(CounterRng& rng, std::size_t vocab_size, double scale) {
  std::vector<double> logits(vocab_size);
  for (double& x : logits) x = scale * standard_normal(rng);
  return TokenDistribution::from_logits(logits);
}

std::shared_ptr<const NgramModel> toy_ngram(std::uint64_t seed, std::size_t vocab_size, std::size_t stream_length) {
  CounterRng rng(seed);
  std::vector<TokenDistribution> rows;
  rows.reserve(vocab_size);
  for (std::size_t i = 0; i < vocab_size; ++i) rows.push_back(random_distribution(rng, vocab_size, 1.5));
  const SamplerConfig sampler;
  std::vector<TokenId> stream{0};
  stream.reserve(stream_length);
  while (stream.size() < stream_length) stream.push_back(sample(rows[static_cast<std::size_t>(stream.back())], sampler, rng));
  return std::make_shared<const NgramModel>(NgramModel::train_stream(stream, vocab_size, 2, 0.5));
}

UnnormalizedProvider::UnnormalizedProvider(std::shared_ptr<const Provider> base, double factor)
    : base_(std::move(base)), log_factor_(std::log(factor)) {}

TokenDistribution UnnormalizedProvider::next_distribution(std::span<const TokenId> context) const {
  const TokenDistribution d = base_->next_distribution(context);
  std::vector<double> lp(d.log_probs().begin(), d.log_probs().end());
  for (double& v : lp) v += log_factor_;
  return TokenDistribution::unchecked_full(std::move(lp));
}

std::vector<PhiRecord> self_sample(const Provider& provider, std::size_t length, CounterRng& rng, double clip_bound) {
  const SamplerConfig sampler;
  std::vector<TokenId> ctx;
  ctx.reserve(length);
  std::vector<PhiRecord> out;
  out.reserve(length);
  for (std::size_t t = 0; t < length; ++t) {
    const TokenDistribution d = provider.next_distribution(ctx);
    const TokenId tok = sample(d, sampler, rng);
    out.push_back(phi(d, tok, clip_bound));
    ctx.push_back(tok);
  }
  return out;
}

SnrDecomposition brute_force_snr(const ContextEnsemble& ensemble) {
  // Moments of X = log p_c(x) and Y = X + H(p_c) with c ~ w and x ~ p_c (H0) or q_c (H1).
  double ll0 = 0.0;
  double ll0_sq = 0.0;
  double ll1 = 0.0;
  double cll0 = 0.0;
  double cll0_sq = 0.0;
  double cll1 = 0.0;
  for (const ContextEntry& e : ensemble.entries()) {
    double h = 0.0;
    for (double lp : e.p.log_probs()) {
      if (std::isfinite(lp)) h -= std::exp(lp) * lp;
    }
    for (std::size_t x = 0; x < e.p.support_size(); ++x) {
      const double lp = e.p.log_prob_at(x);
      if (!std::isfinite(lp)) continue;
      const double p = std::exp(lp);
      const double q = std::exp(e.q.log_prob_at(x));
      ll0 += e.weight * p * lp;
      ll0_sq += e.weight * p * lp * lp;
      ll1 += e.weight * q * lp;
      cll0 += e.weight * p * (lp + h);
      cll0_sq += e.weight * p * (lp + h) * (lp + h);
      cll1 += e.weight * q * (lp + h);
    }
  }
  SnrDecomposition out;
  const double var_ll = ll0_sq - ll0 * ll0;
  const double var_cll = cll0_sq - cll0 * cll0;
  out.delta = cll1 - cll0;
  out.snr_ll = (ll1 - ll0) * (ll1 - ll0) / var_ll;
  out.snr_cll = (cll1 - cll0) * (cll1 - cll0) / var_cll;
  out.sigma_eps_sq_mean = var_cll;
  out.sigma_h_sq = var_ll - var_cll;
  return out;
}

bool TheoryReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

std::string TheoryReport::to_json() const {
  detail::ordered_json j;
  j["passed"] = passed();
  j["checks"] = detail::ordered_json::array();
  for (const CheckResult& c : checks) {
    detail::ordered_json cj;
    cj["name"] = c.name;
    cj["passed"] = c.passed;
    cj["metric"] = detail::number9(c.metric);
    cj["tolerance"] = detail::number9(c.tolerance);
    cj["detail"] = c.detail;
    j["checks"].push_back(std::move(cj));
  }
  return j.dump(2);
}

TheoryReport validate_theory(const TheoryOptions& options) {
  if (options.trials == 0 || options.coverage_sequences == 0 || options.coverage_length == 0) {
    throw Error(ErrorCode::InvalidArgument, "trial counts must be positive");
  }
  const CounterRng root(CounterRng::mix(options.seed));
  std::shared_ptr<const Provider> model = toy_ngram(options.seed);
  if (options.inject_fault) model = std::make_shared<const UnnormalizedProvider>(model, kFaultFactor);

  TheoryReport report;
  report.checks.push_back(zero_mean(derive_stream(root, "zero_mean"), options.inject_fault));
  report.checks.push_back(drift_identity(derive_stream(root, "drift"), options.inject_fault));
  report.checks.push_back(martingale(*model, options.trials, derive_stream(root, "martingale")));
  report.checks.push_back(snr_dominance(derive_stream(root, "snr"), options.inject_fault));
  report.checks.push_back(
      freedman_coverage(*model, options.coverage_sequences, options.coverage_length, derive_stream(root, "freedman")));
  report.checks.push_back(overlap_spot_checks());
  return report;
}

}  // namespace ddt::validation
