// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#include "ddt/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ddt/error.hpp"

namespace ddt {
namespace {

struct Candidate {
  TokenId id;
  double logit;
};

// Descending by logit, ascending id on ties.
bool ranks_before(const Candidate& a, const Candidate& b) {
  if (a.logit != b.logit) return a.logit > b.logit;
  return a.id < b.id;
}

}  // namespace

void SamplerConfig::validate() const {
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::InvalidArgument, "temperature must be a finite value >= 0");
  }
  if (top_k && *top_k == 0) throw Error(ErrorCode::InvalidArgument, "top_k must be positive");
  if (top_p && !(*top_p > 0.0 && *top_p <= 1.0)) throw Error(ErrorCode::InvalidArgument, "top_p must lie in (0,1]");
}

TokenId argmax(const TokenDistribution& dist) {
  TokenId best = -1;
  double best_lp = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < dist.support_size(); ++i) {
    const double lp = dist.log_prob_at(i);
    const TokenId id = dist.id_at(i);
    if (best < 0 || lp > best_lp || (lp == best_lp && id < best)) {
      best = id;
      best_lp = lp;
    }
  }
  return best;
}

TokenId sample(const TokenDistribution& dist, const SamplerConfig& sampler, CounterRng& rng) {
  if (sampler.temperature == 0.0 || (sampler.top_k && *sampler.top_k == 1)) return argmax(dist);

  std::vector<Candidate> cands;
  cands.reserve(dist.support_size());
  for (std::size_t i = 0; i < dist.support_size(); ++i) {
    const double lp = dist.log_prob_at(i);
    if (lp == -std::numeric_limits<double>::infinity()) continue;
    cands.push_back({dist.id_at(i), lp / sampler.temperature});
  }
  if (cands.empty()) throw Error(ErrorCode::InvalidArgument, "distribution has no support to sample");

  bool sorted = false;
  if (sampler.top_k && *sampler.top_k < cands.size()) {
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(*sampler.top_k), cands.end(),
                      ranks_before);
    cands.resize(*sampler.top_k);
    sorted = true;
  }

  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& c : cands) hi = std::max(hi, c.logit);
  std::vector<double> weights(cands.size());
  double total = 0.0;
  for (std::size_t i = 0; i < cands.size(); ++i) total += weights[i] = std::exp(cands[i].logit - hi);

  if (sampler.top_p && *sampler.top_p < 1.0) {
    if (!sorted) {
      std::vector<std::size_t> order(cands.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(),
                [&](std::size_t a, std::size_t b) { return ranks_before(cands[a], cands[b]); });
      std::vector<Candidate> c2;
      std::vector<double> w2;
      for (std::size_t i : order) {
        c2.push_back(cands[i]);
        w2.push_back(weights[i]);
      }
      cands.swap(c2);
      weights.swap(w2);
    }
    const double target = *sampler.top_p * total;
    double cum = 0.0;
    std::size_t keep = 0;
    while (keep < cands.size()) {
      cum += weights[keep++];
      if (cum >= target) break;
    }
    cands.resize(keep);
    weights.resize(keep);
    total = cum;
  }

  const double u = rng.uniform() * total;
  double cum = 0.0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    cum += weights[i];
    if (u < cum) return cands[i].id;
  }
  return cands.back().id;
}

}  // namespace ddt
