// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#include "ddt/hinted.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "ddt/error.hpp"
#include "ddt/generate.hpp"
#include "ddt/stats.hpp"
#include "json_util.hpp"

namespace ddt::hd {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Per-token log-prob a stream assigns to ids it did not list.
double tail_per_token(const TokenDistribution& d) {
  if (d.is_full() || d.tail()->tail_token_count == 0) return kNegInf;
  return d.tail()->tail_log_mass - std::log(static_cast<double>(d.tail()->tail_token_count));
}

double mix(double a, double b, double lambda) {
  if (a == kNegInf || b == kNegInf) return kNegInf;
  return (1.0 - lambda) * a + lambda * b;
}

TokenDistribution fuse_truncated(const TokenDistribution& imitator, const TokenDistribution& drafter, double lambda) {
  std::unordered_map<TokenId, std::pair<double, double>> table;
  std::vector<TokenId> order;
  const double tail_i = tail_per_token(imitator);
  const double tail_m = tail_per_token(drafter);
  for (std::size_t i = 0; i < imitator.support_size(); ++i) {
    table.emplace(imitator.id_at(i), std::pair{imitator.log_prob_at(i), tail_m});
    order.push_back(imitator.id_at(i));
  }
  bool overlap = false;
  for (std::size_t i = 0; i < drafter.support_size(); ++i) {
    const TokenId id = drafter.id_at(i);
    auto [it, inserted] = table.emplace(id, std::pair{tail_i, drafter.log_prob_at(i)});
    if (inserted) {
      order.push_back(id);
    } else {
      it->second.second = drafter.log_prob_at(i);
      overlap = true;
    }
  }
  if (!overlap) throw Error(ErrorCode::SupportMismatch, "imitator and drafter supports are disjoint");

  std::vector<double> logits;
  logits.reserve(order.size() + 1);
  for (TokenId id : order) logits.push_back(mix(table[id].first, table[id].second, lambda));
  const std::size_t rest = imitator.vocab_size() - order.size();
  if (rest > 0) logits.push_back(mix(tail_i, tail_m, lambda) + std::log(static_cast<double>(rest)));
  const double lse = log_sum_exp(logits);
  if (!std::isfinite(lse)) throw Error(ErrorCode::SupportMismatch, "fused distribution has no mass");

  std::vector<TokenId> ids;
  std::vector<double> lps;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (logits[i] == kNegInf) continue;
    ids.push_back(order[i]);
    lps.push_back(logits[i] - lse);
  }
  if (ids.empty()) throw Error(ErrorCode::SupportMismatch, "fused distribution lists no token");
  return TokenDistribution::truncated(std::move(ids), std::move(lps), imitator.vocab_size());
}

}  // namespace

void MixSchedule::validate() const {
  if (!std::isfinite(beta) || beta < 0.0) throw Error(ErrorCode::InvalidArgument, "beta must be finite and >= 0");
  if (!std::isfinite(c)) throw Error(ErrorCode::InvalidArgument, "sigmoid center must be finite");
  if (mode == Mode::Piecewise && !(h1 >= 0.0 && h1 < h2 && h2 <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "piecewise schedule needs 0 <= h1 < h2 <= 1");
  }
}

MixSchedule::Mode MixSchedule::parse_mode(std::string_view name) {
  if (name == "linear") return Mode::Linear;
  if (name == "sigmoid") return Mode::Sigmoid;
  if (name == "piecewise") return Mode::Piecewise;
  throw Error(ErrorCode::InvalidArgument, "unknown schedule: " + std::string(name));
}

std::string_view to_string(MixSchedule::Mode mode) noexcept {
  switch (mode) {
    case MixSchedule::Mode::Linear: return "linear";
    case MixSchedule::Mode::Sigmoid: return "sigmoid";
    case MixSchedule::Mode::Piecewise: return "piecewise";
  }
  return "linear";
}

double lambda_of(const MixSchedule& s, double h) {
  switch (s.mode) {
    case MixSchedule::Mode::Linear: return std::clamp(s.beta * h, 0.0, 1.0);
    case MixSchedule::Mode::Sigmoid: return 1.0 / (1.0 + std::exp(-s.beta * (h - s.c)));
    case MixSchedule::Mode::Piecewise: return std::clamp((h - s.h1) / (s.h2 - s.h1), 0.0, 1.0);
  }
  return 0.0;
}

TokenDistribution fuse_logprobs(const TokenDistribution& imitator, const TokenDistribution& drafter, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(ErrorCode::InvalidArgument, "lambda must lie in [0, 1]");
  if (imitator.vocab_size() != drafter.vocab_size()) {
    throw Error(ErrorCode::SupportMismatch, "imitator and drafter vocab sizes differ");
  }
  if (lambda == 0.0) return imitator;
  if (lambda == 1.0) return drafter;
  if (!imitator.is_full() || !drafter.is_full()) return fuse_truncated(imitator, drafter, lambda);

  const auto a = imitator.log_probs();
  const auto b = drafter.log_probs();
  std::vector<double> logits(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) logits[i] = mix(a[i], b[i], lambda);
  if (!std::isfinite(log_sum_exp(logits))) {
    throw Error(ErrorCode::SupportMismatch, "imitator and drafter supports are disjoint");
  }
  return TokenDistribution::from_logits(logits);
}

SplitterMatcher::SplitterMatcher(std::vector<TokenId> pattern) : pattern_(std::move(pattern)) {
  if (pattern_.empty()) throw Error(ErrorCode::InvalidArgument, "splitter pattern is empty");
  failure_.assign(pattern_.size(), 0);
  for (std::size_t i = 1, k = 0; i < pattern_.size(); ++i) {
    while (k > 0 && pattern_[i] != pattern_[k]) k = failure_[k - 1];
    if (pattern_[i] == pattern_[k]) ++k;
    failure_[i] = k;
  }
}

std::size_t SplitterMatcher::advance(std::size_t state, TokenId token) const {
  if (state == pattern_.size()) state = failure_[state - 1];
  while (state > 0 && pattern_[state] != token) state = failure_[state - 1];
  if (pattern_[state] == token) ++state;
  return state;
}

bool SplitterMatcher::push(TokenId token) {
  state_ = advance(state_, token);
  return !pattern_.empty() && state_ == pattern_.size();
}

bool SplitterMatcher::would_complete(TokenId token) const {
  return !pattern_.empty() && advance(state_, token) == pattern_.size();
}

bool detect_splitter(std::span<const TokenId> generated, std::span<const TokenId> splitter) {
  if (splitter.empty() || generated.size() < splitter.size()) return false;
  return std::equal(splitter.begin(), splitter.end(), generated.end() - splitter.size());
}

void HintedConfig::validate() const {
  schedule.validate();
  if (lambda_override && !(*lambda_override >= 0.0 && *lambda_override <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "lambda override must lie in [0, 1]");
  }
  if (boundary_marker.empty()) throw Error(ErrorCode::InvalidArgument, "boundary marker is empty");
  if (splitter.empty()) throw Error(ErrorCode::InvalidArgument, "splitter is empty");
  if (std::find(splitter.begin(), splitter.end(), eos_id) != splitter.end()) {
    throw Error(ErrorCode::InvalidArgument, "splitter must not contain eos");
  }
  if (max_len == 0) throw Error(ErrorCode::InvalidArgument, "max_len must be positive");
  if (analysis_cap == 0) throw Error(ErrorCode::InvalidArgument, "analysis_cap must be positive");
  sampler.validate();
  analysis_sampler.validate();
}

std::string_view to_string(StepMode mode) noexcept {
  switch (mode) {
    case StepMode::Mixed: return "mixed";
    case StepMode::DrafterOnly: return "drafter_only";
    case StepMode::Forced: return "forced";
  }
  return "mixed";
}

DecodeSession::DecodeSession(ContextState target, ContextState drafter, HintedConfig config)
    : target_(std::move(target)), drafter_(std::move(drafter)), config_(std::move(config)), matcher_(config_.splitter) {
  config_.validate();
}

void DecodeSession::emit(TokenId token) {
  target_.push(token);
  drafter_.push(token);
  generated_.push_back(token);
  if (matcher_.push(token)) {
    splitter_seen_ = true;
    drafter_only_ = true;
  }
}

DecodeSession::StepResult DecodeSession::step(const Provider& provider, CounterRng& rng) {
  if (finished_) throw Error(ErrorCode::InvalidState, "step called on a finished session");
  ++step_count_;
  StepResult r;

  if (!forced_.empty()) {
    r.token = forced_.front();
    forced_.pop_front();
    r.trace.mode = StepMode::Forced;
    r.trace.lambda = 1.0;
    r.trace.fused_log_prob = 0.0;
    emit(r.token);
  } else if (drafter_only_) {
    const TokenDistribution d = provider.next_distribution(drafter_);
    r.token = sample(d, config_.sampler, rng);
    r.trace.mode = StepMode::DrafterOnly;
    r.trace.lambda = 1.0;
    r.trace.fused_log_prob = d.log_prob(r.token).value_or(kNegInf);
    r.trace.approximate = !d.is_full();
    if (r.token == config_.eos_id) {
      finished_ = true;
      ended_with_eos_ = true;
    } else {
      emit(r.token);
    }
  } else {
    const TokenDistribution p_i = provider.next_distribution(target_);
    const TokenDistribution p_m = provider.next_distribution(drafter_);
    const double h = entropy(p_i);
    const double h_norm = std::clamp(h / std::log(static_cast<double>(p_i.vocab_size())), 0.0, 1.0);
    const double lambda = config_.lambda_override.value_or(lambda_of(config_.schedule, h_norm));
    const TokenDistribution fused = fuse_logprobs(p_i, p_m, lambda);
    TokenId tok = sample(fused, config_.sampler, rng);
    r.trace.entropy_target = h;
    r.trace.normalized_entropy = h_norm;
    r.trace.lambda = lambda;
    r.trace.mode = StepMode::Mixed;
    r.trace.fused_log_prob = fused.log_prob(tok).value_or(kNegInf);
    r.trace.approximate = !fused.is_full();
    if (tok == config_.eos_id) {
      // Premature end: emit the splitter instead and let the drafter write the answer.
      tok = config_.splitter.front();
      forced_.assign(config_.splitter.begin() + 1, config_.splitter.end());
      drafter_only_ = true;
    }
    r.token = tok;
    emit(tok);
  }

  r.trace.token = r.token;
  if (!finished_ && generated_.size() >= config_.max_len) {
    finished_ = true;
    truncated_ = true;
  }
  r.finished = finished_;
  return r;
}

std::string render_template(std::string_view tmpl, std::string_view question, std::string_view answer) {
  static constexpr std::string_view kQ = "{question}";
  static constexpr std::string_view kA = "{answer}";
  std::string out;
  out.reserve(tmpl.size() + question.size() + answer.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl.compare(i, kQ.size(), kQ) == 0) {
      out += question;
      i += kQ.size();
    } else if (tmpl.compare(i, kA.size(), kA) == 0) {
      out += answer;
      i += kA.size();
    } else {
      out += tmpl[i++];
    }
  }
  return out;
}

std::vector<TokenId> prepare_target_context(std::string_view question, std::string_view answer,
                                            const HintedConfig& config, const Provider& provider,
                                            const Tokenizer& tokenizer, CounterRng& rng) {
  std::vector<TokenId> ctx = tokenizer.encode(render_template(config.shadow_prompt, question, answer));
  const Generation analysis = generate(provider, ctx, config.analysis_sampler, config.eos_id, config.analysis_cap,
                                       rng, config.boundary_marker);
  if (analysis.reason != StopReason::StopSequence) {
    throw Error(ErrorCode::AnalysisOverrun, analysis.reason == StopReason::Eos
                                                ? "analysis ended before the boundary marker"
                                                : "boundary marker not found within the analysis cap");
  }
  ctx.insert(ctx.end(), analysis.tokens.begin(), analysis.tokens.end());
  return ctx;
}

std::vector<TokenId> drafter_context(std::string_view question, const HintedConfig& config,
                                     const Tokenizer& tokenizer) {
  return tokenizer.encode(render_template(config.student_prompt, question, ""));
}

DecodeResult run_session(DecodeSession session, const Provider& provider, CounterRng& rng) {
  DecodeResult out;
  out.target_context = session.target_context().tokens;
  while (!session.finished()) out.trace.steps.push_back(session.step(provider, rng).trace);
  out.response = session.generated();
  out.truncated = session.truncated();
  out.ended_with_eos = session.ended_with_eos();
  return out;
}

DecodeResult decode(std::string_view question, std::string_view answer, const HintedConfig& config,
                    const Provider& provider, const Tokenizer& tokenizer, const CounterRng& rng) {
  config.validate();
  CounterRng analysis_rng = derive_stream(rng, "analysis");
  CounterRng decode_rng = derive_stream(rng, "decode");
  ContextState target{prepare_target_context(question, answer, config, provider, tokenizer, analysis_rng)};
  ContextState drafter{drafter_context(question, config, tokenizer)};
  return run_session(DecodeSession(std::move(target), std::move(drafter), config), provider, decode_rng);
}

std::vector<TokenId> imitator_only_decode(std::string_view question, std::string_view answer,
                                          const HintedConfig& config, const Provider& provider,
                                          const Tokenizer& tokenizer, const CounterRng& rng) {
  config.validate();
  CounterRng analysis_rng = derive_stream(rng, "analysis");
  CounterRng decode_rng = derive_stream(rng, "decode");
  const auto target = prepare_target_context(question, answer, config, provider, tokenizer, analysis_rng);
  return generate(provider, target, config.sampler, config.eos_id, config.max_len, decode_rng).tokens;
}

std::vector<TokenId> drafter_only_decode(std::string_view question, const HintedConfig& config,
                                         const Provider& provider, const Tokenizer& tokenizer, const CounterRng& rng) {
  config.validate();
  CounterRng decode_rng = derive_stream(rng, "decode");
  const auto ctx = drafter_context(question, config, tokenizer);
  return generate(provider, ctx, config.sampler, config.eos_id, config.max_len, decode_rng).tokens;
}

std::string trace_to_json_line(std::string_view id, const DecodeTrace& trace) {
  using detail::ordered_json;
  ordered_json entropy = ordered_json::array();
  ordered_json norm = ordered_json::array();
  ordered_json lambda = ordered_json::array();
  ordered_json mode = ordered_json::array();
  ordered_json token = ordered_json::array();
  for (const TraceRecord& s : trace.steps) {
    entropy.push_back(s.entropy_target ? detail::number9(*s.entropy_target) : ordered_json(nullptr));
    norm.push_back(s.normalized_entropy ? detail::number9(*s.normalized_entropy) : ordered_json(nullptr));
    lambda.push_back(detail::number9(s.lambda));
    mode.push_back(std::string(to_string(s.mode)));
    token.push_back(s.token);
  }
  ordered_json j;
  j["id"] = id;
  j["entropy"] = std::move(entropy);
  j["normalized_entropy"] = std::move(norm);
  j["lambda"] = std::move(lambda);
  j["mode"] = std::move(mode);
  j["token"] = std::move(token);
  return j.dump();
}

}  // namespace ddt::hd
