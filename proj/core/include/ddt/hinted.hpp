// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#pragma once

// Hinted Decoding.
//
// Two streams over one model: the imitator (target) stream sees a shadow prompt with the
// question, the reference answer and a self-generated analysis; the drafter (student)
// stream sees only the question. Each step samples from
//
//   log m = (1 - lambda) log p_imitator + lambda log p_drafter      (renormalized)
//
// with lambda = schedule(H(p_imitator) / log V). Once the splitter sequence (the opener of
// the final answer) appears, decoding continues from the drafter alone. An EOS sampled
// before the splitter is replaced by the splitter, which is then force-fed.

#include <deque>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ddt/providers.hpp"
#include "ddt/rng.hpp"
#include "ddt/sampling.hpp"
#include "ddt/tokenizer.hpp"

namespace ddt::hd {

struct MixSchedule {
  enum class Mode { Linear, Sigmoid, Piecewise };

  Mode mode = Mode::Linear;
  double beta = 10.0;
  double c = 0.1;    // sigmoid center
  double h1 = 0.02;  // piecewise ramp start
  double h2 = 0.2;   // piecewise ramp end

  void validate() const;
  static Mode parse_mode(std::string_view name);
};

std::string_view to_string(MixSchedule::Mode mode) noexcept;

/// Mixing weight of the drafter for a normalized imitator entropy in [0, 1].
double lambda_of(const MixSchedule& schedule, double normalized_entropy);

/// Geometric mixture (1 - lambda) log p_imitator + lambda log p_drafter, renormalized.
/// lambda = 0 and lambda = 1 return the corresponding input unchanged. Truncated inputs are
/// fused over the union of listed tokens, each stream filling tokens it did not list with
/// its uniform tail estimate.
TokenDistribution fuse_logprobs(const TokenDistribution& imitator, const TokenDistribution& drafter, double lambda);

/// Incremental matcher reporting when the pattern ends at the latest token (KMP automaton).
class SplitterMatcher {
 public:
  explicit SplitterMatcher(std::vector<TokenId> pattern);

  /// Feeds one token; true iff the pattern now ends at this token.
  bool push(TokenId token);
  bool would_complete(TokenId token) const;
  void reset() noexcept { state_ = 0; }
  const std::vector<TokenId>& pattern() const noexcept { return pattern_; }

 private:
  std::size_t advance(std::size_t state, TokenId token) const;

  std::vector<TokenId> pattern_;
  std::vector<std::size_t> failure_;
  std::size_t state_ = 0;
};

/// True iff `splitter` occurs in `generated` ending at its last position.
bool detect_splitter(std::span<const TokenId> generated, std::span<const TokenId> splitter);

inline constexpr std::string_view kDefaultShadowPrompt =
    "You will be provided with a question and a corresponding ground truth answer which is ensured to be "
    "correct. Your job is to transform the answer to a detailed chain-of-thought (CoT) reasoning process that "
    "logically leads to the given answer. Your output should contain a # Analyze part to first analyze the given "
    "solution, and then a # CoT part with the complete CoT. You MUST NOT mention the provided answer in the CoT "
    "part. The CoT should follow exactly the language style of your own thinking.\n"
    "# Question\n{question}\n# Answer:\n{answer}\nOutput:\n# Analyze\n";

struct HintedConfig {
  MixSchedule schedule;
  std::optional<double> lambda_override;  // constant-lambda ablation
  std::string shadow_prompt = std::string(kDefaultShadowPrompt);
  std::string student_prompt = "{question}";
  std::vector<TokenId> boundary_marker;
  std::vector<TokenId> splitter;
  TokenId eos_id = 1;
  std::size_t max_len = 256;
  std::size_t analysis_cap = 256;
  SamplerConfig sampler;
  SamplerConfig analysis_sampler;

  void validate() const;
};

enum class StepMode { Mixed, DrafterOnly, Forced };
std::string_view to_string(StepMode mode) noexcept;

struct TraceRecord {
  std::optional<double> entropy_target;      // only for mixed steps
  std::optional<double> normalized_entropy;  // only for mixed steps
  double lambda = 1.0;
  StepMode mode = StepMode::Mixed;
  TokenId token = 0;
  double fused_log_prob = 0.0;  // log-prob of the emitted token under the sampled law; 0 when forced
  bool approximate = false;     // fused over truncated supports
};

struct DecodeTrace {
  std::vector<TraceRecord> steps;
};

/// State of one dual-stream decode. Single owner, sequential.
class DecodeSession {
 public:
  DecodeSession(ContextState target, ContextState drafter, HintedConfig config);

  struct StepResult {
    TokenId token = 0;
    TraceRecord trace;
    bool finished = false;
  };

  /// Throws InvalidState once finished.
  StepResult step(const Provider& provider, CounterRng& rng);

  /// Start in drafter-only mode (the drafter-only baseline).
  void enter_drafter_only() noexcept { drafter_only_ = true; }

  bool finished() const noexcept { return finished_; }
  bool truncated() const noexcept { return truncated_; }
  bool ended_with_eos() const noexcept { return ended_with_eos_; }
  bool drafter_only() const noexcept { return drafter_only_; }
  bool splitter_seen() const noexcept { return splitter_seen_; }
  std::size_t step_count() const noexcept { return step_count_; }
  const std::vector<TokenId>& generated() const noexcept { return generated_; }
  const std::deque<TokenId>& forced_queue() const noexcept { return forced_; }
  const ContextState& target_context() const noexcept { return target_; }
  const ContextState& drafter_context() const noexcept { return drafter_; }

 private:
  void emit(TokenId token);

  ContextState target_;
  ContextState drafter_;
  HintedConfig config_;
  SplitterMatcher matcher_;
  std::vector<TokenId> generated_;
  std::deque<TokenId> forced_;
  std::size_t step_count_ = 0;
  bool drafter_only_ = false;
  bool splitter_seen_ = false;
  bool finished_ = false;
  bool truncated_ = false;
  bool ended_with_eos_ = false;
};

struct DecodeResult {
  std::vector<TokenId> response;
  DecodeTrace trace;
  std::vector<TokenId> target_context;
  bool truncated = false;
  bool ended_with_eos = false;
};

/// Substitutes {question} and {answer}.
std::string render_template(std::string_view tmpl, std::string_view question, std::string_view answer);

/// Shadow prompt followed by a sampled analysis cut after the first boundary marker
/// (inclusive). Throws AnalysisOverrun when the marker does not appear within
/// analysis_cap tokens or the analysis ends first.
std::vector<TokenId> prepare_target_context(std::string_view question, std::string_view answer,
                                            const HintedConfig& config, const Provider& provider,
                                            const Tokenizer& tokenizer, CounterRng& rng);

/// Student prompt tokens (the drafter stream's context).
std::vector<TokenId> drafter_context(std::string_view question, const HintedConfig& config,
                                     const Tokenizer& tokenizer);

/// Runs a session until EOS or max_len.
DecodeResult run_session(DecodeSession session, const Provider& provider, CounterRng& rng);

/// Full pipeline: prepare_target_context with the "analysis" sub-stream of `rng`, then the
/// dual-stream loop with its "decode" sub-stream.
DecodeResult decode(std::string_view question, std::string_view answer, const HintedConfig& config,
                    const Provider& provider, const Tokenizer& tokenizer, const CounterRng& rng);

/// Single-stream references sharing decode()'s random streams: sampling from the imitator
/// context alone (the self-distillation baseline) or from the drafter alone.
std::vector<TokenId> imitator_only_decode(std::string_view question, std::string_view answer,
                                          const HintedConfig& config, const Provider& provider,
                                          const Tokenizer& tokenizer, const CounterRng& rng);
std::vector<TokenId> drafter_only_decode(std::string_view question, const HintedConfig& config,
                                         const Provider& provider, const Tokenizer& tokenizer, const CounterRng& rng);

/// {"id", "entropy", "normalized_entropy", "lambda", "mode", "token"} with per-step arrays.
std::string trace_to_json_line(std::string_view id, const DecodeTrace& trace);

}  // namespace ddt::hd
