// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ddt/hinted.hpp"
#include "ddt/idft.hpp"
#include "ddt/model_spec.hpp"
#include "ddt/sampling.hpp"
#include "ddt/stats.hpp"

namespace ddt::pipeline {

struct DatasetItem {
  std::string id;
  std::string question;
  std::string answer;                   // reference answer
  std::optional<std::string> response;  // text to score; defaults to `answer`
};

/// One JSON object per line: {"id", "question", "answer"} and optionally "response".
/// Throws Io when unreadable and InvalidArgument (with the line number) for malformed rows,
/// duplicate ids or empty questions.
std::vector<DatasetItem> read_corpus(const std::filesystem::path& path);
std::vector<DatasetItem> parse_corpus(std::string_view jsonl);

struct VerifierSpec {
  enum class Kind { BoxedExact, NormalizedMatch };
  Kind kind = Kind::BoxedExact;
  bool lowercase = false;
  bool collapse_whitespace = true;

  static Kind parse_kind(std::string_view name);
};

/// Contents of the last brace-balanced \boxed{...} span.
std::optional<std::string> extract_last_boxed(std::string_view text);
/// Trim, optionally collapse inner whitespace runs to one space and lowercase (ASCII).
std::string normalize_answer(std::string_view text, const VerifierSpec& spec);
bool verify(std::string_view response, std::string_view reference, const VerifierSpec& spec);

/// Per-token phi of `response` given the prompt rendered from `prompt_template`.
SequenceScore score_response(const LanguageModel& model, std::string_view prompt_template, std::string_view question,
                             std::string_view response, const DiscriminantConfig& config);
SequenceScore score_tokens(const Provider& provider, std::span<const TokenId> prompt,
                           std::span<const TokenId> response, const DiscriminantConfig& config);

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::size_t> counts;

  /// Equal-width bins over [min, max] of the values; the maximum falls in the last bin.
  static Histogram build(std::span<const double> values, std::size_t bins);
  /// Header "bin_left,bin_right,count".
  std::string to_csv() const;
};

struct ScoreOptions {
  DiscriminantConfig discriminant;
  std::string prompt_template = "{question}";
  std::size_t workers = 1;
  std::size_t histogram_bins = 20;
};

struct ItemScore {
  std::string id;
  std::optional<SequenceScore> score;  // empty when the item failed
  std::string error;
};

struct ScoreReport {
  std::size_t items = 0;
  std::size_t failed = 0;
  std::size_t tokens = 0;
  std::size_t in_distribution = 0;
  std::size_t out_of_distribution = 0;
  double mean_s_clipped = 0.0;
  double mean_phi = 0.0;
  double mean_conditional_variance = 0.0;
  ExtremeTokenReport extreme;
  Histogram s_clipped_histogram;
  Histogram phi_histogram;
};

struct ScoreResult {
  std::vector<ItemScore> items;  // input order
  ScoreReport report;
};

ScoreResult score_dataset(std::span<const DatasetItem> corpus, const LanguageModel& model, const ScoreOptions& options);

/// {"id", "s_final", "s_clipped_final", "verdict", "avg_phi", "frac_ge", "phi"}; failed
/// items carry {"id", "error"} instead.
std::string scored_line(const ItemScore& item, std::span<const double> thresholds);
std::string score_report_json(const ScoreReport& report, std::span<const double> thresholds);

enum class Source { Rollout, Hinted };
std::string_view to_string(Source source) noexcept;

struct PhiSummary {
  double avg_phi = 0.0;
  std::map<double, double> fraction_ge;
  double s_clipped_final = 0.0;
  std::size_t tokens = 0;
};

struct RealignedItem {
  std::string id;
  std::string question;
  std::string response;
  Source source = Source::Rollout;
  bool verified = true;
  PhiSummary phi_summary;
};

struct DroppedItem {
  std::string id;
  std::string reason;  // "hinted_unverified" or "error"
  std::string detail;
  std::string rollout;
  std::string hinted;
};

struct SourceStats {
  std::size_t items = 0;
  std::size_t tokens = 0;
  double avg_phi = 0.0;
  std::map<double, double> fraction_ge;
};

struct RealignReport {
  std::size_t total = 0;
  std::size_t rollout = 0;
  std::size_t hinted = 0;
  std::size_t dropped_unverified = 0;
  std::size_t dropped_error = 0;
  SourceStats rollout_stats;
  SourceStats hinted_stats;
};

struct RealignOptions {
  hd::HintedConfig hinted;
  SamplerConfig rollout_sampler;
  VerifierSpec verifier;
  DiscriminantConfig discriminant;
  std::uint64_t seed = 0;
  std::size_t rollouts = 1;  // >1 keeps the first verifying rollout
  std::size_t workers = 1;
};

struct RealignResult {
  std::vector<RealignedItem> items;  // input order
  std::vector<DroppedItem> dropped;  // input order
  RealignReport report;
};

/// Student rollout per item; failed items are hinted-decoded and kept only if the hinted
/// response verifies. Item i uses derive_stream(seed, id), so results do not depend on the
/// worker count.
RealignResult realign(std::span<const DatasetItem> corpus, const LanguageModel& model, const RealignOptions& options);

/// {"id", "question", "response", "source", "verified"}.
std::string realigned_line(const RealignedItem& item);
std::string dropped_line(const DroppedItem& item);
std::string realign_report_json(const RealignReport& report);

/// Reads realigned JSONL (id, question, response) back as scorable items.
std::vector<DatasetItem> read_realigned(const std::filesystem::path& path);

struct ExportOptions {
  idft::WeightConfig weights;
  std::string prompt_template = "{question}";
  std::size_t workers = 1;
};

struct ExportResult {
  std::vector<std::string> lines;  // input order, failed items omitted
  std::vector<ItemScore> failures;
};

/// Teacher-forced scoring of each item's response followed by weight_stream.
ExportResult idft_export(std::span<const DatasetItem> corpus, const LanguageModel& model, const ExportOptions& options);

/// Calls fn(i) for i in [0, n) on `workers` threads. The first exception is rethrown.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

/// Writes lines joined by '\n' with a trailing newline. Throws Io.
void write_lines(const std::filesystem::path& path, std::span<const std::string> lines);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace ddt::pipeline
