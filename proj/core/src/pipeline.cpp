// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#include "ddt/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "ddt/error.hpp"
#include "ddt/generate.hpp"
#include "json_util.hpp"

namespace ddt::pipeline {
namespace {

using detail::number9;
using detail::ordered_json;

std::string threshold_key(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

ordered_json fractions_json(const std::map<double, double>& fractions) {
  ordered_json j = ordered_json::object();
  // Report thresholds from the loosest (most negative) to the strictest.
  for (const auto& [t, f] : fractions) j[threshold_key(t)] = number9(f);
  return j;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename F>
void for_each_jsonl(std::string_view text, F&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::InvalidArgument, "line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    fn(j, line_no);
    if (end == text.size()) break;
  }
}

std::string required_string(const nlohmann::json& j, const char* key, std::size_t line_no) {
  if (!j.is_object() || !j.contains(key) || !j.at(key).is_string()) {
    throw Error(ErrorCode::InvalidArgument,
                "line " + std::to_string(line_no) + ": missing string field \"" + std::string(key) + "\"");
  }
  return j.at(key).get<std::string>();
}

void check_unique(std::unordered_set<std::string>& seen, const std::string& id, std::size_t line_no) {
  if (!seen.insert(id).second) {
    throw Error(ErrorCode::InvalidArgument, "line " + std::to_string(line_no) + ": duplicate id \"" + id + "\"");
  }
}

PhiSummary summarize(const SequenceScore& score, std::span<const double> thresholds) {
  PhiSummary s;
  const ExtremeTokenReport r = extreme_token_report(score.records, thresholds);
  s.avg_phi = r.avg_phi;
  s.fraction_ge = r.fraction_ge;
  s.s_clipped_final = score.s_clipped_final;
  s.tokens = score.records.size();
  return s;
}

void accumulate(SourceStats& stats, const PhiSummary& s, std::map<double, double>& counts, double& phi_sum) {
  ++stats.items;
  stats.tokens += s.tokens;
  phi_sum += s.avg_phi * static_cast<double>(s.tokens);
  for (const auto& [t, f] : s.fraction_ge) counts[t] += std::round(f * static_cast<double>(s.tokens));
}

void finish(SourceStats& stats, const std::map<double, double>& counts, double phi_sum,
            std::span<const double> thresholds) {
  const double n = static_cast<double>(stats.tokens);
  stats.avg_phi = stats.tokens ? phi_sum / n : 0.0;
  for (double t : thresholds) {
    const auto it = counts.find(t);
    stats.fraction_ge[t] = stats.tokens && it != counts.end() ? it->second / n : 0.0;
  }
}

ordered_json source_json(const SourceStats& s) {
  ordered_json j;
  j["items"] = s.items;
  j["tokens"] = s.tokens;
  j["avg_phi"] = number9(s.avg_phi);
  j["frac_ge"] = fractions_json(s.fraction_ge);
  return j;
}

}  // namespace

std::vector<DatasetItem> parse_corpus(std::string_view jsonl) {
  std::vector<DatasetItem> items;
  std::unordered_set<std::string> seen;
  for_each_jsonl(jsonl, [&](const nlohmann::json& j, std::size_t line_no) {
    DatasetItem item;
    item.id = required_string(j, "id", line_no);
    item.question = required_string(j, "question", line_no);
    item.answer = required_string(j, "answer", line_no);
    if (j.contains("response")) item.response = required_string(j, "response", line_no);
    if (item.question.empty()) {
      throw Error(ErrorCode::InvalidArgument, "line " + std::to_string(line_no) + ": empty question");
    }
    check_unique(seen, item.id, line_no);
    items.push_back(std::move(item));
  });
  return items;
}

std::vector<DatasetItem> read_corpus(const std::filesystem::path& path) { return parse_corpus(read_file(path)); }

std::vector<DatasetItem> read_realigned(const std::filesystem::path& path) {
  std::vector<DatasetItem> items;
  std::unordered_set<std::string> seen;
  for_each_jsonl(read_file(path), [&](const nlohmann::json& j, std::size_t line_no) {
    DatasetItem item;
    item.id = required_string(j, "id", line_no);
    item.question = required_string(j, "question", line_no);
    item.response = required_string(j, "response", line_no);
    item.answer = *item.response;
    check_unique(seen, item.id, line_no);
    items.push_back(std::move(item));
  });
  return items;
}

VerifierSpec::Kind VerifierSpec::parse_kind(std::string_view name) {
  if (name == "boxed_exact" || name == "boxed-exact") return Kind::BoxedExact;
  if (name == "normalized_match" || name == "normalized-match") return Kind::NormalizedMatch;
  throw Error(ErrorCode::InvalidArgument, "unknown verifier: " + std::string(name));
}

std::optional<std::string> extract_last_boxed(std::string_view text) {
  static constexpr std::string_view kOpen = "\\boxed{";
  std::optional<std::string> last;
  std::size_t pos = text.find(kOpen);
  while (pos != std::string_view::npos) {
    const std::size_t start = pos + kOpen.size();
    int depth = 1;
    std::size_t i = start;
    for (; i < text.size() && depth > 0; ++i) {
      if (text[i] == '{') ++depth;
      if (text[i] == '}') --depth;
    }
    if (depth == 0) last = std::string(text.substr(start, i - 1 - start));
    pos = text.find(kOpen, start);
  }
  return last;
}

std::string normalize_answer(std::string_view text, const VerifierSpec& spec) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  const auto b = std::find_if_not(text.begin(), text.end(), is_space);
  const auto e = std::find_if_not(text.rbegin(), text.rend(), is_space).base();
  std::string out;
  bool in_space = false;
  for (auto it = b; it < e; ++it) {
    char c = *it;
    if (spec.collapse_whitespace && is_space(c)) {
      in_space = true;
      continue;
    }
    if (in_space) out += ' ';
    in_space = false;
    if (spec.lowercase) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out += c;
  }
  return out;
}

bool verify(std::string_view response, std::string_view reference, const VerifierSpec& spec) {
  if (spec.kind == VerifierSpec::Kind::NormalizedMatch) {
    return normalize_answer(response, spec) == normalize_answer(reference, spec);
  }
  const auto boxed = extract_last_boxed(response);
  if (!boxed) return false;
  // A reference given in boxed form is compared by its content.
  const auto ref_boxed = extract_last_boxed(reference);
  return normalize_answer(*boxed, spec) == normalize_answer(ref_boxed ? *ref_boxed : reference, spec);
}

SequenceScore score_tokens(const Provider& provider, std::span<const TokenId> prompt,
                           std::span<const TokenId> response, const DiscriminantConfig& config) {
  if (response.empty()) throw Error(ErrorCode::EmptySequence, "response has no tokens");
  const auto dists = provider.score_continuation(prompt, response);
  if (dists.size() != response.size()) throw Error(ErrorCode::ProtocolError, "provider returned wrong position count");
  std::vector<PhiRecord> records;
  records.reserve(response.size());
  for (std::size_t t = 0; t < response.size(); ++t) records.push_back(phi(dists[t], response[t], config.clip_bound));
  return classify_sequence(records, config);
}

SequenceScore score_response(const LanguageModel& model, std::string_view prompt_template, std::string_view question,
                             std::string_view response, const DiscriminantConfig& config) {
  const auto prompt = model.tokenizer.encode(hd::render_template(prompt_template, question, ""));
  const auto tokens = model.tokenizer.encode(response);
  return score_tokens(*model.provider, prompt, tokens, config);
}

Histogram Histogram::build(std::span<const double> values, std::size_t bins) {
  if (bins == 0) throw Error(ErrorCode::InvalidArgument, "histogram needs at least one bin");
  Histogram h;
  if (values.empty()) return h;
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  h.lo = *mn;
  h.hi = *mx > *mn ? *mx : *mn + 1.0;
  h.counts.assign(bins, 0);
  const double width = (h.hi - h.lo) / static_cast<double>(bins);
  for (double v : values) {
    auto k = static_cast<std::size_t>((v - h.lo) / width);
    ++h.counts[std::min(k, bins - 1)];
  }
  return h;
}

std::string Histogram::to_csv() const {
  std::string out = "bin_left,bin_right,count\n";
  const std::size_t bins = counts.size();
  for (std::size_t k = 0; k < bins; ++k) {
    const double left = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(bins);
    const double right = k + 1 == bins ? hi : lo + (hi - lo) * static_cast<double>(k + 1) / static_cast<double>(bins);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%zu\n", left, right, counts[k]);
    out += buf;
  }
  return out;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

ScoreResult score_dataset(std::span<const DatasetItem> corpus, const LanguageModel& model,
                          const ScoreOptions& options) {
  options.discriminant.validate();
  ScoreResult result;
  result.items.resize(corpus.size());
  parallel_for(corpus.size(), options.workers, [&](std::size_t i) {
    const DatasetItem& item = corpus[i];
    ItemScore& out = result.items[i];
    out.id = item.id;
    try {
      out.score = score_response(model, options.prompt_template, item.question, item.response.value_or(item.answer),
                                 options.discriminant);
    } catch (const Error& e) {
      out.error = e.what();
    }
  });

  ScoreReport& r = result.report;
  r.items = corpus.size();
  std::vector<double> s_clipped;
  std::vector<double> phis;
  std::vector<PhiRecord> all_records;
  double var_sum = 0.0;
  for (const ItemScore& item : result.items) {
    if (!item.score) {
      ++r.failed;
      continue;
    }
    const SequenceScore& s = *item.score;
    s_clipped.push_back(s.s_clipped_final);
    (s.verdict == Verdict::InDistribution ? r.in_distribution : r.out_of_distribution) += 1;
    for (const PhiRecord& rec : s.records) {
      phis.push_back(rec.phi);
      var_sum += rec.conditional_variance;
      all_records.push_back(rec);
    }
  }
  r.tokens = phis.size();
  if (!s_clipped.empty()) {
    r.mean_s_clipped = std::accumulate(s_clipped.begin(), s_clipped.end(), 0.0) / static_cast<double>(s_clipped.size());
  }
  if (!phis.empty()) {
    r.mean_phi = std::accumulate(phis.begin(), phis.end(), 0.0) / static_cast<double>(phis.size());
    r.mean_conditional_variance = var_sum / static_cast<double>(phis.size());
    r.extreme = extreme_token_report(all_records, options.discriminant.report_thresholds);
  } else {
    for (double t : options.discriminant.report_thresholds) r.extreme.fraction_ge[t] = 0.0;
  }
  r.s_clipped_histogram = Histogram::build(s_clipped, options.histogram_bins);
  r.phi_histogram = Histogram::build(phis, options.histogram_bins);
  return result;
}

std::string scored_line(const ItemScore& item, std::span<const double> thresholds) {
  ordered_json j;
  j["id"] = item.id;
  if (!item.score) {
    j["error"] = item.error;
    return j.dump();
  }
  const SequenceScore& s = *item.score;
  const ExtremeTokenReport r = extreme_token_report(s.records, thresholds);
  j["s_final"] = number9(s.s_final);
  j["s_clipped_final"] = number9(s.s_clipped_final);
  j["verdict"] = std::string(to_string(s.verdict));
  j["avg_phi"] = number9(r.avg_phi);
  j["frac_ge"] = fractions_json(r.fraction_ge);
  j["phi"] = detail::array9(std::span<const PhiRecord>(s.records), [](const PhiRecord& p) { return p.phi; });
  return j.dump();
}

std::string score_report_json(const ScoreReport& r, std::span<const double> thresholds) {
  ordered_json j;
  j["items"] = r.items;
  j["failed"] = r.failed;
  j["tokens"] = r.tokens;
  j["in_distribution"] = r.in_distribution;
  j["out_of_distribution"] = r.out_of_distribution;
  j["mean_s_clipped"] = number9(r.mean_s_clipped);
  j["mean_phi"] = number9(r.mean_phi);
  j["mean_conditional_variance"] = number9(r.mean_conditional_variance);
  j["avg_phi"] = number9(r.extreme.avg_phi);
  std::map<double, double> fractions;
  for (double t : thresholds) {
    const auto it = r.extreme.fraction_ge.find(t);
    fractions[t] = it == r.extreme.fraction_ge.end() ? 0.0 : it->second;
  }
  j["frac_ge"] = fractions_json(fractions);
  return j.dump(2);
}

std::string_view to_string(Source source) noexcept { return source == Source::Rollout ? "rollout" : "hinted"; }

RealignResult realign(std::span<const DatasetItem> corpus, const LanguageModel& model, const RealignOptions& options) {
  if (corpus.empty()) throw Error(ErrorCode::InvalidArgument, "realign needs a nonempty corpus");
  options.hinted.validate();
  options.rollout_sampler.validate();
  options.discriminant.validate();
  if (options.rollouts == 0) throw Error(ErrorCode::InvalidArgument, "rollouts must be >= 1");

  const Provider& provider = *model.provider;
  const Tokenizer& tok = model.tokenizer;
  const auto& thresholds = options.discriminant.report_thresholds;

  struct Slot {
    std::optional<RealignedItem> kept;
    std::optional<DroppedItem> dropped;
  };
  std::vector<Slot> slots(corpus.size());

  parallel_for(corpus.size(), options.workers, [&](std::size_t i) {
    const DatasetItem& item = corpus[i];
    const CounterRng item_rng = derive_stream(options.seed, item.id);
    DroppedItem drop{item.id, "hinted_unverified", "", "", ""};
    try {
      const auto student_ctx = hd::drafter_context(item.question, options.hinted, tok);
      for (std::size_t k = 0; k < options.rollouts; ++k) {
        CounterRng rng = derive_stream(item_rng, k == 0 ? std::string("rollout") : "rollout" + std::to_string(k));
        const Generation g =
            generate(provider, student_ctx, options.rollout_sampler, tok.eos_id(), options.hinted.max_len, rng);
        std::string text = tok.decode(g.tokens);
        if (k == 0) drop.rollout = text;
        if (!g.tokens.empty() && verify(text, item.answer, options.verifier)) {
          const SequenceScore s = score_tokens(provider, student_ctx, g.tokens, options.discriminant);
          slots[i].kept = RealignedItem{item.id, item.question, std::move(text), Source::Rollout, true,
                                        summarize(s, thresholds)};
          return;
        }
      }
      const hd::DecodeResult h =
          hd::decode(item.question, item.answer, options.hinted, provider, tok, derive_stream(item_rng, "hinted"));
      std::string text = tok.decode(h.response);
      if (!h.response.empty() && verify(text, item.answer, options.verifier)) {
        const SequenceScore s = score_tokens(provider, student_ctx, h.response, options.discriminant);
        slots[i].kept =
            RealignedItem{item.id, item.question, std::move(text), Source::Hinted, true, summarize(s, thresholds)};
        return;
      }
      drop.hinted = std::move(text);
      drop.detail = h.truncated ? "hinted response truncated and unverified" : "hinted response unverified";
    } catch (const Error& e) {
      drop.reason = "error";
      drop.detail = e.what();
    }
    slots[i].dropped = std::move(drop);
  });

  RealignResult result;
  RealignReport& rep = result.report;
  rep.total = corpus.size();
  std::map<double, double> rollout_counts;
  std::map<double, double> hinted_counts;
  double rollout_phi = 0.0;
  double hinted_phi = 0.0;
  for (Slot& slot : slots) {
    if (slot.kept) {
      if (slot.kept->source == Source::Rollout) {
        ++rep.rollout;
        accumulate(rep.rollout_stats, slot.kept->phi_summary, rollout_counts, rollout_phi);
      } else {
        ++rep.hinted;
        accumulate(rep.hinted_stats, slot.kept->phi_summary, hinted_counts, hinted_phi);
      }
      result.items.push_back(std::move(*slot.kept));
    } else {
      (slot.dropped->reason == "error" ? rep.dropped_error : rep.dropped_unverified) += 1;
      result.dropped.push_back(std::move(*slot.dropped));
    }
  }
  finish(rep.rollout_stats, rollout_counts, rollout_phi, thresholds);
  finish(rep.hinted_stats, hinted_counts, hinted_phi, thresholds);
  return result;
}

std::string realigned_line(const RealignedItem& item) {
  ordered_json j;
  j["id"] = item.id;
  j["question"] = item.question;
  j["response"] = item.response;
  j["source"] = std::string(to_string(item.source));
  j["verified"] = item.verified;
  return j.dump();
}

std::string dropped_line(const DroppedItem& item) {
  ordered_json j;
  j["id"] = item.id;
  j["reason"] = item.reason;
  j["detail"] = item.detail;
  j["rollout"] = item.rollout;
  j["hinted"] = item.hinted;
  return j.dump();
}

std::string realign_report_json(const RealignReport& r) {
  ordered_json j;
  j["total"] = r.total;
  j["rollout"] = r.rollout;
  j["hinted"] = r.hinted;
  j["dropped_unverified"] = r.dropped_unverified;
  j["dropped_error"] = r.dropped_error;
  j["sources"]["rollout"] = source_json(r.rollout_stats);
  j["sources"]["hinted"] = source_json(r.hinted_stats);
  return j.dump(2);
}

ExportResult idft_export(std::span<const DatasetItem> corpus, const LanguageModel& model,
                         const ExportOptions& options) {
  if (corpus.empty()) throw Error(ErrorCode::InvalidArgument, "idft export needs a nonempty corpus");
  options.weights.validate();
  DiscriminantConfig dc;
  dc.clip_bound = options.weights.clip_bound;

  std::vector<std::optional<std::string>> lines(corpus.size());
  std::vector<std::string> errors(corpus.size());
  parallel_for(corpus.size(), options.workers, [&](std::size_t i) {
    const DatasetItem& item = corpus[i];
    try {
      const auto prompt = model.tokenizer.encode(hd::render_template(options.prompt_template, item.question, ""));
      const auto tokens = model.tokenizer.encode(item.response.value_or(item.answer));
      const SequenceScore s = score_tokens(*model.provider, prompt, tokens, dc);
      lines[i] = idft::export_line(item.id, tokens, idft::weight_stream(s, options.weights));
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });

  ExportResult out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (lines[i]) {
      out.lines.push_back(std::move(*lines[i]));
    } else {
      out.failures.push_back(ItemScore{corpus[i].id, std::nullopt, errors[i]});
    }
  }
  return out;
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

void write_lines(const std::filesystem::path& path, std::span<const std::string> lines) {
  std::string text;
  for (const auto& l : lines) {
    text += l;
    text += '\n';
  }
  write_text(path, text);
}

}  // namespace ddt::pipeline
