// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors
//
// ddt: score, classify, decode, realign and weight corpora from the command line.
//
// Exit codes: 0 success, 1 check or verification failure, 2 usage or I/O error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ddt/error.hpp"
#include "ddt/hinted.hpp"
#include "ddt/idft.hpp"
#include "ddt/model_spec.hpp"
#include "ddt/pipeline.hpp"
#include "ddt/validation.hpp"

namespace {

using namespace ddt;
namespace fs = std::filesystem;

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;

struct GlobalFlags {
  std::uint64_t seed = 0;
  std::string provider;
  std::size_t workers = 1;
  double clip_bound = kDefaultClipBound;
  double alpha = 0.05;
  std::optional<double> gamma;
  std::string thresholds = "-1,-3,-5";
  std::string prompt_template = "{question}";
};

struct SamplerFlags {
  double temperature = 1.0;
  std::optional<std::size_t> top_k;
  std::optional<double> top_p;

  SamplerConfig config(std::uint64_t seed) const {
    SamplerConfig s;
    s.temperature = temperature;
    s.top_k = top_k;
    s.top_p = top_p;
    s.seed = seed;
    return s;
  }
};

struct HintedFlags {
  std::string schedule = "linear";
  double beta = 10.0;
  double center = 0.1;
  double h1 = 0.02;
  double h2 = 0.2;
  std::optional<double> lambda_const;
  std::string shadow_prompt_file;
  std::string student_prompt = "{question}";
  std::string boundary = "# CoT";
  std::string splitter = "\\boxed{";
  std::size_t max_len = 256;
  std::size_t analysis_cap = 256;
  SamplerFlags sampler;
  SamplerFlags analysis;
};

std::vector<double> parse_thresholds(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "bad threshold list: " + text);
    }
  }
  return out;
}

DiscriminantConfig discriminant(const GlobalFlags& g) {
  DiscriminantConfig dc;
  dc.clip_bound = g.clip_bound;
  if (g.gamma) {
    dc.threshold = FixedThreshold{*g.gamma};
  } else {
    dc.threshold = AlphaThreshold{g.alpha};
  }
  dc.report_thresholds = parse_thresholds(g.thresholds);
  dc.validate();
  return dc;
}

LanguageModel load(const GlobalFlags& g) {
  if (g.provider.empty()) throw Error(ErrorCode::InvalidArgument, "--provider is required");
  return load_model(g.provider);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

hd::HintedConfig hinted_config(const HintedFlags& f, const Tokenizer& tok, std::uint64_t seed) {
  hd::HintedConfig c;
  c.schedule.mode = hd::MixSchedule::parse_mode(f.schedule);
  c.schedule.beta = f.beta;
  c.schedule.c = f.center;
  c.schedule.h1 = f.h1;
  c.schedule.h2 = f.h2;
  c.lambda_override = f.lambda_const;
  if (!f.shadow_prompt_file.empty()) c.shadow_prompt = read_text(f.shadow_prompt_file);
  c.student_prompt = f.student_prompt;
  c.boundary_marker = tok.encode(f.boundary);
  c.splitter = tok.encode(f.splitter);
  c.eos_id = tok.eos_id();
  c.max_len = f.max_len;
  c.analysis_cap = f.analysis_cap;
  c.sampler = f.sampler.config(seed);
  c.analysis_sampler = f.analysis.config(seed);
  c.validate();
  return c;
}

void add_sampler_flags(CLI::App* app, SamplerFlags& s, const std::string& prefix, const std::string& what) {
  app->add_option("--" + prefix + "temperature", s.temperature, what + " temperature (0 = greedy)")
      ->capture_default_str();
  app->add_option("--" + prefix + "top-k", s.top_k, what + " top-k filter");
  app->add_option("--" + prefix + "top-p", s.top_p, what + " nucleus filter");
}

void add_hinted_flags(CLI::App* app, HintedFlags& h) {
  app->add_option("--schedule", h.schedule, "lambda schedule: linear, sigmoid or piecewise")->capture_default_str();
  app->add_option("--beta", h.beta, "schedule slope")->capture_default_str();
  app->add_option("--center", h.center, "sigmoid center")->capture_default_str();
  app->add_option("--h1", h.h1, "piecewise ramp start")->capture_default_str();
  app->add_option("--h2", h.h2, "piecewise ramp end")->capture_default_str();
  app->add_option("--lambda-const", h.lambda_const, "constant lambda instead of the schedule");
  app->add_option("--shadow-prompt-file", h.shadow_prompt_file, "template with {question} and {answer}");
  app->add_option("--student-prompt", h.student_prompt, "drafter prompt template")->capture_default_str();
  app->add_option("--boundary", h.boundary, "text that ends the analysis")->capture_default_str();
  app->add_option("--splitter", h.splitter, "text that opens the final answer")->capture_default_str();
  app->add_option("--max-len", h.max_len, "maximum response tokens")->capture_default_str();
  app->add_option("--analysis-cap", h.analysis_cap, "maximum analysis tokens")->capture_default_str();
  add_sampler_flags(app, h.sampler, "", "decode");
  add_sampler_flags(app, h.analysis, "analysis-", "analysis");
}

int cmd_score(const GlobalFlags& g, const std::string& input, const std::string& out, const std::string& report,
              const std::string& hist_dir, std::size_t bins) {
  const auto corpus = pipeline::read_corpus(input);
  const LanguageModel model = load(g);
  pipeline::ScoreOptions opt;
  opt.discriminant = discriminant(g);
  opt.prompt_template = g.prompt_template;
  opt.workers = g.workers;
  opt.histogram_bins = bins;
  const auto result = pipeline::score_dataset(corpus, model, opt);

  std::vector<std::string> lines;
  for (const auto& item : result.items) lines.push_back(pipeline::scored_line(item, opt.discriminant.report_thresholds));
  if (out.empty()) {
    for (const auto& l : lines) std::cout << l << '\n';
  } else {
    pipeline::write_lines(out, lines);
  }
  const std::string report_text = pipeline::score_report_json(result.report, opt.discriminant.report_thresholds);
  if (!report.empty()) pipeline::write_text(report, report_text + "\n");
  if (!hist_dir.empty()) {
    pipeline::write_text(fs::path(hist_dir) / "s_clipped_hist.csv", result.report.s_clipped_histogram.to_csv());
    pipeline::write_text(fs::path(hist_dir) / "phi_hist.csv", result.report.phi_histogram.to_csv());
  }
  if (result.report.failed > 0) std::cerr << "ddt: " << result.report.failed << " item(s) failed to score\n";
  return kOk;
}

int cmd_classify(const GlobalFlags& g, const std::string& input, const std::string& out, bool fail_on_ood) {
  const auto corpus = pipeline::read_corpus(input);
  const LanguageModel model = load(g);
  pipeline::ScoreOptions opt;
  opt.discriminant = discriminant(g);
  opt.prompt_template = g.prompt_template;
  opt.workers = g.workers;
  const auto result = pipeline::score_dataset(corpus, model, opt);

  std::vector<std::string> lines;
  for (const auto& item : result.items) {
    nlohmann::ordered_json j;
    j["id"] = item.id;
    if (item.score) {
      j["verdict"] = std::string(to_string(item.score->verdict));
      j["s_clipped_final"] = item.score->s_clipped_final;
      j["threshold"] = item.score->threshold;
      j["v_cumulative"] = item.score->v_cumulative;
    } else {
      j["error"] = item.error;
    }
    lines.push_back(j.dump());
  }
  if (out.empty()) {
    for (const auto& l : lines) std::cout << l << '\n';
  } else {
    pipeline::write_lines(out, lines);
  }
  std::cerr << "ddt: " << result.report.in_distribution << " in-distribution, " << result.report.out_of_distribution
            << " out-of-distribution, " << result.report.failed << " failed\n";
  return fail_on_ood && result.report.out_of_distribution > 0 ? kCheckFailed : kOk;
}

int cmd_decode(const GlobalFlags& g, const HintedFlags& h, const std::string& question, const std::string& answer,
               const std::string& mode, const std::string& trace_path, bool as_json) {
  const LanguageModel model = load(g);
  const hd::HintedConfig cfg = hinted_config(h, model.tokenizer, g.seed);
  const CounterRng rng(CounterRng::mix(g.seed));

  std::vector<TokenId> tokens;
  std::optional<hd::DecodeResult> result;
  if (mode == "hinted") {
    result = hd::decode(question, answer, cfg, *model.provider, model.tokenizer, rng);
    tokens = result->response;
  } else if (mode == "imitator") {
    tokens = hd::imitator_only_decode(question, answer, cfg, *model.provider, model.tokenizer, rng);
  } else if (mode == "drafter") {
    tokens = hd::drafter_only_decode(question, cfg, *model.provider, model.tokenizer, rng);
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown --mode: " + mode);
  }

  if (!trace_path.empty()) {
    if (!result) throw Error(ErrorCode::InvalidArgument, "--trace requires --mode hinted");
    pipeline::write_text(trace_path, hd::trace_to_json_line("decode", result->trace) + "\n");
  }
  const std::string text = model.tokenizer.decode(tokens);
  if (as_json) {
    nlohmann::ordered_json j;
    j["response"] = text;
    j["tokens"] = tokens;
    j["truncated"] = result ? result->truncated : false;
    std::cout << j.dump() << '\n';
  } else {
    std::cout << text << '\n';
  }
  return kOk;
}

struct RealignFlags {
  std::string input;
  std::string out;
  std::string dropped;
  std::string report;
  std::size_t rollouts = 1;
  std::string verifier = "boxed_exact";
  bool lowercase = false;
  SamplerFlags rollout;
};

int cmd_realign(const GlobalFlags& g, const HintedFlags& h, const RealignFlags& r) {
  const auto corpus = pipeline::read_corpus(r.input);
  const LanguageModel model = load(g);
  pipeline::RealignOptions opt;
  opt.hinted = hinted_config(h, model.tokenizer, g.seed);
  opt.rollout_sampler = r.rollout.config(g.seed);
  opt.verifier.kind = pipeline::VerifierSpec::parse_kind(r.verifier);
  opt.verifier.lowercase = r.lowercase;
  opt.discriminant = discriminant(g);
  opt.seed = g.seed;
  opt.rollouts = r.rollouts;
  opt.workers = g.workers;
  const auto result = pipeline::realign(corpus, model, opt);

  std::vector<std::string> kept;
  for (const auto& item : result.items) kept.push_back(pipeline::realigned_line(item));
  std::vector<std::string> dropped;
  for (const auto& item : result.dropped) dropped.push_back(pipeline::dropped_line(item));
  pipeline::write_lines(r.out, kept);
  pipeline::write_lines(r.dropped.empty() ? r.out + ".dropped.jsonl" : r.dropped, dropped);
  const std::string report = pipeline::realign_report_json(result.report);
  if (r.report.empty()) {
    std::cout << report << '\n';
  } else {
    pipeline::write_text(r.report, report + "\n");
  }
  return kOk;
}

int cmd_idft(const GlobalFlags& g, const std::string& input, const std::string& out, const std::string& scheme,
             double tau) {
  // Accepts plain corpora as well as realigned output (rows without "answer").
  std::vector<pipeline::DatasetItem> corpus;
  try {
    corpus = pipeline::read_corpus(input);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::InvalidArgument) throw;
    corpus = pipeline::read_realigned(input);
  }
  const LanguageModel model = load(g);
  pipeline::ExportOptions opt;
  opt.weights.scheme = idft::parse_scheme(scheme);
  opt.weights.tau = tau;
  opt.weights.clip_bound = g.clip_bound;
  opt.prompt_template = g.prompt_template;
  opt.workers = g.workers;
  const auto result = pipeline::idft_export(corpus, model, opt);
  if (out.empty()) {
    for (const auto& l : result.lines) std::cout << l << '\n';
  } else {
    pipeline::write_lines(out, result.lines);
  }
  for (const auto& f : result.failures) std::cerr << "ddt: " << f.id << ": " << f.error << '\n';
  return kOk;
}

int cmd_validate(const GlobalFlags& g, std::size_t trials, std::size_t sequences, bool fault, const std::string& out) {
  validation::TheoryOptions opt;
  opt.seed = g.seed;
  opt.trials = trials;
  opt.coverage_sequences = sequences;
  opt.inject_fault = fault;
  const auto report = validation::validate_theory(opt);
  const std::string text = report.to_json();
  if (out.empty()) {
    std::cout << text << '\n';
  } else {
    pipeline::write_text(out, text + "\n");
  }
  for (const auto& c : report.checks) {
    std::cerr << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
  }
  return report.passed() ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distribution discriminant toolkit: CLL scoring, Hinted Decoding, IDFT weights"};
  app.set_config("--config", "", "read flags from an INI/TOML file (flags on the command line win)");
  app.require_subcommand(1);
  bool show_config = false;
  app.add_flag("--show-config", show_config, "print the effective configuration and exit");

  GlobalFlags g;
  app.add_option("--seed", g.seed, "global seed")->capture_default_str();
  app.add_option("--provider", g.provider, "provider spec JSON");
  app.add_option("--workers", g.workers, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--clip-bound", g.clip_bound, "clip bound B for phi")->capture_default_str();
  app.add_option("--alpha", g.alpha, "false-positive level for the Freedman threshold")->capture_default_str();
  app.add_option("--gamma", g.gamma, "fixed threshold instead of --alpha");
  app.add_option("--thresholds", g.thresholds, "report thresholds for extreme-token fractions")
      ->capture_default_str();
  app.add_option("--prompt-template", g.prompt_template, "prompt rendered before scored responses")
      ->capture_default_str();

  std::string input, out, report, hist_dir;
  std::size_t bins = 20;
  CLI::App* score = app.add_subcommand("score", "per-token CLL scores for a corpus");
  score->add_option("--input,-i", input, "corpus JSONL")->required();
  score->add_option("--out,-o", out, "scored JSONL (stdout if omitted)");
  score->add_option("--report", report, "aggregate report JSON");
  score->add_option("--histograms", hist_dir, "directory for histogram CSVs");
  score->add_option("--bins", bins, "histogram bins")->capture_default_str();

  bool fail_on_ood = false;
  CLI::App* classify = app.add_subcommand("classify", "in/out-of-distribution verdict per item");
  classify->add_option("--input,-i", input, "corpus JSONL")->required();
  classify->add_option("--out,-o", out, "verdict JSONL (stdout if omitted)");
  classify->add_flag("--fail-on-ood", fail_on_ood, "exit 1 when any item is out of distribution");

  HintedFlags hinted;
  std::string question, answer, mode = "hinted", trace;
  bool as_json = false;
  CLI::App* decode = app.add_subcommand("decode", "Hinted Decoding of one question");
  decode->add_option("--question,-q", question, "question text")->required();
  decode->add_option("--answer,-a", answer, "reference answer text")->required();
  decode->add_option("--mode", mode, "hinted, imitator or drafter")->capture_default_str();
  decode->add_option("--trace", trace, "write the decode trace JSONL here");
  decode->add_flag("--json", as_json, "print a JSON object instead of plain text");
  add_hinted_flags(decode, hinted);

  RealignFlags rf;
  CLI::App* realign = app.add_subcommand("realign", "rollout, verify and hinted-decode failures");
  realign->add_option("--input,-i", rf.input, "corpus JSONL")->required();
  realign->add_option("--out,-o", rf.out, "realigned JSONL")->required();
  realign->add_option("--dropped", rf.dropped, "dropped-item sidecar (default: <out>.dropped.jsonl)");
  realign->add_option("--report", rf.report, "report JSON (stdout if omitted)");
  realign->add_option("--rollouts", rf.rollouts, "student rollouts per item")->capture_default_str();
  realign->add_option("--verifier", rf.verifier, "boxed_exact or normalized_match")->capture_default_str();
  realign->add_flag("--lowercase", rf.lowercase, "case-insensitive answer comparison");
  add_sampler_flags(realign, rf.rollout, "rollout-", "rollout");
  add_hinted_flags(realign, hinted);

  std::string scheme = "idft";
  double tau = -5.0;
  CLI::App* weights = app.add_subcommand("idft-weights", "per-token loss weights for fine-tuning");
  weights->add_option("--input,-i", input, "realigned or corpus JSONL")->required();
  weights->add_option("--out,-o", out, "weight JSONL (stdout if omitted)");
  weights->add_option("--scheme", scheme, "sft, dft, idft or hard-truncate")->capture_default_str();
  weights->add_option("--tau", tau, "hard-truncate threshold")->capture_default_str();

  std::size_t trials = 100000;
  std::size_t sequences = 10000;
  bool inject_fault = false;
  CLI::App* validate = app.add_subcommand("validate-theory", "property checks on built-in toy models");
  validate->add_option("--trials", trials, "self-sampled tokens for the martingale check")->capture_default_str();
  validate->add_option("--sequences", sequences, "sequences for the coverage check")->capture_default_str();
  validate->add_flag("--inject-fault", inject_fault, "use an unnormalized provider (negative control)");
  validate->add_option("--out,-o", out, "report JSON (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::RequiredError& e) {
    // --show-config needs no subcommand arguments.
    if (!show_config) {
      app.exit(e);
      return kUsage;
    }
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  if (show_config) {
    std::cout << app.config_to_str(true, true);
    return kOk;
  }

  // Sampling commands need an explicit seed, from the command line or a config file.
  if ((*decode || *realign) && app.get_option("--seed")->count() == 0 && app.get_option("--config")->count() == 0) {
    std::cerr << "ddt: --seed is required for sampling commands\n";
    return kUsage;
  }

  try {
    if (*score) return cmd_score(g, input, out, report, hist_dir, bins);
    if (*classify) return cmd_classify(g, input, out, fail_on_ood);
    if (*decode) return cmd_decode(g, hinted, question, answer, mode, trace, as_json);
    if (*realign) return cmd_realign(g, hinted, rf);
    if (*weights) return cmd_idft(g, input, out, scheme, tau);
    if (*validate) return cmd_validate(g, trials, sequences, inject_fault, out);
  } catch (const Error& e) {
    std::cerr << "ddt: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "ddt: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
