// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#include <doctest.h>

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "ddt/error.hpp"
#include "ddt/generate.hpp"
#include "ddt/providers.hpp"
#include "ddt/sampling.hpp"
#include "ddt/stats.hpp"
#include "ddt/tokenizer.hpp"
#include "ddt/validation.hpp"

using namespace ddt;

namespace {

double prob(const TokenDistribution& d, TokenId t) { return std::exp(*d.log_prob(t)); }

TokenDistribution dist(std::vector<double> p) { return TokenDistribution::from_probs(p); }

}  // namespace

TEST_CASE("whitespace tokenizer round trip") {
  const std::vector<std::string> texts = {"b a c", "a  a"};
  const Tokenizer tok = Tokenizer::build(Tokenizer::Mode::Whitespace, texts);
  CHECK(tok.vocab_size() == 6);
  CHECK(tok.token(0) == "<pad>");
  CHECK(tok.eos_id() == 1);
  CHECK(tok.token(3) == "a");
  const auto ids = tok.encode("c a b");
  CHECK(ids == std::vector<TokenId>{5, 3, 4});
  CHECK(tok.decode(ids) == "c a b");
  CHECK(tok.encode("zzz") == std::vector<TokenId>{*tok.unk_id()});
  std::vector<TokenId> with_specials = {3, 1, 0};
  CHECK(tok.decode(with_specials) == "a");
}

TEST_CASE("character tokenizer handles multibyte code points") {
  const std::vector<std::string> texts = {"héllo"};
  const Tokenizer tok = Tokenizer::build(Tokenizer::Mode::Character, texts);
  const auto ids = tok.encode("hé");
  CHECK(ids.size() == 2);
  CHECK(tok.decode(ids) == "hé");
}

TEST_CASE("token-id tokenizer") {
  const Tokenizer tok = Tokenizer::identity(10, 2, std::nullopt);
  CHECK(tok.encode("3 7 9") == std::vector<TokenId>{3, 7, 9});
  CHECK(tok.eos_id() == 2);
  CHECK_THROWS_AS(tok.encode("3 12"), Error);
}

TEST_CASE("explicit vocabulary needs an eos token") {
  CHECK_THROWS_AS(Tokenizer::from_vocab(Tokenizer::Mode::Whitespace, {"a", "b"}), Error);
  const auto tok = Tokenizer::from_vocab(Tokenizer::Mode::Whitespace, {"x", "<eos>", "<pad>"});
  CHECK(tok.eos_id() == 1);
  CHECK(tok.pad_id() == 2);
  CHECK(Tokenizer::parse_mode("char") == Tokenizer::Mode::Character);
}

TEST_CASE("greedy sampling") {
  const auto d = dist({0.2, 0.5, 0.3});
  CounterRng rng(1);
  SamplerConfig greedy;
  greedy.temperature = 0.0;
  for (int i = 0; i < 10; ++i) CHECK(sample(d, greedy, rng) == 1);
  CHECK(rng.counter() == 0);
  SamplerConfig top1;
  top1.top_k = 1;
  for (int i = 0; i < 10; ++i) CHECK(sample(d, top1, rng) == 1);
  CHECK(argmax(dist({0.4, 0.2, 0.4})) == 0);
}

TEST_CASE("sampling frequencies and reproducibility") {
  const auto d = dist({0.5, 0.5});
  SamplerConfig s;
  CounterRng a(77);
  CounterRng b(77);
  int ones = 0;
  for (int i = 0; i < 10000; ++i) {
    const TokenId x = sample(d, s, a);
    CHECK(x == sample(d, s, b));
    ones += x;
  }
  CHECK(std::abs(ones / 10000.0 - 0.5) < 0.02);
}

TEST_CASE("top-k and top-p restrict the candidates") {
  const auto d = dist({0.05, 0.5, 0.3, 0.15});
  CounterRng rng(3);
  SamplerConfig k2;
  k2.top_k = 2;
  SamplerConfig p60;
  p60.top_p = 0.6;
  SamplerConfig p80;
  p80.top_p = 0.75;
  for (int i = 0; i < 2000; ++i) {
    const TokenId a = sample(d, k2, rng);
    CHECK((a == 1 || a == 2));
    const TokenId b = sample(d, p60, rng);
    CHECK((b == 1 || b == 2));
    const TokenId c = sample(d, p80, rng);
    CHECK((c == 1 || c == 2));
  }
  SamplerConfig p40;
  p40.top_p = 0.4;
  for (int i = 0; i < 100; ++i) CHECK(sample(d, p40, rng) == 1);
}

TEST_CASE("temperature sharpens before filtering") {
  const auto d = dist({0.3, 0.7});
  SamplerConfig cold;
  cold.temperature = 0.05;
  CounterRng rng(9);
  int ones = 0;
  for (int i = 0; i < 1000; ++i) ones += sample(d, cold, rng);
  CHECK(ones > 995);
}

TEST_CASE("sampler validation") {
  SamplerConfig s;
  s.top_p = 0.0;
  CHECK_THROWS_AS(s.validate(), Error);
  s.top_p = 1.0;
  s.temperature = -1.0;
  CHECK_THROWS_AS(s.validate(), Error);
  s.temperature = 1.0;
  s.top_k = 0;
  CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("table provider uses the longest matching suffix") {
  const auto uniform = dist({0.25, 0.25, 0.25, 0.25});
  TableProvider table(uniform, {{{2}, dist({0.7, 0.1, 0.1, 0.1})}, {{1, 2}, dist({0.1, 0.1, 0.1, 0.7})}});
  std::vector<TokenId> none = {3};
  std::vector<TokenId> short_match = {0, 2};
  std::vector<TokenId> long_match = {1, 2};
  CHECK(prob(table.next_distribution(none), 0) == doctest::Approx(0.25));
  CHECK(prob(table.next_distribution(short_match), 0) == doctest::Approx(0.7));
  CHECK(prob(table.next_distribution(long_match), 3) == doctest::Approx(0.7));
  CHECK(table.next_distribution(std::vector<TokenId>{}).is_full());
}

TEST_CASE("n-gram counting examples") {
  SUBCASE("alternating stream") {
    const std::vector<TokenId> stream = {0, 1, 0, 1};
    const auto lm = NgramModel::train_stream(stream, 3, 1, 1e-9);
    std::vector<TokenId> ctx = {0};
    CHECK(prob(lm.next_distribution(ctx), 1) > 1.0 - 1e-6);
  }
  SUBCASE("add-one smoothing") {
    // vocabulary {a, b, EOS} as ids {0, 1, 2}
    const std::vector<TokenId> stream = {0, 0, 0, 0};
    const auto lm = NgramModel::train_stream(stream, 3, 1, 1.0);
    std::vector<TokenId> ctx = {0};
    CHECK(prob(lm.next_distribution(ctx), 0) == doctest::Approx(4.0 / 6.0).epsilon(1e-12));
    CHECK(lm.count(ctx, 0) == 3);
  }
  SUBCASE("unseen context is uniform") {
    const std::vector<TokenId> stream = {0, 0, 0, 0};
    const auto lm = NgramModel::train_stream(stream, 3, 1, 0.5);
    std::vector<TokenId> ctx = {1};
    const auto d = lm.next_distribution(ctx);
    for (TokenId t = 0; t < 3; ++t) CHECK(prob(d, t) == doctest::Approx(1.0 / 3.0));
    CHECK_FALSE(lm.has_context(ctx));
  }
  SUBCASE("empty corpus") { CHECK_THROWS_AS(NgramModel::train_stream({}, 3, 1, 1.0), Error); }
  SUBCASE("invalid order or smoothing") {
    const std::vector<TokenId> stream = {0, 1};
    CHECK_THROWS_AS(NgramModel::train_stream(stream, 3, 0, 1.0), Error);
    CHECK_THROWS_AS(NgramModel::train_stream(stream, 3, 1, 0.0), Error);
  }
}

TEST_CASE("n-gram training is deterministic") {
  const std::vector<std::vector<TokenId>> seqs = {{3, 4, 5}, {3, 5, 4, 4}};
  const auto a = NgramModel::train_sequences(seqs, 6, 2, 0.1, 0, 1);
  const auto b = NgramModel::train_sequences(seqs, 6, 2, 0.1, 0, 1);
  for (const auto& ctx : std::vector<std::vector<TokenId>>{{}, {3}, {3, 4}, {4, 4}, {2, 2}}) {
    const auto da = a.next_distribution(ctx);
    const auto db = b.next_distribution(ctx);
    for (TokenId t = 0; t < 6; ++t) CHECK(*da.log_prob(t) == *db.log_prob(t));
  }
  // Sequence starts are padded: after nothing, token 3 is the most likely first token.
  CHECK(argmax(a.next_distribution(std::vector<TokenId>{})) == 3);
}

TEST_CASE("backoff uses the highest seen order") {
  const std::vector<std::vector<TokenId>> seqs = {{2, 3, 4}, {5, 3, 2}};
  const auto lm = BackoffNgram::train_sequences(seqs, 6, 2, 1e-6, 0, 1);
  CHECK(lm.max_order() == 2);
  std::vector<TokenId> seen2 = {2, 3};
  std::vector<TokenId> seen1_only = {4, 3};
  CHECK(prob(lm.next_distribution(seen2), 4) > 0.99);
  // Order-1 context {3} saw 4 and 2 once each.
  CHECK(prob(lm.next_distribution(seen1_only), 4) == doctest::Approx(0.5).epsilon(1e-4));
}

TEST_CASE("mixture provider") {
  auto a = std::make_shared<TableProvider>(dist({0.9, 0.1}), std::vector<TableProvider::Rule>{});
  auto b = std::make_shared<TableProvider>(dist({0.1, 0.9}), std::vector<TableProvider::Rule>{});
  MixtureProvider mix({a, b}, {0.25, 0.75});
  CHECK(prob(mix.next_distribution(std::vector<TokenId>{}), 0) == doctest::Approx(0.3));
  // Weights are renormalized.
  MixtureProvider scaled({a, b}, {1.0, 3.0});
  CHECK(prob(scaled.next_distribution(std::vector<TokenId>{}), 0) == doctest::Approx(0.3));
  CHECK_THROWS_AS(MixtureProvider({a, b}, {0.5, -0.1}), Error);
  CHECK_THROWS_AS(MixtureProvider({a, b}, {0.0, 0.0}), Error);
  CHECK_THROWS_AS(MixtureProvider({a}, {0.5, 0.5}), Error);
}

TEST_CASE("hint copy provider biases the hint region") {
  // ids: 0 pad, 1 eos, 2 <hint>, 3 </hint>, 4..7 words
  auto base = std::make_shared<TableProvider>(dist(std::vector<double>(8, 0.125)), std::vector<TableProvider::Rule>{});
  HintCopyProvider hc(base, {2, 3, 2.0, 6.0});
  std::vector<TokenId> plain = {4, 5};
  CHECK(prob(hc.next_distribution(plain), 4) == doctest::Approx(0.125));
  std::vector<TokenId> ctx = {2, 4, 6, 3, 4};
  const auto d = hc.next_distribution(ctx);
  CHECK(argmax(d) == 6);
  CHECK(prob(d, 4) > prob(d, 5));
  std::vector<double> lps(d.log_probs().begin(), d.log_probs().end());
  CHECK(std::abs(log_sum_exp(lps)) < 1e-9);
}

TEST_CASE("teacher forcing matches step-wise queries") {
  const auto lm = validation::toy_ngram(3, 8, 2000);
  const std::vector<TokenId> prompt = {1, 2};
  const std::vector<TokenId> cont = {3, 4, 5};
  const auto dists = lm->score_continuation(prompt, cont);
  REQUIRE(dists.size() == 3);
  std::vector<TokenId> ctx = prompt;
  for (std::size_t i = 0; i < cont.size(); ++i) {
    const auto d = lm->next_distribution(ctx);
    for (TokenId t = 0; t < 8; ++t) CHECK(*d.log_prob(t) == *dists[i].log_prob(t));
    ctx.push_back(cont[i]);
  }
}

TEST_CASE("generate stops on eos, stop sequence or length") {
  // ids: 0, 1 (eos), 2, 3
  const auto to2 = dist({0.0, 0.0, 1.0, 0.0});
  const auto to3 = dist({0.0, 0.0, 0.0, 1.0});
  const auto to_eos = dist({0.0, 1.0, 0.0, 0.0});
  TableProvider table(to2, {{{2}, to3}, {{3}, to_eos}});
  SamplerConfig s;
  CounterRng rng(0);
  const auto g = generate(table, std::vector<TokenId>{0}, s, 1, 10, rng);
  CHECK(g.tokens == std::vector<TokenId>{2, 3});
  CHECK(g.reason == StopReason::Eos);
  CounterRng rng2(0);
  const std::vector<TokenId> stop = {2, 3};
  const auto h = generate(table, std::vector<TokenId>{0}, s, 1, 10, rng2, stop);
  CHECK(h.reason == StopReason::StopSequence);
  CHECK(h.tokens == std::vector<TokenId>{2, 3});
  CounterRng rng3(0);
  const auto l = generate(table, std::vector<TokenId>{0}, s, 1, 1, rng3);
  CHECK(l.reason == StopReason::Length);
  CHECK(l.tokens.size() == 1);
}

TEST_CASE("property: ngram self-samples have near-zero mean phi") {
  const auto lm = validation::toy_ngram(21);
  CounterRng rng(5);
  const std::size_t n = 20000;
  const auto recs = validation::self_sample(*lm, n, rng);
  double mean = 0.0;
  double var = 0.0;
  for (const auto& r : recs) {
    mean += r.phi;
    var += r.conditional_variance;
  }
  mean /= static_cast<double>(n);
  var /= static_cast<double>(n);
  CHECK(std::abs(mean) <= 4.0 * std::sqrt(var / static_cast<double>(n)));
}

TEST_CASE("property: provider outputs are normalized") {
  const auto lm = validation::toy_ngram(17, 12, 3000);
  CounterRng rng(1);
  std::vector<TokenId> ctx;
  for (int i = 0; i < 200; ++i) {
    const auto d = lm->next_distribution(ctx);
    std::vector<double> lps(d.log_probs().begin(), d.log_probs().end());
    CHECK(std::abs(log_sum_exp(lps)) < 1e-9);
    ctx.push_back(sample(d, SamplerConfig{}, rng));
  }
}
