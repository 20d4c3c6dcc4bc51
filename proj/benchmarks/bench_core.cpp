// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#include <benchmark/benchmark.h>

#include <vector>

#include "ddt/hinted.hpp"
#include "ddt/sampling.hpp"
#include "ddt/stats.hpp"
#include "ddt/validation.hpp"

namespace {

void BM_Phi(benchmark::State& state) {
  ddt::CounterRng rng(1);
  const auto dist = ddt::validation::random_distribution(rng, static_cast<std::size_t>(state.range(0)));
  ddt::TokenId t = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ddt::phi(dist, t));
    t = (t + 1) % static_cast<ddt::TokenId>(state.range(0));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Phi)->RangeMultiplier(8)->Range(16, 1 << 17)->Complexity();

void BM_Fuse(benchmark::State& state) {
  ddt::CounterRng rng(2);
  const auto v = static_cast<std::size_t>(state.range(0));
  const auto a = ddt::validation::random_distribution(rng, v);
  const auto b = ddt::validation::random_distribution(rng, v);
  for (auto _ : state) benchmark::DoNotOptimize(ddt::hd::fuse_logprobs(a, b, 0.3));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Fuse)->RangeMultiplier(8)->Range(16, 1 << 17)->Complexity();

void BM_NgramNext(benchmark::State& state) {
  const auto lm = ddt::validation::toy_ngram(3, static_cast<std::size_t>(state.range(0)));
  std::vector<ddt::TokenId> ctx = {1, 2, 3, 4};
  for (auto _ : state) benchmark::DoNotOptimize(lm->next_distribution(ctx));
}
BENCHMARK(BM_NgramNext)->Arg(16)->Arg(256);

void BM_SplitterMatcher(benchmark::State& state) {
  ddt::CounterRng rng(4);
  std::vector<ddt::TokenId> stream(4096);
  for (auto& t : stream) t = static_cast<ddt::TokenId>(rng() % 4);
  ddt::hd::SplitterMatcher m({0, 1, 0, 2, 3});
  for (auto _ : state) {
    for (auto t : stream) benchmark::DoNotOptimize(m.push(t));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(stream.size()));
}
BENCHMARK(BM_SplitterMatcher);

void BM_Sample(benchmark::State& state) {
  ddt::CounterRng rng(5);
  const auto dist = ddt::validation::random_distribution(rng, static_cast<std::size_t>(state.range(0)));
  ddt::SamplerConfig cfg;
  cfg.top_p = 0.9;
  for (auto _ : state) benchmark::DoNotOptimize(ddt::sample(dist, cfg, rng));
}
BENCHMARK(BM_Sample)->Arg(64)->Arg(32000);

}  // namespace

BENCHMARK_MAIN();
