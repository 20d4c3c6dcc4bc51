// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#include <doctest.h>

#include <cmath>
#include <vector>

#include <json.hpp>

#include "ddt/error.hpp"
#include "ddt/idft.hpp"

using namespace ddt;
using namespace ddt::idft;

namespace {

SequenceScore scored(const std::vector<std::pair<double, double>>& logprob_phi) {
  SequenceScore s;
  for (const auto& [lp, ph] : logprob_phi) {
    PhiRecord r;
    r.log_prob = lp;
    r.phi = ph;
    r.phi_clipped = clip_phi(ph, kDefaultClipBound);
    s.records.push_back(r);
  }
  return s;
}

TokenWeightRecord with_loss(double loss) {
  TokenWeightRecord r;
  r.loss = loss;
  return r;
}

}  // namespace

TEST_CASE("gamma_of_phi examples") {
  CHECK(gamma_of_phi(0.0) == 1.0);
  CHECK(gamma_of_phi(std::log(2.0)) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(gamma_of_phi(-1.0) == doctest::Approx(std::exp(1.0)).epsilon(1e-15));
}

TEST_CASE("idft_token_loss examples") {
  CHECK(idft_token_loss(0.0, 3.0) == 0.0);
  CHECK(std::abs(idft_token_loss(std::log(0.5), 1.0) - 0.34657359027997264) < 1e-15);
  CHECK(idft_token_loss(std::log(0.3), 2.0) < idft_token_loss(std::log(0.3), 1.0));
  // Deep log-probs stay finite.
  CHECK(std::isfinite(idft_token_loss(-50.0, 20.0)));
  CHECK(idft_token_loss(-50.0, 20.0) >= 0.0);
}

TEST_CASE("sequence_loss examples") {
  std::vector<TokenWeightRecord> one = {with_loss(0.0)};
  CHECK(sequence_loss(one) == 0.0);
  std::vector<TokenWeightRecord> two = {with_loss(0.2), with_loss(0.4)};
  CHECK(sequence_loss(two) == doctest::Approx(0.3));
  CHECK(sequence_loss(two, {true, false}) == doctest::Approx(0.2));
  CHECK_THROWS_AS(sequence_loss(two, {false, false}), Error);
  CHECK_THROWS_AS(sequence_loss(two, {true}), Error);
  CHECK_THROWS_AS(sequence_loss({}), Error);
}

TEST_CASE("gradient_scale examples") {
  const double lp = std::log(0.1);
  WeightConfig sft{Scheme::Sft};
  WeightConfig dft{Scheme::Dft};
  WeightConfig idft{Scheme::Idft};
  CHECK(gradient_scale(sft, lp, -3.0) == 1.0);
  CHECK(gradient_scale(dft, lp, -3.0) == doctest::Approx(0.1));
  CHECK(idft_weight(lp, 0.0) == 1.0);
  CHECK(gradient_scale(idft, lp, 0.0) == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(gradient_scale(idft, lp, -std::log(2.0)) == doctest::Approx(0.01).epsilon(1e-12));
  WeightConfig hard{Scheme::HardTruncate, -5.0};
  CHECK(gradient_scale(hard, lp, -5.0) == 0.0);
  CHECK(gradient_scale(hard, lp, -4.9) == 1.0);
}

TEST_CASE("weight_stream examples") {
  SUBCASE("idft at equilibrium equals dft") {
    const auto s = scored({{std::log(0.3), 0.0}, {std::log(0.8), 0.0}});
    const auto w = weight_stream(s, WeightConfig{Scheme::Idft});
    for (const auto& r : w) {
      CHECK(r.gamma == 1.0);
      CHECK(r.weight == doctest::Approx(std::exp(r.log_prob)).epsilon(1e-15));
      CHECK(r.loss == doctest::Approx(-std::exp(r.log_prob) * r.log_prob).epsilon(1e-15));
    }
  }
  SUBCASE("hard truncation masks") {
    const auto s = scored({{-2.0, -6.0}, {-1.0, -1.0}});
    const auto w = weight_stream(s, WeightConfig{Scheme::HardTruncate, -5.0});
    CHECK(w[0].weight == 0.0);
    CHECK(w[1].weight == 1.0);
  }
  SUBCASE("sft ignores phi") {
    const auto s = scored({{-2.0, -9.0}, {-0.1, 4.0}, {-3.0, 0.0}});
    for (const auto& r : weight_stream(s, WeightConfig{Scheme::Sft})) CHECK(r.weight == 1.0);
  }
  SUBCASE("gamma comes from the clipped phi") {
    const auto s = scored({{-60.0, -40.0}});
    const auto w = weight_stream(s, WeightConfig{Scheme::Idft});
    CHECK(w[0].phi_clipped == -10.0);
    CHECK(w[0].gamma == doctest::Approx(std::exp(10.0)));
    CHECK(w[0].log_prob == -50.0);
    CHECK(w[0].weight >= 0.0);
  }
}

TEST_CASE("scheme names") {
  CHECK(parse_scheme("idft") == Scheme::Idft);
  CHECK(parse_scheme("hard-truncate") == Scheme::HardTruncate);
  CHECK(parse_scheme("hard_truncate") == Scheme::HardTruncate);
  CHECK(to_string(Scheme::Dft) == "dft");
  CHECK_THROWS_AS(parse_scheme("eaft"), Error);
  WeightConfig bad;
  bad.clip_bound = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("export line layout") {
  const auto s = scored({{std::log(0.5), 0.1234567891234}, {std::log(0.25), -1.0}});
  const auto w = weight_stream(s, WeightConfig{Scheme::Idft});
  const std::vector<TokenId> ids = {4, 7};
  const std::string line = export_line("x1", ids, w);
  const auto j = nlohmann::ordered_json::parse(line);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  CHECK(keys == std::vector<std::string>{"id", "token_ids", "log_probs", "phi", "gamma", "weight", "loss"});
  CHECK(j["phi"][0].get<double>() == 0.123456789);
  CHECK(j["token_ids"][1] == 7);
  CHECK(std::abs(j["weight"][1].get<double>() - w[1].weight) <= 5e-9 * w[1].weight);
  CHECK_THROWS_AS(export_line("x", std::vector<TokenId>{1}, w), Error);
}

TEST_CASE("property: loss decreases in gamma and gate regimes") {
  for (double p = 0.01; p < 0.995; p += 0.01) {
    const double lp = std::log(p);
    double prev = idft_token_loss(lp, 0.05);
    for (double g = 0.1; g <= 10.0; g += 0.1) {
      const double loss = idft_token_loss(lp, g);
      CHECK(loss < prev);
      CHECK(loss >= 0.0);
      prev = loss;
    }
    WeightConfig idft{Scheme::Idft};
    CHECK(gradient_scale(idft, lp, -0.5) < p);
    CHECK(gradient_scale(idft, lp, 0.5) > p);
    CHECK(idft_token_loss(lp, gamma_of_phi(0.0)) == doctest::Approx(-p * lp).epsilon(1e-14));
  }
}
