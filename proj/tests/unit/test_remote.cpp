// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#include <doctest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "ddt/error.hpp"
#include "ddt/remote_provider.hpp"
#include "ddt/stats.hpp"

using namespace ddt;
using nlohmann::json;

namespace {

// Local completions server; the handler sees the parsed request body.
class MockServer {
 public:
  using Handler = std::function<void(const json&, httplib::Response&)>;

  explicit MockServer(Handler handler) : handler_(std::move(handler)) {
    server_.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests;
      last_auth = req.get_header_value("Authorization");
      handler_(json::parse(req.body), res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockServer() {
    server_.stop();
    thread_.join();
  }

  RemoteSpec spec() const {
    RemoteSpec s;
    s.endpoint_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1/completions";
    s.model_name = "toy";
    s.top_logprob_count = 2;
    s.vocab_size = 5;
    s.timeout_ms = 2000;
    s.max_retries = 2;
    return s;
  }

  std::atomic<int> requests{0};
  std::string last_auth;

 private:
  Handler handler_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

json top(std::vector<std::pair<std::string, double>> entries) {
  json o = json::object();
  for (const auto& [k, v] : entries) o[k] = v;
  return o;
}

void reply(httplib::Response& res, const json& logprobs) {
  res.set_content(json{{"choices", json::array({json{{"logprobs", logprobs}}})}}.dump(), "application/json");
}

}  // namespace

TEST_CASE("token key parsing") {
  CHECK(RemoteProvider::parse_token_key("token_id:17") == 17);
  CHECK(RemoteProvider::parse_token_key("3") == 3);
  CHECK_THROWS_AS(RemoteProvider::parse_token_key("hello"), Error);
  CHECK_THROWS_AS(RemoteProvider::parse_token_key("token_id:-1"), Error);
  CHECK_THROWS_AS(RemoteProvider::parse_token_key("12x"), Error);
}

TEST_CASE("remote spec validation") {
  RemoteSpec s;
  CHECK_THROWS_AS(s.validate(), Error);
  s.endpoint_url = "http://localhost:1/v1/completions";
  s.vocab_size = 4;
  s.top_logprob_count = 0;
  CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("remote next distribution is truncated and normalized") {
  MockServer server([](const json& body, httplib::Response& res) {
    CHECK(body.at("echo") == false);
    CHECK(body.at("max_tokens") == 1);
    CHECK(body.at("logprobs") == 2);
    CHECK(body.at("prompt") == json::array({1, 2}));
    reply(res, {{"top_logprobs", json::array({top({{"token_id:3", std::log(0.6)}, {"token_id:0", std::log(0.3)}})})}});
  });
  RemoteProvider provider(server.spec());
  std::vector<TokenId> ctx = {1, 2};
  const auto d = provider.next_distribution(ctx);
  CHECK_FALSE(d.is_full());
  CHECK(d.vocab_size() == 5);
  REQUIRE(d.tail().has_value());
  std::vector<double> all(d.log_probs().begin(), d.log_probs().end());
  all.push_back(d.tail()->tail_log_mass);
  CHECK(std::abs(log_sum_exp(all)) < 1e-6);
  CHECK(std::exp(*d.log_prob(3)) == doctest::Approx(0.6));
  const PhiRecord r = phi(d, 3);
  CHECK(r.approximate);
}

TEST_CASE("remote echo scoring covers every continuation token") {
  MockServer server([](const json& body, httplib::Response& res) {
    CHECK(body.at("echo") == true);
    const auto& prompt = body.at("prompt");
    REQUIRE(prompt.size() == 4);
    json tops = json::array();
    json tokens = json::array();
    tops.push_back(nullptr);
    tokens.push_back(nullptr);
    for (std::size_t i = 1; i < prompt.size(); ++i) {
      tops.push_back(top({{"4", std::log(0.5)}, {"2", std::log(0.25)}}));
      tokens.push_back(std::log(0.1));
    }
    reply(res, {{"top_logprobs", tops}, {"token_logprobs", tokens}});
  });
  RemoteProvider provider(server.spec());
  const std::vector<TokenId> prompt = {1, 2};
  const std::vector<TokenId> cont = {4, 3};
  const auto dists = provider.score_continuation(prompt, cont);
  REQUIRE(dists.size() == 2);
  CHECK(std::exp(*dists[0].log_prob(4)) == doctest::Approx(0.5));
  // The observed token missing from the top list is added from token_logprobs.
  REQUIRE(dists[1].log_prob(3).has_value());
  CHECK(std::exp(*dists[1].log_prob(3)) == doctest::Approx(0.1));
  CHECK(server.requests == 1);
}

TEST_CASE("remote retries transient failures") {
  std::atomic<int> calls{0};
  MockServer server([&](const json&, httplib::Response& res) {
    if (calls++ < 2) {
      res.status = calls == 1 ? 503 : 429;
      return;
    }
    reply(res, {{"top_logprobs", json::array({top({{"0", std::log(0.5)}})})}});
  });
  RemoteProvider provider(server.spec());
  const auto d = provider.next_distribution(std::vector<TokenId>{1});
  CHECK(std::exp(*d.log_prob(0)) == doctest::Approx(0.5));
  CHECK(server.requests == 3);
}

TEST_CASE("remote gives up after the retry budget") {
  MockServer server([](const json&, httplib::Response& res) { res.status = 500; });
  RemoteProvider provider(server.spec());
  try {
    provider.next_distribution(std::vector<TokenId>{1});
    FAIL("expected ProviderUnavailable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ProviderUnavailable);
    CHECK(e.retryable());
  }
  CHECK(server.requests == 3);
}

TEST_CASE("remote unreachable endpoint is unavailable") {
  RemoteSpec s;
  s.endpoint_url = "http://127.0.0.1:1/v1/completions";
  s.vocab_size = 4;
  s.max_retries = 0;
  s.timeout_ms = 500;
  RemoteProvider provider(s);
  try {
    provider.next_distribution(std::vector<TokenId>{1});
    FAIL("expected ProviderUnavailable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ProviderUnavailable);
  }
}

TEST_CASE("remote malformed payloads are protocol errors") {
  int mode = 0;
  MockServer server([&](const json&, httplib::Response& res) {
    switch (mode) {
      case 0:
        res.set_content("not json", "application/json");
        break;
      case 1:
        res.set_content(R"({"choices": []})", "application/json");
        break;
      case 2:
        reply(res, {{"top_logprobs", json::array({top({{"bogus", -0.1}})})}});
        break;
      case 3:
        reply(res, {{"top_logprobs", json::array({top({{"1", 0.5}})})}});
        break;
      default:
        res.status = 400;
        res.set_content("bad request", "text/plain");
    }
  });
  RemoteProvider provider(server.spec());
  for (mode = 0; mode <= 4; ++mode) {
    CAPTURE(mode);
    try {
      provider.next_distribution(std::vector<TokenId>{1});
      FAIL("expected ProtocolError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ProtocolError);
      CHECK_FALSE(e.retryable());
    }
  }
  CHECK(server.requests == 5);
}

TEST_CASE("remote sends the api key as a bearer token") {
  MockServer server([](const json&, httplib::Response& res) {
    reply(res, {{"top_logprobs", json::array({top({{"0", std::log(0.9)}})})}});
  });
  ::setenv("DDT_TEST_REMOTE_KEY", "sekrit", 1);
  RemoteSpec s = server.spec();
  s.api_key_env_var = "DDT_TEST_REMOTE_KEY";
  RemoteProvider provider(s);
  provider.next_distribution(std::vector<TokenId>{1});
  CHECK(server.last_auth == "Bearer sekrit");
  ::unsetenv("DDT_TEST_REMOTE_KEY");
}

TEST_CASE("remote provider serves concurrent callers") {
  MockServer server([](const json&, httplib::Response& res) {
    reply(res, {{"top_logprobs", json::array({top({{"2", std::log(0.7)}})})}});
  });
  RemoteSpec s = server.spec();
  s.max_in_flight = 2;
  RemoteProvider provider(s);
  std::vector<std::thread> threads;
  std::atomic<int> ok{0};
  for (int i = 0; i < 6; ++i) {
    threads.emplace_back([&] {
      const auto d = provider.next_distribution(std::vector<TokenId>{1});
      if (d.log_prob(2)) ++ok;
    });
  }
  for (auto& t : threads) t.join();
  CHECK(ok == 6);
}
