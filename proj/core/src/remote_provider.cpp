// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#include "ddt/remote_provider.hpp"

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <semaphore>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "ddt/error.hpp"

namespace ddt {
namespace {

using nlohmann::json;

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidArgument, "endpoint URL needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

TokenDistribution parse_position(const json& top, std::size_t vocab_size, std::optional<TokenId> observed,
                                 std::optional<double> observed_lp) {
  if (!top.is_object() || top.empty()) throw Error(ErrorCode::ProtocolError, "top_logprobs entry is not an object");
  std::vector<TokenId> ids;
  std::vector<double> lps;
  for (const auto& [key, value] : top.items()) {
    if (!value.is_number()) throw Error(ErrorCode::ProtocolError, "log-probability is not a number");
    ids.push_back(RemoteProvider::parse_token_key(key));
    lps.push_back(value.get<double>());
  }
  if (observed && observed_lp && std::find(ids.begin(), ids.end(), *observed) == ids.end()) {
    ids.push_back(*observed);
    lps.push_back(*observed_lp);
  }
  try {
    return TokenDistribution::truncated(std::move(ids), std::move(lps), vocab_size);
  } catch (const Error& e) {
    throw Error(ErrorCode::ProtocolError, e.what());
  }
}

}  // namespace

namespace {
json post_with_retries(const RemoteSpec& spec, const std::string& origin, const std::string& path,
                       const std::string& api_key, const json& body);
}  // namespace

struct RemoteProvider::Impl {
  ParsedUrl url;
  std::string api_key;
  std::counting_semaphore<1024> slots;

  // Bounds concurrent requests across threads sharing this provider.
  struct SlotGuard {
    std::counting_semaphore<1024>& s;
    explicit SlotGuard(std::counting_semaphore<1024>& sem) : s(sem) { s.acquire(); }
    ~SlotGuard() { s.release(); }
  };

  explicit Impl(const RemoteSpec& spec) : url(parse_url(spec.endpoint_url)), slots(static_cast<std::ptrdiff_t>(spec.max_in_flight)) {
    if (!spec.api_key_env_var.empty()) {
      if (const char* key = std::getenv(spec.api_key_env_var.c_str())) api_key = key;
    }
  }

  json post(const RemoteSpec& spec, const json& body) {
    SlotGuard guard(slots);
    return post_with_retries(spec, url.origin, url.path, api_key, body);
  }
};

void RemoteSpec::validate() const {
  if (endpoint_url.empty()) throw Error(ErrorCode::InvalidArgument, "remote provider needs endpoint_url");
  if (top_logprob_count < 1) throw Error(ErrorCode::InvalidArgument, "top_logprob_count must be >= 1");
  if (vocab_size < 2) throw Error(ErrorCode::InvalidArgument, "remote provider needs vocab_size >= 2");
  if (timeout_ms <= 0) throw Error(ErrorCode::InvalidArgument, "timeout_ms must be positive");
  if (max_retries < 0) throw Error(ErrorCode::InvalidArgument, "max_retries must be >= 0");
  if (max_in_flight < 1 || max_in_flight > 1024) throw Error(ErrorCode::InvalidArgument, "max_in_flight must be in [1,1024]");
}

RemoteProvider::RemoteProvider(RemoteSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  impl_ = std::make_unique<Impl>(spec_);
}

RemoteProvider::~RemoteProvider() = default;

TokenId RemoteProvider::parse_token_key(std::string_view key) {
  constexpr std::string_view prefix = "token_id:";
  if (key.substr(0, prefix.size()) == prefix) key.remove_prefix(prefix.size());
  TokenId id = 0;
  const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), id);
  if (ec != std::errc() || ptr != key.data() + key.size() || id < 0) {
    throw Error(ErrorCode::ProtocolError, "unparseable token key: " + std::string(key));
  }
  return id;
}

namespace {

json post_with_retries(const RemoteSpec& spec, const std::string& origin, const std::string& path,
                       const std::string& api_key, const json& body) {
  const std::string payload = body.dump();
  std::string last_error;
  for (int attempt = 0; attempt <= spec.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(50 * attempt));
    httplib::Client client(origin);
    const auto timeout = std::chrono::milliseconds(spec.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
    auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw Error(ErrorCode::ProtocolError, "HTTP " + std::to_string(res->status) + ": " + res->body);
    try {
      return json::parse(res->body);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ProtocolError, std::string("invalid JSON: ") + e.what());
    }
  }
  throw Error(ErrorCode::ProviderUnavailable, last_error);
}

const json& logprobs_of(const json& response) {
  try {
    return response.at("choices").at(0).at("logprobs");
  } catch (const json::exception&) {
    throw Error(ErrorCode::ProtocolError, "response lacks choices[0].logprobs");
  }
}

}  // namespace

TokenDistribution RemoteProvider::next_distribution(std::span<const TokenId> context) const {
  json body = {{"model", spec_.model_name},
               {"prompt", std::vector<TokenId>(context.begin(), context.end())},
               {"max_tokens", 1},
               {"temperature", 0.0},
               {"logprobs", spec_.top_logprob_count},
               {"echo", false},
               {"return_tokens_as_token_ids", true}};
  const json response = impl_->post(spec_, body);
  const auto& lp = logprobs_of(response);
  if (!lp.contains("top_logprobs") || !lp["top_logprobs"].is_array() || lp["top_logprobs"].empty()) {
    throw Error(ErrorCode::ProtocolError, "response lacks top_logprobs");
  }
  return parse_position(lp["top_logprobs"].front(), spec_.vocab_size, std::nullopt, std::nullopt);
}

std::vector<TokenDistribution> RemoteProvider::score_continuation(std::span<const TokenId> prompt,
                                                                  std::span<const TokenId> continuation) const {
  if (continuation.empty()) return {};
  std::vector<TokenId> all(prompt.begin(), prompt.end());
  all.insert(all.end(), continuation.begin(), continuation.end());
  json body = {{"model", spec_.model_name},
               {"prompt", all},
               {"max_tokens", 1},
               {"temperature", 0.0},
               {"logprobs", spec_.top_logprob_count},
               {"echo", true},
               {"return_tokens_as_token_ids", true}};
  const json response = impl_->post(spec_, body);

  const auto& lp = logprobs_of(response);
  const auto top = lp.find("top_logprobs");
  if (top == lp.end() || !top->is_array() || top->size() < all.size()) {
    throw Error(ErrorCode::ProtocolError, "echo response covers fewer positions than the prompt");
  }
  const json* token_lps = nullptr;
  if (auto it = lp.find("token_logprobs"); it != lp.end() && it->is_array() && it->size() >= all.size()) {
    token_lps = &*it;
  }
  std::vector<TokenDistribution> out;
  out.reserve(continuation.size());
  for (std::size_t i = prompt.size(); i < all.size(); ++i) {
    std::optional<double> observed_lp;
    if (token_lps && (*token_lps)[i].is_number()) observed_lp = (*token_lps)[i].get<double>();
    out.push_back(parse_position((*top)[i], spec_.vocab_size, all[i], observed_lp));
  }
  return out;
}

}  // namespace ddt
