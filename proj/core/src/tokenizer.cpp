// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#include "ddt/tokenizer.hpp"

#include <algorithm>
#include <charconv>
#include <set>

#include "ddt/error.hpp"

namespace ddt {
namespace {

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;  // stray continuation byte: treat as its own token
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

Tokenizer::Mode Tokenizer::parse_mode(std::string_view name) {
  if (name == "char" || name == "character" || name == "byte") return Mode::Character;
  if (name == "whitespace" || name == "word") return Mode::Whitespace;
  if (name == "token_ids" || name == "ids") return Mode::TokenIds;
  throw Error(ErrorCode::InvalidArgument, "unknown tokenizer mode: " + std::string(name));
}

std::vector<std::string> Tokenizer::split(std::string_view text) const {
  std::vector<std::string> out;
  if (mode_ == Mode::Character) {
    for (std::size_t i = 0; i < text.size();) {
      const std::size_t n = std::min(utf8_length(static_cast<unsigned char>(text[i])), text.size() - i);
      out.emplace_back(text.substr(i, n));
      i += n;
    }
    return out;
  }
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

void Tokenizer::index() {
  lookup_.clear();
  for (std::size_t i = 0; i < vocab_.size(); ++i) lookup_.emplace(vocab_[i], static_cast<TokenId>(i));
  const auto eos = find(kEos);
  if (!eos) throw Error(ErrorCode::InvalidArgument, "vocabulary lacks the <eos> token");
  eos_ = *eos;
  pad_ = find(kPad);
  unk_ = find(kUnk);
}

Tokenizer Tokenizer::build(Mode mode, std::span<const std::string> texts) {
  if (mode == Mode::TokenIds) throw Error(ErrorCode::InvalidArgument, "token-id corpora need an explicit vocab size");
  Tokenizer t;
  t.mode_ = mode;
  std::set<std::string> distinct;
  for (const auto& text : texts) {
    for (auto& tok : t.split(text)) distinct.insert(std::move(tok));
  }
  t.vocab_ = {std::string(kPad), std::string(kEos), std::string(kUnk)};
  for (const auto& tok : distinct) {
    if (tok != kPad && tok != kEos && tok != kUnk) t.vocab_.push_back(tok);
  }
  t.index();
  return t;
}

Tokenizer Tokenizer::from_vocab(Mode mode, std::vector<std::string> vocab) {
  Tokenizer t;
  t.mode_ = mode;
  t.vocab_ = std::move(vocab);
  t.index();
  if (t.lookup_.size() != t.vocab_.size()) throw Error(ErrorCode::InvalidArgument, "duplicate vocabulary entries");
  return t;
}

Tokenizer Tokenizer::identity(std::size_t vocab_size, TokenId eos_id, std::optional<TokenId> pad_id) {
  if (vocab_size < 2 || eos_id < 0 || static_cast<std::size_t>(eos_id) >= vocab_size) {
    throw Error(ErrorCode::InvalidArgument, "identity tokenizer needs vocab_size >= 2 and eos inside it");
  }
  Tokenizer t;
  t.mode_ = Mode::TokenIds;
  t.vocab_.reserve(vocab_size);
  for (std::size_t i = 0; i < vocab_size; ++i) t.vocab_.push_back(std::to_string(i));
  t.eos_ = eos_id;
  t.pad_ = pad_id;
  return t;
}

std::vector<TokenId> Tokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& tok : split(text)) {
    if (mode_ == Mode::TokenIds) {
      TokenId id = 0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), id);
      if (ec != std::errc() || ptr != tok.data() + tok.size() || id < 0 ||
          static_cast<std::size_t>(id) >= vocab_.size()) {
        throw Error(ErrorCode::InvalidArgument, "bad token id: " + tok);
      }
      ids.push_back(id);
      continue;
    }
    if (const auto id = find(tok)) {
      ids.push_back(*id);
    } else if (unk_) {
      ids.push_back(*unk_);
    } else {
      throw Error(ErrorCode::InvalidArgument, "token not in vocabulary: " + tok);
    }
  }
  return ids;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id == eos_ || (pad_ && id == *pad_)) continue;
    const std::string& tok = token(id);
    if (mode_ != Mode::Character && !out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

std::optional<TokenId> Tokenizer::find(std::string_view token) const {
  if (mode_ == Mode::TokenIds) {
    TokenId id = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), id);
    if (ec == std::errc() && ptr == token.data() + token.size() && id >= 0 &&
        static_cast<std::size_t>(id) < vocab_.size()) {
      return id;
    }
    return std::nullopt;
  }
  const auto it = lookup_.find(std::string(token));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

const std::string& Tokenizer::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) {
    throw Error(ErrorCode::InvalidArgument, "token id outside vocab: " + std::to_string(id));
  }
  return vocab_[static_cast<std::size_t>(id)];
}

}  // namespace ddt
