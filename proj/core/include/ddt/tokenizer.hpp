// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ddt/distribution.hpp"

namespace ddt {

/// Toy tokenizers for desk-scale corpora. Token id = index in the vocabulary list.
///
///   Character  - one token per UTF-8 code point, decode concatenates
///   Whitespace - one token per whitespace-separated word, decode joins with ' '
///   TokenIds   - text is already whitespace-separated decimal ids
class Tokenizer {
 public:
  enum class Mode { Character, Whitespace, TokenIds };

  static constexpr std::string_view kPad = "<pad>";
  static constexpr std::string_view kEos = "<eos>";
  static constexpr std::string_view kUnk = "<unk>";

  /// Vocabulary = specials (pad, eos, unk at ids 0, 1, 2) followed by the sorted distinct
  /// tokens of `texts`.
  static Tokenizer build(Mode mode, std::span<const std::string> texts);
  /// Explicit vocabulary, used as-is. It must contain the eos special.
  static Tokenizer from_vocab(Mode mode, std::vector<std::string> vocab);
  /// Identity tokenizer over ids 0..vocab_size-1 (TokenIds mode).
  static Tokenizer identity(std::size_t vocab_size, TokenId eos_id, std::optional<TokenId> pad_id);

  Mode mode() const noexcept { return mode_; }
  std::size_t vocab_size() const noexcept { return vocab_.size(); }
  const std::vector<std::string>& vocab() const noexcept { return vocab_; }

  std::vector<TokenId> encode(std::string_view text) const;
  /// Skips pad and eos.
  std::string decode(std::span<const TokenId> ids) const;

  std::optional<TokenId> find(std::string_view token) const;
  const std::string& token(TokenId id) const;

  TokenId eos_id() const noexcept { return eos_; }
  std::optional<TokenId> pad_id() const noexcept { return pad_; }
  std::optional<TokenId> unk_id() const noexcept { return unk_; }

  static Mode parse_mode(std::string_view name);

 private:
  Tokenizer() = default;
  void index();
  std::vector<std::string> split(std::string_view text) const;

  Mode mode_ = Mode::Whitespace;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, TokenId> lookup_;
  TokenId eos_ = 1;
  std::optional<TokenId> pad_;
  std::optional<TokenId> unk_;
};

}  // namespace ddt
